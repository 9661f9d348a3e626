#pragma once

#include <filesystem>
#include <stdexcept>

#include "tos/ct.hpp"
#include "tos/diagnostics.hpp"
#include "tos/vec.hpp"

namespace tos {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat little-endian 64-bit reals; every array file has a JSON sidecar
// carrying dims and geometry so loads can be validated before use.
void write_doubles(const std::filesystem::path& path, const Vec<double>& v);
Vec<double> read_doubles(const std::filesystem::path& path, Index expected_size);

void save_phantom(const Phantom<double>& ph, const std::filesystem::path& bin,
                  const std::filesystem::path& sidecar);
Phantom<double> load_phantom(const std::filesystem::path& bin, const std::filesystem::path& sidecar);

// Counts are stored (integer-valued doubles, angle-major); the log transform
// is recomputed on load.
void save_sinogram(const Sinogram<double>& sino, const std::filesystem::path& bin,
                   const std::filesystem::path& sidecar);
Sinogram<double> load_sinogram(const std::filesystem::path& bin, const std::filesystem::path& sidecar);

// x* followed by y* in angle-major order, so the file does not depend on the
// subset partition in force when it was written.
void save_reference(const ReferenceSolution<double>& ref, const RadonBlockOperator<double>& op,
                    const std::filesystem::path& bin, const std::filesystem::path& sidecar);
ReferenceSolution<double> load_reference(const SaddleProblem<double>& prob,
                                         const RadonBlockOperator<double>& op,
                                         const std::filesystem::path& bin,
                                         const std::filesystem::path& sidecar);

}  // namespace tos
