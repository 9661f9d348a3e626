#include "tos/io.hpp"

#include <bit>
#include <fstream>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "array files are little-endian; byte swapping is not implemented");

namespace tos {
namespace {

using nlohmann::json;

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw IoError("invalid JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed for " + path.string());
}

template <typename T>
T field(const json& j, const char* key, const std::filesystem::path& path) {
  if (!j.contains(key)) throw IoError(path.string() + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": bad field '" + key + "': " + e.what());
  }
}

}  // namespace

void write_doubles(const std::filesystem::path& path, const Vec<double>& v) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(sizeof(double)) * v.size());
  if (!out) throw IoError("write failed for " + path.string());
}

Vec<double> read_doubles(const std::filesystem::path& path, Index expected_size) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + path.string());
  const auto bytes = static_cast<int64_t>(in.tellg());
  if (bytes != expected_size * static_cast<int64_t>(sizeof(double)))
    throw IoError(path.string() + ": expected " + std::to_string(expected_size) +
                  " doubles, file holds " + std::to_string(bytes) + " bytes");
  in.seekg(0);
  Vec<double> v(expected_size);
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(sizeof(double)) * expected_size);
  if (!in) throw IoError("read failed for " + path.string());
  return v;
}

void save_phantom(const Phantom<double>& ph, const std::filesystem::path& bin,
                  const std::filesystem::path& sidecar) {
  write_doubles(bin, ph.values);
  json j;
  j["kind"] = "phantom";
  j["height"] = ph.height;
  j["width"] = ph.width;
  j["pixel_size"] = ph.pixel_size;
  write_json(sidecar, j);
}

Phantom<double> load_phantom(const std::filesystem::path& bin, const std::filesystem::path& sidecar) {
  const json j = read_json(sidecar);
  Phantom<double> ph;
  ph.height = field<int64_t>(j, "height", sidecar);
  ph.width = field<int64_t>(j, "width", sidecar);
  ph.pixel_size = field<double>(j, "pixel_size", sidecar);
  if (ph.height < 1 || ph.width < 1 || !(ph.pixel_size > 0))
    throw IoError(sidecar.string() + ": invalid phantom geometry");
  ph.values = read_doubles(bin, ph.height * ph.width);
  return ph;
}

void save_sinogram(const Sinogram<double>& sino, const std::filesystem::path& bin,
                   const std::filesystem::path& sidecar) {
  write_doubles(bin, sino.counts);
  json j;
  j["kind"] = "sinogram";
  j["n_angles"] = sino.n_angles;
  j["n_detectors"] = sino.n_detectors;
  j["i0"] = sino.i0;
  j["seed"] = sino.seed;
  write_json(sidecar, j);
}

Sinogram<double> load_sinogram(const std::filesystem::path& bin, const std::filesystem::path& sidecar) {
  const json j = read_json(sidecar);
  Sinogram<double> sino;
  sino.n_angles = field<int64_t>(j, "n_angles", sidecar);
  sino.n_detectors = field<int64_t>(j, "n_detectors", sidecar);
  sino.i0 = field<double>(j, "i0", sidecar);
  sino.seed = field<uint64_t>(j, "seed", sidecar);
  if (sino.n_angles < 1 || sino.n_detectors < 1 || !(sino.i0 > 0))
    throw IoError(sidecar.string() + ": invalid sinogram geometry");
  sino.counts = read_doubles(bin, sino.n_angles * sino.n_detectors);
  sino.log_data.resize(sino.counts.size());
  for (Index r = 0; r < sino.counts.size(); ++r)
    sino.log_data[r] = -std::log(std::max(sino.counts[r], 1.0) / sino.i0);
  return sino;
}

void save_reference(const ReferenceSolution<double>& ref, const RadonBlockOperator<double>& op,
                    const std::filesystem::path& bin, const std::filesystem::path& sidecar) {
  const Vec<double> y_global = op.global_from_blocks(ref.y_star);
  Vec<double> flat(ref.x_star.size() + y_global.size());
  flat << ref.x_star, y_global;
  write_doubles(bin, flat);
  json j;
  j["kind"] = "reference";
  j["dim"] = ref.x_star.size();
  j["dual_dim"] = y_global.size();
  j["certified"] = ref.certified;
  j["movement"] = ref.movement;
  j["iterations"] = ref.iterations;
  j["tol"] = ref.tol;
  write_json(sidecar, j);
}

ReferenceSolution<double> load_reference(const SaddleProblem<double>& prob,
                                         const RadonBlockOperator<double>& op,
                                         const std::filesystem::path& bin,
                                         const std::filesystem::path& sidecar) {
  const json j = read_json(sidecar);
  const auto dim = field<int64_t>(j, "dim", sidecar);
  const auto dual_dim = field<int64_t>(j, "dual_dim", sidecar);
  if (dim != prob.dim() || dual_dim != op.n_angles() * op.n_detectors())
    throw IoError(sidecar.string() + ": reference dims (" + std::to_string(dim) + ", " +
                  std::to_string(dual_dim) + ") do not match the configured problem");
  const Vec<double> flat = read_doubles(bin, dim + dual_dim);
  ReferenceSolution<double> ref;
  ref.x_star = flat.head(dim);
  ref.y_star = op.blocks_from_global(flat.tail(dual_dim));
  ref.certified = field<bool>(j, "certified", sidecar);
  ref.movement = field<double>(j, "movement", sidecar);
  ref.iterations = field<int64_t>(j, "iterations", sidecar);
  ref.tol = field<double>(j, "tol", sidecar);
  ref.finalize(prob);
  return ref;
}

}  // namespace tos
