#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tos {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Sectioned key-value experiment description. Every key has a schema entry;
// unknown keys and duplicate assignments are parse errors. A zero in the
// fields marked auto picks the modality default at build time, so a config
// that never mentions them tracks whichever modality it names.
struct ProblemSection {
  std::string modality = "sparse_view";  // sparse_view | low_dose
  int64_t height = 64;
  int64_t width = 64;
  int64_t angles = 0;     // auto: 60 sparse-view, 180 low-dose
  int64_t detectors = 0;  // auto: round(1.5 * width)
  int64_t subsets = 10;
  double lambda = 0.05;
  double i0 = 0;  // auto: 1e5 sparse-view, 1e4 low-dose
  uint64_t seed = 1;

  int64_t effective_angles() const { return angles > 0 ? angles : (modality == "low_dose" ? 180 : 60); }
  double effective_i0() const { return i0 > 0 ? i0 : (modality == "low_dose" ? 1e4 : 1e5); }

  bool operator==(const ProblemSection&) const = default;
};

struct SolverSection {
  std::vector<std::string> algorithms = {"tos", "condat_vu"};
  std::optional<int64_t> epochs;      // at most one of epochs/iterations; neither: 150 epochs
  std::optional<int64_t> iterations;  // stochastic iteration budget; deterministic runs round up to epochs
  double gamma = 0.99;
  double theta = 1.0;
  std::string sampling = "uniform";  // uniform | importance
  std::vector<uint64_t> seeds = {1};

  bool operator==(const SolverSection&) const = default;
};

struct OutputSection {
  std::string dir = "out";
  int64_t checkpoint_every = 1;          // epochs between rows; 0: final row only
  std::vector<int64_t> checkpoint_iters;  // explicit k schedule, replaces the cadence when nonempty
  bool timing = false;                    // off: seconds column written as 0 (keeps outputs byte-reproducible)

  bool operator==(const OutputSection&) const = default;
};

struct ReferenceSection {
  int64_t iterations = 0;  // 0: no reference, gap column left empty
  double tol = 1e-9;
  std::string file;  // load instead of computing when set

  bool operator==(const ReferenceSection&) const = default;
};

struct ExperimentConfig {
  ProblemSection problem;
  SolverSection solver;
  OutputSection output;
  ReferenceSection reference;

  bool operator==(const ExperimentConfig&) const = default;

  // Throws ConfigError on any schema violation.
  void validate() const;

  int64_t effective_epochs() const;  // requested run length in epochs
};

// Parses the sectioned text form; validates before returning.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Canonical text form: parse(serialize(c)) == c for any valid c.
std::string serialize_config(const ExperimentConfig& cfg);

// Hash of the canonical form with the output directory blanked, so runs that
// differ only in where they write share a hash.
uint64_t config_hash(const ExperimentConfig& cfg);
std::string config_hash_hex(const ExperimentConfig& cfg);

uint64_t fnv1a64(const std::string& bytes);

}  // namespace tos
