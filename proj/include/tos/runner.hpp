#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "tos/config.hpp"
#include "tos/ct.hpp"
#include "tos/diagnostics.hpp"
#include "tos/sampling.hpp"

namespace tos {

struct RunnerOptions {
  std::optional<std::string> out_dir;     // overrides [output] dir
  std::optional<uint64_t> seed_override;  // overrides [problem] seed (TOS_SEED)
  bool override_unsafe = false;           // run with uncertified steps
  int threads = 1;                        // workers for the (algorithm, seed) grid
};

// Everything the run grid shares read-only: the assembled problem, operator
// norms, certified step sizes, and the reference solution when configured.
struct ExperimentSetup {
  ExperimentConfig cfg;  // overrides applied
  std::filesystem::path out_dir;
  CtModality modality = CtModality::SparseView;
  CtGeometry<double> geom;  // defaults filled
  CtExperiment<double> ct;
  Vec<double> norms;   // per-block operator norms (stochastic algorithms only)
  Vec<double> probs;   // sampling distribution
  StepSizes<double> steps;
  double norm_full = 0;  // full operator norm (deterministic baseline only)
  std::optional<ReferenceSolution<double>> reference;
};

// Loads cached phantom/sinogram files from the output directory when present
// (validating them against the config), generates and writes them otherwise.
// want_steps certifies the stochastic step sizes; want_reference resolves the
// reference per config (explicit file, cached file, or fresh computation).
ExperimentSetup prepare_experiment(ExperimentConfig cfg, const RunnerOptions& opt, bool want_steps,
                                   bool want_reference);

// Subcommand bodies. Errors surface as exceptions: ConfigError for schema or
// stale-cache problems, CertificationError for step-size failures,
// SolverAbort for non-finite iterates, IoError for file problems.
int cmd_solve(const ExperimentConfig& cfg, const RunnerOptions& opt);
int cmd_validate_steps(const ExperimentConfig& cfg, const RunnerOptions& opt);
int cmd_phantom(const ExperimentConfig& cfg, const RunnerOptions& opt);
int cmd_reference(const ExperimentConfig& cfg, const RunnerOptions& opt);

}  // namespace tos
