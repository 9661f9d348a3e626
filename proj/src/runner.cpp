#include "tos/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cstdio>
#include <thread>

#include "tos/csv.hpp"
#include "tos/io.hpp"
#include "tos/solvers.hpp"

namespace tos {
namespace {

namespace fs = std::filesystem;

struct CachePaths {
  fs::path phantom_bin, phantom_json, sino_bin, sino_json, ref_bin, ref_json;
  explicit CachePaths(const fs::path& dir)
      : phantom_bin(dir / "phantom.bin"),
        phantom_json(dir / "phantom.json"),
        sino_bin(dir / "sinogram.bin"),
        sino_json(dir / "sinogram.json"),
        ref_bin(dir / "reference.bin"),
        ref_json(dir / "reference.json") {}
};

ExperimentConfig apply_overrides(ExperimentConfig cfg, const RunnerOptions& opt) {
  if (opt.seed_override) cfg.problem.seed = *opt.seed_override;
  if (opt.out_dir) cfg.output.dir = *opt.out_dir;
  cfg.validate();
  return cfg;
}

CtGeometry<double> geometry_from(const ProblemSection& p) {
  CtGeometry<double> g;
  g.height = p.height;
  g.width = p.width;
  g.n_angles = p.effective_angles();
  g.n_detectors = p.detectors;
  g.n_subsets = p.subsets;
  g.fill_defaults();
  return g;
}

void check_cached_phantom(const Phantom<double>& ph, const CtGeometry<double>& geom,
                          const CachePaths& paths) {
  if (ph.height != geom.height || ph.width != geom.width || ph.pixel_size != geom.pixel_size)
    throw ConfigError("cached " + paths.phantom_bin.string() +
                      " does not match the configured geometry; delete it or fix the config");
}

void check_cached_sinogram(const Sinogram<double>& sino, const CtGeometry<double>& geom, double i0,
                           uint64_t seed, const CachePaths& paths) {
  if (sino.n_angles != geom.n_angles || sino.n_detectors != geom.n_detectors ||
      sino.i0 != i0 || sino.seed != seed)
    throw ConfigError("cached " + paths.sino_bin.string() +
                      " does not match the configured measurement; delete it or fix the config");
}

bool wants_algorithm(const ExperimentConfig& cfg, const std::string& a) {
  for (const auto& x : cfg.solver.algorithms)
    if (x == a) return true;
  return false;
}

}  // namespace

ExperimentSetup prepare_experiment(ExperimentConfig raw, const RunnerOptions& opt, bool want_steps,
                                   bool want_reference) {
  ExperimentSetup s;
  s.cfg = apply_overrides(std::move(raw), opt);
  s.out_dir = s.cfg.output.dir;
  fs::create_directories(s.out_dir);
  s.modality = s.cfg.problem.modality == "low_dose" ? CtModality::LowDose : CtModality::SparseView;
  s.geom = geometry_from(s.cfg.problem);
  const double i0 = s.cfg.problem.effective_i0();

  auto op = std::make_shared<RadonBlockOperator<double>>(
      s.geom.height, s.geom.width, uniform_angles<double>(s.geom.n_angles), s.geom.n_detectors,
      s.geom.n_subsets, s.geom.pixel_size);

  const CachePaths paths(s.out_dir);
  Phantom<double> phantom;
  if (fs::exists(paths.phantom_bin) && fs::exists(paths.phantom_json)) {
    phantom = load_phantom(paths.phantom_bin, paths.phantom_json);
    check_cached_phantom(phantom, s.geom, paths);
  } else {
    phantom = make_phantom<double>(s.geom.height, s.geom.width, s.geom.pixel_size);
    save_phantom(phantom, paths.phantom_bin, paths.phantom_json);
  }

  Sinogram<double> sino;
  if (fs::exists(paths.sino_bin) && fs::exists(paths.sino_json)) {
    sino = load_sinogram(paths.sino_bin, paths.sino_json);
    check_cached_sinogram(sino, s.geom, i0, s.cfg.problem.seed, paths);
  } else {
    sino = simulate_measurements(*op, phantom, i0, s.cfg.problem.seed);
    save_sinogram(sino, paths.sino_bin, paths.sino_json);
  }

  s.ct = assemble_experiment(s.modality, op, std::move(phantom), std::move(sino),
                             s.cfg.problem.lambda);

  if (want_steps) {
    s.norms = block_norms(*op);
    if (s.cfg.solver.sampling == "importance")
      s.probs = s.norms / s.norms.sum();
    else
      s.probs = Vec<double>::Constant(op->block_count(), 1.0 / double(op->block_count()));
    try {
      s.steps = preconditioned_step_rule(*op, s.norms, s.probs, s.ct.problem.L,
                                         s.cfg.solver.gamma);
    } catch (const CertificationError&) {
      if (!opt.override_unsafe) throw;
      // Uncertified fallback kept diagnosable: tau L < 1 for any gamma, so the
      // overapproximation certificates stay computable for the report table.
      s.steps.S = s.cfg.solver.gamma * s.probs.cwiseQuotient(s.norms);
      s.steps.T = DiagonalMetric<double>(
          s.cfg.solver.gamma / (s.cfg.solver.gamma * s.ct.problem.L + s.norms.maxCoeff()));
      s.steps.lipschitz = s.ct.problem.L;
      s.steps.valid = false;
    }
  }

  if (want_reference) {
    const auto& prob = s.ct.problem;
    if (!s.cfg.reference.file.empty()) {
      const fs::path bin = s.cfg.reference.file;
      fs::path sidecar = bin;
      sidecar.replace_extension(".json");
      s.reference = load_reference(prob, *op, bin, sidecar);
    } else if (fs::exists(paths.ref_bin) && fs::exists(paths.ref_json)) {
      s.reference = load_reference(prob, *op, paths.ref_bin, paths.ref_json);
    } else if (s.cfg.reference.iterations > 0) {
      s.reference = compute_reference(prob, s.cfg.reference.iterations, s.cfg.reference.tol,
                                      s.cfg.solver.gamma);
    }
    if (s.reference && !s.reference->certified)
      std::fprintf(stderr,
                   "warning: reference is not certified (movement %.3g above tol %.3g); "
                   "gap values may be inaccurate\n",
                   s.reference->movement, s.reference->tol);
  }
  return s;
}

int cmd_solve(const ExperimentConfig& raw, const RunnerOptions& opt) {
  const bool stochastic = wants_algorithm(raw, "tos") || wants_algorithm(raw, "spdhg");
  const ExperimentSetup setup = prepare_experiment(raw, opt, stochastic, true);
  const ExperimentConfig& cfg = setup.cfg;
  const auto& prob = setup.ct.problem;
  const Index n = prob.n();

  double norm_full = 0;
  if (wants_algorithm(cfg, "condat_vu"))
    norm_full = power_method_norm(FullOperatorView<double>(*setup.ct.op)).value;

  const std::string hash_hex = config_hash_hex(cfg);
  const int64_t epochs = cfg.effective_epochs();
  const int64_t k_stochastic = cfg.solver.iterations ? *cfg.solver.iterations : epochs * n;

  const Vec<double>& truth = setup.ct.phantom.values;
  const ReferenceSolution<double>* ref = setup.reference ? &*setup.reference : nullptr;
  MetricsFn<double> metrics = [&prob, &truth, ref](const CheckpointView<double>& v) {
    CheckpointMetrics<double> m;
    if (ref) m.gap = saddle_gap(prob, v.ergodic_x, v.ergodic_y, *ref);
    m.psnr = psnr(v.x, truth);
    return m;
  };

  struct Job {
    std::string algo;
    uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& algo : cfg.solver.algorithms)
    for (const uint64_t seed : cfg.solver.seeds) jobs.push_back({algo, seed});

  std::vector<RunRecord<double>> records(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());

  auto run_one = [&](const Job& job) {
    SolveOptions<double> sopts;
    sopts.checkpoint_every = cfg.output.checkpoint_every;
    sopts.checkpoint_iters = cfg.output.checkpoint_iters;
    sopts.metrics = metrics;
    sopts.allow_unsafe = opt.override_unsafe;
    sopts.seed = job.seed;
    sopts.config_hash = hash_hex;
    sopts.algorithm_tag = job.algo;

    SolveResult<double> res;
    if (job.algo == "condat_vu") {
      CondatVuOptions<double> copts;
      static_cast<SolveOptions<double>&>(copts) = sopts;
      copts.norm_A = norm_full;
      const auto [tau, sigma] = condat_vu_default_steps(norm_full, prob.L, cfg.solver.gamma);
      res = condat_vu(prob, tau, sigma, epochs, copts);
    } else {
      Sampler<double> sampler = cfg.solver.sampling == "importance"
                                    ? Sampler<double>::importance(setup.norms, job.seed)
                                    : Sampler<double>::uniform(n, job.seed);
      StepSizes<double> st = setup.steps;
      st.theta = cfg.solver.theta;
      res = job.algo == "tos" ? tos_spdhg(prob, st, sampler, k_stochastic, sopts)
                              : spdhg(prob, st, sampler, k_stochastic, sopts);
    }
    if (!cfg.output.timing)
      for (auto& row : res.record.rows) row.seconds = 0;
    return res.record;
  };

  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        records[i] = run_one(jobs[i]);
        const fs::path out =
            setup.out_dir / ("run_" + jobs[i].algo + "_" + std::to_string(jobs[i].seed) + ".csv");
        write_run_csv(out, records[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  const size_t n_workers =
      std::min<size_t>(jobs.size(), static_cast<size_t>(std::max(1, opt.threads)));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (size_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  write_summary_csv(setup.out_dir / "summary.csv", records);

  for (size_t i = 0; i < jobs.size(); ++i) {
    const auto& rows = records[i].rows;
    std::printf("run_%s_%" PRIu64 ".csv: %zu checkpoints", jobs[i].algo.c_str(), jobs[i].seed,
                rows.size());
    if (!rows.empty()) {
      std::printf(", final objective %.6g", rows.back().objective);
      if (rows.back().gap) std::printf(", gap %.6g", *rows.back().gap);
      if (rows.back().psnr) std::printf(", psnr %.4g dB", *rows.back().psnr);
    }
    std::printf("\n");
  }
  std::printf("summary: %s\n", (setup.out_dir / "summary.csv").string().c_str());
  return 0;
}

int cmd_validate_steps(const ExperimentConfig& raw, const RunnerOptions& opt) {
  // Force the uncertified fallback so a failing configuration still yields a
  // candidate table instead of an exception.
  RunnerOptions vopt = opt;
  vopt.override_unsafe = true;
  ExperimentSetup setup = prepare_experiment(raw, vopt, true, false);
  StepSizes<double>& steps = setup.steps;
  if (!steps.valid && steps.eso_v.size() == 0) {
    // Override fallback left the estimates uncomputed; fill them for the table.
    steps.eso_v = eso_params_serial(*setup.ct.op, steps.S, steps.T, steps.lipschitz);
    validate_step_sizes(steps, setup.probs);
  }

  std::printf("tau_max = %.6g  lipschitz = %.6g  theta = %.6g\n", steps.T.max_entry(),
              steps.lipschitz, setup.cfg.solver.theta);
  std::printf("%6s  %14s  %14s  %14s\n", "block", "p_i", "v_i", "margin");
  for (Index i = 0; i < steps.eso_v.size(); ++i)
    std::printf("%6lld  %14.6g  %14.6g  %14.6g\n", static_cast<long long>(i), setup.probs[i],
                steps.eso_v[i], setup.probs[i] - eso_safety<double>() * steps.eso_v[i]);
  std::printf("certified: %s\n", steps.valid ? "yes" : "no");
  return steps.valid ? 0 : 3;
}

int cmd_phantom(const ExperimentConfig& raw, const RunnerOptions& opt) {
  const ExperimentConfig cfg = apply_overrides(raw, opt);
  const fs::path out_dir = cfg.output.dir;
  fs::create_directories(out_dir);
  const CtGeometry<double> geom = geometry_from(cfg.problem);
  const CachePaths paths(out_dir);

  const auto op = std::make_shared<RadonBlockOperator<double>>(
      geom.height, geom.width, uniform_angles<double>(geom.n_angles), geom.n_detectors,
      geom.n_subsets, geom.pixel_size);
  const Phantom<double> phantom = make_phantom<double>(geom.height, geom.width, geom.pixel_size);
  save_phantom(phantom, paths.phantom_bin, paths.phantom_json);
  const Sinogram<double> sino =
      simulate_measurements(*op, phantom, cfg.problem.effective_i0(), cfg.problem.seed);
  save_sinogram(sino, paths.sino_bin, paths.sino_json);

  std::printf("phantom: %s (%lldx%lld)\n", paths.phantom_bin.string().c_str(),
              static_cast<long long>(geom.height), static_cast<long long>(geom.width));
  std::printf("sinogram: %s (%lld angles x %lld detectors, seed %" PRIu64 ")\n",
              paths.sino_bin.string().c_str(), static_cast<long long>(geom.n_angles),
              static_cast<long long>(geom.n_detectors), cfg.problem.seed);
  return 0;
}

int cmd_reference(const ExperimentConfig& raw, const RunnerOptions& opt) {
  if (raw.reference.iterations < 1)
    throw ConfigError("reference.iterations must be positive to compute a reference");
  const ExperimentSetup setup = prepare_experiment(raw, opt, false, false);
  const ReferenceSolution<double> ref = compute_reference(
      setup.ct.problem, setup.cfg.reference.iterations, setup.cfg.reference.tol,
      setup.cfg.solver.gamma);
  const CachePaths paths(setup.out_dir);
  save_reference(ref, *setup.ct.op, paths.ref_bin, paths.ref_json);
  std::printf("reference: %s after %lld iterations, movement %.3g (%s)\n",
              paths.ref_bin.string().c_str(), static_cast<long long>(ref.iterations), ref.movement,
              ref.certified ? "certified" : "NOT certified");
  return 0;
}

}  // namespace tos
