#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tos/problem.hpp"
#include "tos/sampling.hpp"
#include "tos/vec.hpp"

namespace tos {

struct SolverAbort : std::runtime_error {
  SolverAbort(int64_t iteration_, Index block_)
      : std::runtime_error("solver: non-finite iterate at iteration " + std::to_string(iteration_) +
                           ", block " + std::to_string(block_)),
        iteration(iteration_),
        block(block_) {}
  int64_t iteration;
  Index block;
};

template <typename Scalar>
struct SolverState {
  Vec<Scalar> x;
  BlockVec<Scalar> y;
  Vec<Scalar> z;     // A^T y, maintained incrementally, refreshed each epoch
  Vec<Scalar> corr;  // A^T ybar - A^T y correction from the last dual change
  int64_t k = 0;
  Vec<Scalar> sum_x;       // running sums of post-update iterates
  BlockVec<Scalar> sum_y;

  Vec<Scalar> ergodic_x() const {
    return k > 0 ? Vec<Scalar>(sum_x / Scalar(k)) : sum_x;
  }
  BlockVec<Scalar> ergodic_y() const {
    if (k == 0) return sum_y;
    BlockVec<Scalar> e = sum_y;
    e *= Scalar(1) / Scalar(k);
    return e;
  }
};

template <typename Scalar>
struct CheckpointView {
  int64_t k;
  int64_t epoch;
  const Vec<Scalar>& x;
  const BlockVec<Scalar>& y;
  const Vec<Scalar>& ergodic_x;
  const BlockVec<Scalar>& ergodic_y;
};

template <typename Scalar>
struct CheckpointMetrics {
  std::optional<Scalar> gap;
  std::optional<Scalar> psnr;
};

template <typename Scalar>
using MetricsFn = std::function<CheckpointMetrics<Scalar>(const CheckpointView<Scalar>&)>;

template <typename Scalar>
struct RunRow {
  int64_t epoch = 0;
  int64_t k = 0;
  Scalar objective = 0;
  std::optional<Scalar> gap;
  std::optional<Scalar> psnr;
  double seconds = 0;  // wall clock since solve start
};

template <typename Scalar>
struct RunRecord {
  std::string algorithm;
  uint64_t seed = 0;
  std::string config_hash;
  std::vector<RunRow<Scalar>> rows;
};

template <typename Scalar>
struct SolveOptions {
  int64_t checkpoint_every = 1;              // epochs between rows; <= 0 disables cadence rows
  std::vector<int64_t> checkpoint_iters;     // explicit k values (sorted); replaces the cadence
  MetricsFn<Scalar> metrics;                 // optional gap/psnr at checkpoints
  bool allow_unsafe = false;                 // skip step certification / theta restriction
  bool verify_state = true;                  // per-epoch z refresh and consistency check
  std::optional<Vec<Scalar>> x0;
  std::optional<BlockVec<Scalar>> y0;
  std::string algorithm_tag;                 // overrides the default tag in the record
  uint64_t seed = 0;                         // carried into the record
  std::string config_hash;
};

template <typename Scalar>
struct SolveResult {
  SolverState<Scalar> state;
  RunRecord<Scalar> record;
};

namespace detail {

template <typename Scalar>
class CheckpointSchedule {
 public:
  CheckpointSchedule(const SolveOptions<Scalar>& opts, int64_t iters_per_epoch, int64_t K)
      : iters_per_epoch_(iters_per_epoch), K_(K) {
    if (!opts.checkpoint_iters.empty()) {
      explicit_ = opts.checkpoint_iters;
      for (size_t i = 1; i < explicit_.size(); ++i)
        if (explicit_[i] <= explicit_[i - 1])
          throw std::invalid_argument("solve: checkpoint iterations must be strictly increasing");
      use_explicit_ = true;
    } else {
      every_ = opts.checkpoint_every;
    }
  }

  bool due(int64_t k) const {
    if (use_explicit_) {
      return pos_ < explicit_.size() && explicit_[pos_] == k;
    }
    if (every_ <= 0) return k == K_;
    if (k == K_) return true;
    return k % (iters_per_epoch_ * every_) == 0;
  }

  void advance(int64_t k) {
    if (use_explicit_)
      while (pos_ < explicit_.size() && explicit_[pos_] <= k) ++pos_;
  }

 private:
  bool use_explicit_ = false;
  std::vector<int64_t> explicit_;
  size_t pos_ = 0;
  int64_t every_ = 1;
  int64_t iters_per_epoch_ = 1;
  int64_t K_ = 0;
};

template <typename Scalar>
void record_checkpoint(const SaddleProblem<Scalar>& prob, const SolverState<Scalar>& st,
                       int64_t epoch, const SolveOptions<Scalar>& opts,
                       const std::chrono::steady_clock::time_point& t0, RunRecord<Scalar>& rec) {
  RunRow<Scalar> row;
  row.epoch = epoch;
  row.k = st.k;
  row.objective = primal_objective(prob, st.x);
  row.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (opts.metrics) {
    const Vec<Scalar> ex = st.ergodic_x();
    const BlockVec<Scalar> ey = st.ergodic_y();
    CheckpointView<Scalar> view{st.k, epoch, st.x, st.y, ex, ey};
    const auto m = opts.metrics(view);
    row.gap = m.gap;
    row.psnr = m.psnr;
  }
  rec.rows.push_back(std::move(row));
}

// Relative consistency check of the maintained z against a fresh A^T y,
// then adoption of the fresh value so float drift cannot accumulate.
template <typename Scalar>
void refresh_z(const SaddleProblem<Scalar>& prob, SolverState<Scalar>& st, bool verify) {
  Vec<Scalar> fresh = adjoint_apply(*prob.A, st.y);
  if (verify) {
    const Scalar scale = std::max(Scalar(1), fresh.norm());
    const Scalar drift = (st.z - fresh).norm();
    if (!(drift <= Scalar(1e-8) * scale))
      throw std::logic_error("solver: maintained A^T y drifted by " + std::to_string(double(drift)) +
                             " (relative tolerance 1e-8) at iteration " + std::to_string(st.k));
  }
  st.z = std::move(fresh);
}

}  // namespace detail

// Stochastic three-operator splitting. Per iteration: one block forward
// apply, one block adjoint apply, one prox of g, one conjugate prox, one
// gradient of h. The extrapolated dual ybar is never materialized; its image
// under A^T is carried as z + corr with corr = (theta / p_j) A_j^T (y_j' - y_j).
template <typename Scalar>
SolveResult<Scalar> tos_spdhg(const SaddleProblem<Scalar>& prob, const StepSizes<Scalar>& steps,
                              Sampler<Scalar>& sampler, int64_t K,
                              const SolveOptions<Scalar>& opts = {}) {
  prob.check();
  if (K < 0) throw std::invalid_argument("solve: K must be nonnegative");
  if (sampler.n() != prob.n())
    throw std::invalid_argument("solve: sampler over " + std::to_string(sampler.n()) +
                                " blocks, problem has " + std::to_string(prob.n()));
  if (steps.S.size() != prob.n())
    throw std::invalid_argument("solve: steps carry " + std::to_string(steps.S.size()) +
                                " dual scalars, problem has " + std::to_string(prob.n()) +
                                " blocks");
  if (!opts.allow_unsafe) {
    if (steps.theta != Scalar(1))
      throw CertificationError("solve: theta != 1 requires the unsafe override");
    if (!steps.valid) {
      // Not certified yet (validate_step_sizes sets the flag): do it here.
      StepSizes<Scalar> check = steps;
      check.eso_v = eso_params_serial(*prob.A, steps.S, steps.T, steps.lipschitz);
      if (!validate_step_sizes(check, sampler.probs()))
        throw CertificationError(
            "solve: steps failed certification; pass the unsafe override to run anyway");
    }
  }

  const Index n = prob.n();
  const auto t0 = std::chrono::steady_clock::now();

  SolverState<Scalar> st;
  st.x = opts.x0 ? *opts.x0 : Vec<Scalar>::Zero(prob.dim());
  st.y = opts.y0 ? *opts.y0 : prob.zero_dual();
  if (st.x.size() != prob.dim()) throw std::invalid_argument("solve: warm start x has wrong dim");
  st.y.check_same_shape(prob.zero_dual(), "warm start");
  st.z = adjoint_apply(*prob.A, st.y);
  st.corr = Vec<Scalar>::Zero(prob.dim());  // ybar^0 = y^0
  st.sum_x = Vec<Scalar>::Zero(prob.dim());
  st.sum_y = prob.zero_dual();

  RunRecord<Scalar> rec;
  rec.algorithm = opts.algorithm_tag.empty() ? "tos-spdhg" : opts.algorithm_tag;
  rec.seed = opts.seed;
  rec.config_hash = opts.config_hash;

  detail::CheckpointSchedule<Scalar> sched(opts, n, K);
  const Vec<Scalar>& probs = sampler.probs();

  for (int64_t k = 0; k < K; ++k) {
    const Index j = sampler.draw();

    Vec<Scalar> w = st.x - steps.T.apply(st.z + st.corr + grad_smooth(prob.h, st.x));
    if (!w.allFinite()) throw SolverAbort(k, j);
    st.x = prox_weighted(prob.g, w, steps.T);

    const Scalar sj = steps.S[j];
    Vec<Scalar> v = st.y[j] + sj * prob.A->apply_block(j, st.x);
    if (!v.allFinite()) throw SolverAbort(k, j);
    Vec<Scalar> ynew = conj_prox(prob.f_blocks[static_cast<size_t>(j)], v, sj);
    if (!ynew.allFinite()) throw SolverAbort(k, j);

    Vec<Scalar> d = prob.A->adjoint_block(j, ynew - st.y[j]);
    st.y[j] = std::move(ynew);
    st.z += d;
    st.corr = (steps.theta / probs[j]) * d;

    st.sum_x += st.x;
    st.sum_y += st.y;
    st.k = k + 1;

    if (st.k % n == 0) detail::refresh_z(prob, st, opts.verify_state);
    if (sched.due(st.k)) detail::record_checkpoint(prob, st, st.k / n, opts, t0, rec);
    sched.advance(st.k);
  }

  return {std::move(st), std::move(rec)};
}

// Special case h = 0: same code path, higher-level name for configs/tests.
template <typename Scalar>
SolveResult<Scalar> spdhg(const SaddleProblem<Scalar>& prob, const StepSizes<Scalar>& steps,
                          Sampler<Scalar>& sampler, int64_t K,
                          const SolveOptions<Scalar>& opts = {}) {
  if (prob.h.kind != SmoothFunction<Scalar>::Kind::Zero || prob.L != Scalar(0))
    throw std::invalid_argument("spdhg: smooth term must be identically zero");
  SolveOptions<Scalar> o = opts;
  if (o.algorithm_tag.empty()) o.algorithm_tag = "spdhg";
  return tos_spdhg(prob, steps, sampler, K, o);
}

// tau, sigma sized like the stochastic defaults collapsed to one block.
template <typename Scalar>
std::pair<Scalar, Scalar> condat_vu_default_steps(Scalar norm_A, Scalar L,
                                                  Scalar gamma = Scalar(0.99)) {
  if (!(norm_A > Scalar(0))) throw std::invalid_argument("steps: operator norm must be positive");
  return {gamma / (gamma * L + norm_A), gamma / norm_A};
}

template <typename Scalar>
struct CondatVuOptions : SolveOptions<Scalar> {
  std::optional<Scalar> norm_A;  // skip the power method when already known
};

// Deterministic baseline: every dual block updates each iteration and the
// primal step sees the extrapolated dual 2 y^k - y^{k-1}, which makes the
// n = 1 stochastic reduction exact. Step condition 1/tau - sigma ||A||^2 >= L/2.
template <typename Scalar>
SolveResult<Scalar> condat_vu(const SaddleProblem<Scalar>& prob, Scalar tau, Scalar sigma,
                              int64_t K, const CondatVuOptions<Scalar>& opts = {}) {
  prob.check();
  if (K < 0) throw std::invalid_argument("solve: K must be nonnegative");
  if (!(tau > Scalar(0)) || !(sigma > Scalar(0)))
    throw std::invalid_argument("solve: tau and sigma must be positive");
  if (!opts.allow_unsafe) {
    Scalar nA;
    if (opts.norm_A) {
      nA = *opts.norm_A;
    } else {
      FullOperatorView<Scalar> full(*prob.A);
      nA = power_method_norm<Scalar>(full).value;
    }
    if (!(Scalar(1) / tau - sigma * nA * nA >= prob.L / Scalar(2)))
      throw CertificationError("solve: 1/tau - sigma ||A||^2 >= L/2 fails (tau=" +
                               std::to_string(double(tau)) + ", sigma=" +
                               std::to_string(double(sigma)) + ", ||A||~" +
                               std::to_string(double(nA)) + ", L=" +
                               std::to_string(double(prob.L)) + ")");
  }

  const auto t0 = std::chrono::steady_clock::now();
  const DiagonalMetric<Scalar> T(tau);

  SolverState<Scalar> st;
  st.x = opts.x0 ? *opts.x0 : Vec<Scalar>::Zero(prob.dim());
  st.y = opts.y0 ? *opts.y0 : prob.zero_dual();
  if (st.x.size() != prob.dim()) throw std::invalid_argument("solve: warm start x has wrong dim");
  st.y.check_same_shape(prob.zero_dual(), "warm start");
  st.z = adjoint_apply(*prob.A, st.y);
  st.corr = Vec<Scalar>::Zero(prob.dim());
  st.sum_x = Vec<Scalar>::Zero(prob.dim());
  st.sum_y = prob.zero_dual();

  RunRecord<Scalar> rec;
  rec.algorithm = opts.algorithm_tag.empty() ? "condat-vu" : opts.algorithm_tag;
  rec.seed = opts.seed;
  rec.config_hash = opts.config_hash;

  detail::CheckpointSchedule<Scalar> sched(opts, 1, K);

  for (int64_t k = 0; k < K; ++k) {
    Vec<Scalar> w = st.x - T.apply(st.z + st.corr + grad_smooth(prob.h, st.x));
    if (!w.allFinite()) throw SolverAbort(k, -1);
    st.x = prox_weighted(prob.g, w, T);

    BlockVec<Scalar> ynew;
    ynew.blocks.reserve(static_cast<size_t>(prob.n()));
    for (Index i = 0; i < prob.n(); ++i) {
      Vec<Scalar> v = st.y[i] + sigma * prob.A->apply_block(i, st.x);
      if (!v.allFinite()) throw SolverAbort(k, i);
      ynew.blocks.push_back(conj_prox(prob.f_blocks[static_cast<size_t>(i)], v, sigma));
      if (!ynew.blocks.back().allFinite()) throw SolverAbort(k, i);
    }

    Vec<Scalar> d = adjoint_apply(*prob.A, ynew - st.y);
    st.y = std::move(ynew);
    st.z = adjoint_apply(*prob.A, st.y);
    st.corr = std::move(d);

    st.sum_x += st.x;
    st.sum_y += st.y;
    st.k = k + 1;

    if (sched.due(st.k)) detail::record_checkpoint(prob, st, st.k, opts, t0, rec);
    sched.advance(st.k);
  }

  return {std::move(st), std::move(rec)};
}

// ---------------------------------------------------------------------------
// Per-iteration descent inequality for the deterministic all-blocks update.
// ---------------------------------------------------------------------------

template <typename Scalar>
struct Lemma2Inputs {
  Vec<Scalar> x_k;
  BlockVec<Scalar> y_k;
  BlockVec<Scalar> ybar_k;  // dual point the primal step sees
  Vec<Scalar> x_test;       // comparison point (x, y); must be feasible for g, f*
  BlockVec<Scalar> y_test;
};

template <typename Scalar>
struct Lemma2Result {
  Scalar residual;  // lhs - rhs; nonnegative whenever lipschitz covers grad h
  Scalar lhs;
  Scalar rhs;
  Vec<Scalar> x_next;
  BlockVec<Scalar> y_next;
};

// Evaluates both sides around one deterministic update
//   x+ = prox_g^T(x - T(A^T ybar + grad h(x))),  y+_i = conjprox_i(y_i + S_i A_i x+)
// against a comparison point (x, y):
//   ||x^k-x||^2_{T^-1} + ||y^k-y||^2_{S^-1}
//     >= ||x+-x||^2_{T^-1} + ||y+-y||^2_{S^-1}
//        + 2(g(x+)-g(x) + h(x+)-h(x) + f*(y+)-f*(y))
//        - 2<A(x-x+), ybar> + 2<A x+, y-y+>
//        + ||x+-x^k||^2_{T^-1 - L I} + ||y+-y^k||^2_{S^-1}.
// The lipschitz argument is the constant the bound is asserted with; passing
// an understatement of the true constant is how violations are manufactured.
template <typename Scalar>
Lemma2Result<Scalar> lemma2_check(const SaddleProblem<Scalar>& prob,
                                  const DiagonalMetric<Scalar>& T, const Vec<Scalar>& S,
                                  Scalar lipschitz, const Lemma2Inputs<Scalar>& in) {
  prob.check();
  if (S.size() != prob.n()) throw std::invalid_argument("lemma2: S must have one entry per block");
  if ((S.array() <= Scalar(0)).any())
    throw std::invalid_argument("lemma2: S entries must be positive");

  const Vec<Scalar> w =
      in.x_k - T.apply(adjoint_apply(*prob.A, in.ybar_k) + grad_smooth(prob.h, in.x_k));
  Vec<Scalar> x_next = prox_weighted(prob.g, w, T);

  BlockVec<Scalar> y_next;
  y_next.blocks.reserve(static_cast<size_t>(prob.n()));
  for (Index i = 0; i < prob.n(); ++i) {
    Vec<Scalar> v = in.y_k[i] + S[i] * prob.A->apply_block(i, x_next);
    y_next.blocks.push_back(conj_prox(prob.f_blocks[static_cast<size_t>(i)], v, S[i]));
  }

  auto dual_sqnorm = [&](const BlockVec<Scalar>& a, const BlockVec<Scalar>& b) {
    Scalar s = 0;
    for (Index i = 0; i < prob.n(); ++i) s += (a[i] - b[i]).squaredNorm() / S[i];
    return s;
  };

  const Scalar lhs =
      T.inv_weighted_sqnorm(in.x_k - in.x_test) + dual_sqnorm(in.y_k, in.y_test);

  Scalar rhs = T.inv_weighted_sqnorm(x_next - in.x_test) + dual_sqnorm(y_next, in.y_test);
  rhs += Scalar(2) * (eval(prob.g, x_next) - eval(prob.g, in.x_test) + eval(prob.h, x_next) -
                      eval(prob.h, in.x_test) + prob.fstar_eval(y_next) -
                      prob.fstar_eval(in.y_test));
  rhs -= Scalar(2) * dot(apply(*prob.A, Vec<Scalar>(in.x_test - x_next)), in.ybar_k);
  rhs += Scalar(2) * dot(apply(*prob.A, x_next), in.y_test - y_next);
  const Vec<Scalar> dx = x_next - in.x_k;
  rhs += T.inv_weighted_sqnorm(dx) - lipschitz * dx.squaredNorm();
  rhs += dual_sqnorm(y_next, in.y_k);

  return {lhs - rhs, lhs, rhs, std::move(x_next), std::move(y_next)};
}

}  // namespace tos
