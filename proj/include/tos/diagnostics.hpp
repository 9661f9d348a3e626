#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tos/problem.hpp"
#include "tos/solvers.hpp"
#include "tos/vec.hpp"

namespace tos {

// Saddle objective Phi(x, y) = h(x) + g(x) + <Ax, y> - f*(y).
template <typename Scalar>
Scalar phi(const SaddleProblem<Scalar>& prob, const Vec<Scalar>& x, const BlockVec<Scalar>& y) {
  const Scalar gx = eval(prob.g, x);
  const Scalar fsy = prob.fstar_eval(y);
  if (!std::isfinite(gx) || !std::isfinite(fsy)) {
    // keep the +inf/-inf bookkeeping of the extended-valued saddle function
    return gx == plus_inf<Scalar>() ? plus_inf<Scalar>() : -fsy;
  }
  return eval(prob.h, x) + gx + dot(apply(*prob.A, x), y) - fsy;
}

// Near-optimal primal-dual pair plus the cached pieces gap evaluation needs.
template <typename Scalar>
struct ReferenceSolution {
  Vec<Scalar> x_star;
  BlockVec<Scalar> y_star;
  bool certified = false;  // movement-based stationarity certificate
  Scalar movement = 0;     // last-step relative movement at termination
  int64_t iterations = 0;
  Scalar tol = 0;

  // cached: Phi(x*, y) = const_x + <A x*, y> - f*(y),  Phi(x, y*) needs fstar_y
  Scalar hg_at_x = 0;           // h(x*) + g(x*)
  BlockVec<Scalar> Ax_star;
  Scalar fstar_at_y = 0;        // f*(y*)

  void finalize(const SaddleProblem<Scalar>& prob) {
    Ax_star = apply(*prob.A, x_star);
    hg_at_x = eval(prob.h, x_star) + eval(prob.g, x_star);
    fstar_at_y = prob.fstar_eval(y_star);
  }
};

// Phi(x, y*) - Phi(x*, y): nonnegative at the exact saddle point, and the
// quantity the ergodic O(1/K) statement controls.
template <typename Scalar>
Scalar saddle_gap(const SaddleProblem<Scalar>& prob, const Vec<Scalar>& x,
                  const BlockVec<Scalar>& y, const ReferenceSolution<Scalar>& ref) {
  const Scalar gx = eval(prob.g, x);
  if (gx == plus_inf<Scalar>()) return plus_inf<Scalar>();
  const Scalar fsy = prob.fstar_eval(y);
  if (fsy == plus_inf<Scalar>()) return plus_inf<Scalar>();
  const Scalar phi_x_ystar =
      eval(prob.h, x) + gx + dot(apply(*prob.A, x), ref.y_star) - ref.fstar_at_y;
  const Scalar phi_xstar_y = ref.hg_at_x + dot(ref.Ax_star, y) - fsy;
  return phi_x_ystar - phi_xstar_y;
}

// Long deterministic run used as the gap reference. Certification is by
// relative last-step movement, not by any claim of exact optimality.
template <typename Scalar>
ReferenceSolution<Scalar> compute_reference(const SaddleProblem<Scalar>& prob, int64_t iters,
                                            Scalar tol = Scalar(1e-9),
                                            Scalar gamma = Scalar(0.99)) {
  prob.check();
  ReferenceSolution<Scalar> ref;
  ref.tol = tol;
  ref.iterations = iters;
  if (iters <= 0) {
    ref.x_star = Vec<Scalar>::Zero(prob.dim());
    ref.y_star = prob.zero_dual();
    ref.certified = false;
    ref.movement = plus_inf<Scalar>();
    ref.finalize(prob);
    return ref;
  }

  FullOperatorView<Scalar> full(*prob.A);
  const Scalar nA = power_method_norm<Scalar>(full).value;
  const auto ts = condat_vu_default_steps(nA, prob.L, gamma);

  CondatVuOptions<Scalar> opts;
  opts.norm_A = nA;
  opts.checkpoint_every = 0;  // final row only
  SolveResult<Scalar> head = condat_vu(prob, ts.first, ts.second, iters - 1, opts);

  // one extra iteration from the tail state to measure the final movement
  CondatVuOptions<Scalar> tail_opts = opts;
  tail_opts.x0 = head.state.x;
  tail_opts.y0 = head.state.y;
  SolveResult<Scalar> tail = condat_vu(prob, ts.first, ts.second, 1, tail_opts);

  const Scalar move = (tail.state.x - head.state.x).norm() +
                      std::sqrt(squared_norm(tail.state.y - head.state.y));
  const Scalar scale = std::max(Scalar(1), tail.state.x.norm());
  ref.x_star = tail.state.x;
  ref.y_star = tail.state.y;
  ref.movement = move / scale;
  ref.certified = ref.movement <= tol;
  ref.finalize(prob);
  return ref;
}

// Peak signal-to-noise ratio against a known ground truth, capped at 200 dB
// so identical inputs stay finite.
template <typename Scalar>
Scalar psnr(const Vec<Scalar>& x, const Vec<Scalar>& truth, Scalar peak = Scalar(1)) {
  if (x.size() != truth.size())
    throw std::invalid_argument("psnr: dims " + std::to_string(x.size()) + " vs " +
                                std::to_string(truth.size()));
  if (x.size() == 0) throw std::invalid_argument("psnr: empty vectors");
  if (!(peak > Scalar(0))) throw std::invalid_argument("psnr: peak must be positive");
  const Scalar mse = (x - truth).squaredNorm() / Scalar(x.size());
  if (mse == Scalar(0)) return Scalar(200);
  return std::min(Scalar(200), Scalar(10) * std::log10(peak * peak / mse));
}

// Least-squares slope of log(gap) against log(k) over recorded checkpoints.
// An O(1/K) ergodic rate shows up as a slope near -1.
template <typename Scalar>
Scalar rate_fit(const std::vector<std::pair<int64_t, Scalar>>& gaps, int64_t k_min) {
  std::vector<std::pair<Scalar, Scalar>> pts;
  for (const auto& [k, gap] : gaps)
    if (k >= k_min && gap > Scalar(0) && std::isfinite(gap))
      pts.emplace_back(std::log(Scalar(k)), std::log(gap));
  if (pts.size() < 5)
    throw std::invalid_argument("rate fit: need at least 5 checkpoints with k >= " +
                                std::to_string(k_min) + " and positive gaps, have " +
                                std::to_string(pts.size()));
  Scalar mx = 0, my = 0;
  for (const auto& [u, v] : pts) {
    mx += u;
    my += v;
  }
  mx /= Scalar(pts.size());
  my /= Scalar(pts.size());
  Scalar sxx = 0, sxy = 0;
  for (const auto& [u, v] : pts) {
    sxx += (u - mx) * (u - mx);
    sxy += (u - mx) * (v - my);
  }
  if (sxx == Scalar(0)) throw std::invalid_argument("rate fit: checkpoints share a single k");
  return sxy / sxx;
}

template <typename Scalar>
Scalar rate_fit(const RunRecord<Scalar>& rec, int64_t k_min) {
  std::vector<std::pair<int64_t, Scalar>> gaps;
  for (const auto& row : rec.rows)
    if (row.gap) gaps.emplace_back(row.k, *row.gap);
  return rate_fit(gaps, k_min);
}

}  // namespace tos
