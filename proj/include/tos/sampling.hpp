#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "tos/linops.hpp"
#include "tos/vec.hpp"

namespace tos {

// Serial index sampler: each draw selects exactly one block, block i with
// probability probs[i]. One sampler instance per solver run; draws mutate the
// stream, identical seeds give identical sequences.
template <typename Scalar>
class Sampler {
 public:
  enum class Scheme { Uniform, Importance };

  static Sampler uniform(Index n, uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sampler: need n >= 1");
    return Sampler(Vec<Scalar>::Constant(n, Scalar(1) / Scalar(n)), seed, Scheme::Uniform);
  }

  // Probabilities proportional to the supplied block norms.
  static Sampler importance(const Vec<Scalar>& block_norms, uint64_t seed) {
    if (block_norms.size() < 1) throw std::invalid_argument("sampler: need n >= 1");
    if ((block_norms.array() <= Scalar(0)).any())
      throw std::invalid_argument("sampler: block norms must be positive");
    return Sampler(block_norms / block_norms.sum(), seed, Scheme::Importance);
  }

  static Sampler with_probs(Vec<Scalar> probs, uint64_t seed, // direct construction for tests
                            Scheme scheme = Scheme::Importance) {
    return Sampler(std::move(probs), seed, scheme);
  }

  Index n() const { return probs_.size(); }
  const Vec<Scalar>& probs() const { return probs_; }
  Scheme scheme() const { return scheme_; }
  uint64_t seed() const { return seed_; }

  // Draws one block index; cumulative-sum inversion over a 53-bit uniform so
  // the stream depends only on the mt19937_64 sequence.
  Index draw() {
    const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    const Scalar target = static_cast<Scalar>(u);
    Scalar acc = 0;
    for (Index i = 0; i + 1 < probs_.size(); ++i) {
      acc += probs_[i];
      if (target < acc) return i;
    }
    return probs_.size() - 1;
  }

 private:
  Sampler(Vec<Scalar> probs, uint64_t seed, Scheme scheme)
      : probs_(std::move(probs)), scheme_(scheme), seed_(seed), rng_(seed) {
    Scalar s = 0;
    for (Index i = 0; i < probs_.size(); ++i) {
      if (!(probs_[i] > Scalar(0)))
        throw std::invalid_argument("sampler: probability " + std::to_string(i) +
                                    " must be positive");
      s += probs_[i];
    }
    if (std::abs(s - Scalar(1)) > Scalar(1e-12))
      throw std::invalid_argument("sampler: probabilities sum to " + std::to_string(double(s)) +
                                  ", expected 1");
  }

  Vec<Scalar> probs_;
  Scheme scheme_;
  uint64_t seed_;
  std::mt19937_64 rng_;
};

// Primal metric T, per-block dual scalars S_i, extrapolation theta, and the
// certification bookkeeping that ties them to a sampling distribution.
template <typename Scalar>
struct StepSizes {
  DiagonalMetric<Scalar> T;
  Vec<Scalar> S;
  Scalar theta = 1;
  Scalar lipschitz = 0;  // smooth-term constant the certificate assumed
  Vec<Scalar> eso_v;     // raw per-block estimates, before the safety factor
  bool valid = false;    // certificate against the sampling distribution the run will use;
                         // solvers re-certify at entry when unset
};

// Safety factor applied to power-method estimates before the strict
// comparison: the estimates approach operator norms from below.
template <typename Scalar>
constexpr Scalar eso_safety() {
  return Scalar(1.01);
}

struct CertificationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

// Diagonal of (T^{-1} - L I)^{-1/2}; requires T^{-1} - L I positive definite.
template <typename Scalar>
Vec<Scalar> eso_whitener(const DiagonalMetric<Scalar>& T, Scalar L, Index dim) {
  Vec<Scalar> w(dim);
  for (Index j = 0; j < dim; ++j) {
    const Scalar t = T.uniform() ? T.scale() : T.entry(j);
    const Scalar denom = Scalar(1) - L * t;
    if (!(denom > Scalar(0)))
      throw std::invalid_argument("step sizes: T^{-1} - L*I must be positive definite (entry " +
                                  std::to_string(j) + " fails with L=" + std::to_string(double(L)) +
                                  ")");
    w[j] = std::sqrt(t / denom);
  }
  return w;
}

// A_i scaled on the right by a diagonal, as a map for the power method.
template <typename Scalar>
class WhitenedBlockView : public LinearMap<Scalar> {
 public:
  WhitenedBlockView(const BlockLinearOperator<Scalar>& A, Index i, const Vec<Scalar>& w)
      : A_(A), i_(i), w_(w) {}
  Index rows() const override { return A_.block_dim(i_); }
  Index cols() const override { return A_.domain_dim(); }
  Vec<Scalar> apply(const Vec<Scalar>& x) const override {
    return A_.apply_block(i_, w_.cwiseProduct(x));
  }
  Vec<Scalar> apply_adjoint(const Vec<Scalar>& y) const override {
    return w_.cwiseProduct(A_.adjoint_block(i_, y));
  }

 private:
  const BlockLinearOperator<Scalar>& A_;
  Index i_;
  const Vec<Scalar>& w_;
};

}  // namespace detail

// Per-block expected-separable-overapproximation parameters for serial
// sampling: v_i = S_i ||A_i (T^{-1} - L I)^{-1/2}||^2, the tight choice when
// each draw touches a single block. Estimates are raw power-method values.
template <typename Scalar>
Vec<Scalar> eso_params_serial(const BlockLinearOperator<Scalar>& A, const Vec<Scalar>& S,
                              const DiagonalMetric<Scalar>& T, Scalar L,
                              Scalar power_tol = Scalar(1e-8), int power_max_iter = 2000) {
  if (S.size() != A.block_count())
    throw std::invalid_argument("eso params: S has " + std::to_string(S.size()) + " entries for " +
                                std::to_string(A.block_count()) + " blocks");
  if ((S.array() <= Scalar(0)).any())
    throw std::invalid_argument("eso params: S entries must be positive");
  const Vec<Scalar> w = detail::eso_whitener(T, L, A.domain_dim());
  Vec<Scalar> v(A.block_count());
  for (Index i = 0; i < A.block_count(); ++i) {
    detail::WhitenedBlockView<Scalar> view(A, i, w);
    const auto pm = power_method_norm<Scalar>(view, power_tol, power_max_iter);
    v[i] = S[i] * pm.value * pm.value;
  }
  return v;
}

// Strict certificate check: safety * v_i < p_i for every block, and the
// whitening metric must exist. Sets steps.valid and returns it.
template <typename Scalar>
bool validate_step_sizes(StepSizes<Scalar>& steps, const Vec<Scalar>& probs) {
  if (steps.eso_v.size() != probs.size())
    throw std::invalid_argument("validate steps: v has " + std::to_string(steps.eso_v.size()) +
                                " entries for " + std::to_string(probs.size()) + " probabilities");
  bool ok = true;
  if (steps.lipschitz > Scalar(0) && !(steps.T.max_entry() < Scalar(1) / steps.lipschitz)) ok = false;
  for (Index i = 0; ok && i < probs.size(); ++i)
    if (!(eso_safety<Scalar>() * steps.eso_v[i] < probs[i])) ok = false;
  steps.valid = ok;
  return ok;
}

namespace detail {

// Shared preconditions of the step rules below.
template <typename Scalar>
void check_rule_inputs(const BlockLinearOperator<Scalar>& A, const Vec<Scalar>& block_norms,
                       const Vec<Scalar>& probs, Scalar L, Scalar gamma) {
  if (block_norms.size() != A.block_count() || probs.size() != A.block_count())
    throw std::invalid_argument("step rule: block norms/probabilities must match block count");
  if ((block_norms.array() <= Scalar(0)).any())
    throw std::invalid_argument("step rule: block norms must be positive");
  if (!(gamma > Scalar(0)) || !std::isfinite(gamma))
    throw std::invalid_argument("step rule: gamma must be positive and finite");
  if (!(L >= Scalar(0))) throw std::invalid_argument("step rule: L must be nonnegative");
}

// Shared certification loop for scalar-tau rules: S and theta stay fixed while
// tau shrinks by 0.9 (at most 20 times) until the serial overapproximation
// certifies v_i against p_i.
template <typename Scalar>
StepSizes<Scalar> certify_scalar_tau(const BlockLinearOperator<Scalar>& A, StepSizes<Scalar> steps,
                                     const Vec<Scalar>& probs, Scalar tau, Scalar power_tol,
                                     int power_max_iter) {
  const Scalar L = steps.lipschitz;
  const int max_retries = 20;
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    if (L > Scalar(0) && !(tau < Scalar(1) / L)) {
      tau *= Scalar(0.9);
      continue;
    }
    steps.T = DiagonalMetric<Scalar>(tau);
    steps.eso_v = eso_params_serial(A, steps.S, steps.T, L, power_tol, power_max_iter);
    if (validate_step_sizes(steps, probs)) return steps;
    tau *= Scalar(0.9);
  }

  std::string what = "step rule: certification failed after " + std::to_string(max_retries) +
                     " retries;";
  if (steps.eso_v.size() == probs.size())
    for (Index i = 0; i < probs.size(); ++i)
      what += " v[" + std::to_string(i) + "]=" + std::to_string(double(steps.eso_v[i])) + " vs p[" +
              std::to_string(i) + "]=" + std::to_string(double(probs[i]));
  else
    what += " tau never cleared the smooth-term bound 1/L";
  throw CertificationError(what);
}

}  // namespace detail

// Default rule: S_i = gamma p_i / ||A_i||, T = tau I with
// tau = gamma / (gamma L + max_i ||A_i||), then certify via the serial
// overapproximation; tau shrinks by 0.9 (at most 20 times) until certified.
template <typename Scalar>
StepSizes<Scalar> default_step_rule(const BlockLinearOperator<Scalar>& A,
                                    const Vec<Scalar>& block_norms, const Vec<Scalar>& probs,
                                    Scalar L, Scalar gamma = Scalar(0.99),
                                    Scalar power_tol = Scalar(1e-8), int power_max_iter = 2000) {
  detail::check_rule_inputs(A, block_norms, probs, L, gamma);
  StepSizes<Scalar> steps;
  steps.S = gamma * probs.cwiseQuotient(block_norms);
  steps.theta = 1;
  steps.lipschitz = L;
  const Scalar tau = gamma / (gamma * L + block_norms.maxCoeff());
  return detail::certify_scalar_tau(A, std::move(steps), probs, tau, power_tol, power_max_iter);
}

// Preconditioned rule in the SPDHG style: S_i = gamma / ||A_i|| and
// tau = gamma min_i p_i / (||A_i|| + L p_i), giving v_i <= gamma^2 p_i for
// exact norms; the certification loop absorbs estimation error. Unlike the
// default rule the dual steps do not shrink with the block count, which is
// what lets the stochastic solver outpace its deterministic counterpart at
// equal per-epoch cost.
template <typename Scalar>
StepSizes<Scalar> preconditioned_step_rule(const BlockLinearOperator<Scalar>& A,
                                           const Vec<Scalar>& block_norms, const Vec<Scalar>& probs,
                                           Scalar L, Scalar gamma = Scalar(0.99),
                                           Scalar power_tol = Scalar(1e-8),
                                           int power_max_iter = 2000) {
  detail::check_rule_inputs(A, block_norms, probs, L, gamma);
  StepSizes<Scalar> steps;
  steps.S = gamma * block_norms.cwiseInverse();
  steps.theta = 1;
  steps.lipschitz = L;
  const Scalar tau =
      gamma * (probs.array() / (block_norms.array() + L * probs.array())).minCoeff();
  return detail::certify_scalar_tau(A, std::move(steps), probs, tau, power_tol, power_max_iter);
}

// Per-block operator norms, the usual input to the step rule.
template <typename Scalar>
Vec<Scalar> block_norms(const BlockLinearOperator<Scalar>& A, Scalar power_tol = Scalar(1e-8),
                        int power_max_iter = 2000) {
  Vec<Scalar> norms(A.block_count());
  for (Index i = 0; i < A.block_count(); ++i) {
    BlockView<Scalar> view(A, i);
    norms[i] = power_method_norm<Scalar>(view, power_tol, power_max_iter).value;
  }
  return norms;
}

}  // namespace tos
