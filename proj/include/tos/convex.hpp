#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include "tos/linops.hpp"
#include "tos/vec.hpp"

namespace tos {

template <typename Scalar>
constexpr Scalar plus_inf() {
  return std::numeric_limits<Scalar>::infinity();
}

// ---------------------------------------------------------------------------
// Primal nonsmooth term g: prox-friendly under a diagonal metric.
// prox_g^T(x) = argmin_z 1/2 ||z - x||_{T^{-1}}^2 + g(z).
// ---------------------------------------------------------------------------

template <typename Scalar>
struct ProxableFunction {
  enum class Kind { Zero, Box };

  Kind kind = Kind::Zero;
  Scalar lo = 0, hi = 0;  // box bounds

  static ProxableFunction zero() { return {}; }

  static ProxableFunction box(Scalar lo, Scalar hi) {
    if (!(lo <= hi))
      throw std::invalid_argument("box: need lo <= hi, got [" + std::to_string(lo) + "," +
                                  std::to_string(hi) + "]");
    ProxableFunction g;
    g.kind = Kind::Box;
    g.lo = lo;
    g.hi = hi;
    return g;
  }
};

// Both kinds are separable, so a diagonal metric never changes the minimizer;
// T stays in the signature because that is the contract solvers call through.
template <typename Scalar>
Vec<Scalar> prox_weighted(const ProxableFunction<Scalar>& g, const Vec<Scalar>& x,
                          const DiagonalMetric<Scalar>& T) {
  (void)T;
  if (!x.allFinite()) throw std::invalid_argument("prox: non-finite input");
  switch (g.kind) {
    case ProxableFunction<Scalar>::Kind::Zero:
      return x;
    case ProxableFunction<Scalar>::Kind::Box:
      return x.cwiseMax(g.lo).cwiseMin(g.hi);
  }
  throw std::logic_error("prox: unsupported kind");
}

template <typename Scalar>
Scalar eval(const ProxableFunction<Scalar>& g, const Vec<Scalar>& x) {
  switch (g.kind) {
    case ProxableFunction<Scalar>::Kind::Zero:
      return 0;
    case ProxableFunction<Scalar>::Kind::Box:
      for (Index j = 0; j < x.size(); ++j)
        if (x[j] < g.lo || x[j] > g.hi) return plus_inf<Scalar>();
      return 0;
  }
  throw std::logic_error("eval: unsupported kind");
}

// ---------------------------------------------------------------------------
// Per-block data term f_i, accessed only through prox of its conjugate:
// conj_prox(f*, y, sigma) = argmin_u 1/2 ||u - y||^2 + sigma f*(u).
// ---------------------------------------------------------------------------

template <typename Scalar>
struct ConjProxableBlock {
  enum class Kind { SquaredL2, KL };

  Kind kind = Kind::SquaredL2;
  Vec<Scalar> data;        // b
  Vec<Scalar> background;  // r >= 0 for KL; empty means zero

  // f(z) = 1/2 ||z - b||^2
  static ConjProxableBlock squared_l2(Vec<Scalar> b) {
    ConjProxableBlock f;
    f.kind = Kind::SquaredL2;
    f.data = std::move(b);
    return f;
  }

  // f(z) = sum_j (z_j + r_j) - b_j + b_j log(b_j / (z_j + r_j)), minimum value 0
  static ConjProxableBlock kl(Vec<Scalar> b, Vec<Scalar> r = {}) {
    if ((b.array() < Scalar(0)).any()) throw std::invalid_argument("kl: data must be nonnegative");
    if (r.size() != 0) {
      if (r.size() != b.size()) throw std::invalid_argument("kl: background dim mismatch");
      if ((r.array() < Scalar(0)).any())
        throw std::invalid_argument("kl: background must be nonnegative");
    }
    ConjProxableBlock f;
    f.kind = Kind::KL;
    f.data = std::move(b);
    f.background = std::move(r);
    return f;
  }

  Index dim() const { return data.size(); }
};

namespace detail {

// Componentwise root of u^2 - (1+w)u + (w - sb) = 0 below 1, written to avoid
// cancellation on both sides of w = 1.
template <typename Scalar>
Scalar kl_conj_prox_scalar(Scalar w, Scalar sb) {
  if (sb == Scalar(0)) return std::min(w, Scalar(1));
  const Scalar m = w - Scalar(1);
  if (m >= Scalar(0)) return Scalar(1) - Scalar(2) * sb / (m + std::sqrt(m * m + Scalar(4) * sb));
  return (Scalar(1) + w - std::sqrt(m * m + Scalar(4) * sb)) / Scalar(2);
}

}  // namespace detail

template <typename Scalar>
Vec<Scalar> conj_prox(const ConjProxableBlock<Scalar>& f, const Vec<Scalar>& y, Scalar sigma) {
  if (!(sigma > Scalar(0)) || !std::isfinite(sigma))
    throw std::invalid_argument("conj prox: sigma must be positive and finite");
  if (!y.allFinite()) throw std::invalid_argument("conj prox: non-finite input");
  if (y.size() != f.dim())
    throw std::invalid_argument("conj prox: block dim " + std::to_string(f.dim()) +
                                ", got vector of dim " + std::to_string(y.size()));
  switch (f.kind) {
    case ConjProxableBlock<Scalar>::Kind::SquaredL2:
      return (y - sigma * f.data) / (Scalar(1) + sigma);
    case ConjProxableBlock<Scalar>::Kind::KL: {
      Vec<Scalar> u(y.size());
      const bool has_r = f.background.size() != 0;
      for (Index j = 0; j < y.size(); ++j) {
        const Scalar w = has_r ? y[j] + sigma * f.background[j] : y[j];
        u[j] = detail::kl_conj_prox_scalar(w, sigma * f.data[j]);
      }
      return u;
    }
  }
  throw std::logic_error("conj prox: unsupported kind");
}

template <typename Scalar>
Scalar eval(const ConjProxableBlock<Scalar>& f, const Vec<Scalar>& z) {
  if (z.size() != f.dim())
    throw std::invalid_argument("eval: block dim " + std::to_string(f.dim()) +
                                ", got vector of dim " + std::to_string(z.size()));
  switch (f.kind) {
    case ConjProxableBlock<Scalar>::Kind::SquaredL2:
      return Scalar(0.5) * (z - f.data).squaredNorm();
    case ConjProxableBlock<Scalar>::Kind::KL: {
      Scalar s = 0;
      const bool has_r = f.background.size() != 0;
      for (Index j = 0; j < z.size(); ++j) {
        const Scalar b = f.data[j];
        const Scalar u = has_r ? z[j] + f.background[j] : z[j];
        if (b > Scalar(0)) {
          if (!(u > Scalar(0))) return plus_inf<Scalar>();
          s += u - b + b * std::log(b / u);
        } else {
          if (u < Scalar(0)) return plus_inf<Scalar>();
          s += u;
        }
      }
      return s;
    }
  }
  throw std::logic_error("eval: unsupported kind");
}

// f*(y), with the additive constant fixed so that f*(0) = 0.
template <typename Scalar>
Scalar conjugate_eval(const ConjProxableBlock<Scalar>& f, const Vec<Scalar>& y) {
  if (y.size() != f.dim())
    throw std::invalid_argument("conjugate eval: block dim " + std::to_string(f.dim()) +
                                ", got vector of dim " + std::to_string(y.size()));
  switch (f.kind) {
    case ConjProxableBlock<Scalar>::Kind::SquaredL2:
      return Scalar(0.5) * y.squaredNorm() + f.data.dot(y);
    case ConjProxableBlock<Scalar>::Kind::KL: {
      Scalar s = 0;
      const bool has_r = f.background.size() != 0;
      for (Index j = 0; j < y.size(); ++j) {
        const Scalar b = f.data[j];
        if (b > Scalar(0)) {
          if (!(y[j] < Scalar(1))) return plus_inf<Scalar>();
          s -= b * std::log1p(-y[j]);
        } else if (y[j] > Scalar(1)) {
          return plus_inf<Scalar>();
        }
        if (has_r) s -= f.background[j] * y[j];
      }
      return s;
    }
  }
  throw std::logic_error("conjugate eval: unsupported kind");
}

// ---------------------------------------------------------------------------
// Smooth term h with a certified gradient Lipschitz bound.
// ---------------------------------------------------------------------------

template <typename Scalar>
struct SmoothFunction {
  enum class Kind { Zero, Quadratic, EdgePreserving };

  Kind kind = Kind::Zero;

  Scalar mu = 0;  // quadratic: h(x) = mu/2 ||x||^2

  // edge-preserving: h(x) = lambda * sum_r phi([Dx]_r) on an h-by-w image,
  // phi(z) = |z|^p / (1 + |z/c|^(p-q))
  Scalar lambda = 0, p = 2, q = 1.5, c = 10;
  Index height = 0, width = 0;

  static SmoothFunction zero() { return {}; }

  static SmoothFunction quadratic(Scalar mu) {
    if (!(mu >= Scalar(0))) throw std::invalid_argument("quadratic: mu must be nonnegative");
    SmoothFunction h;
    h.kind = Kind::Quadratic;
    h.mu = mu;
    return h;
  }

  static SmoothFunction edge_preserving(Scalar lambda, Index height, Index width, Scalar p = 2,
                                        Scalar q = 1.5, Scalar c = 10) {
    if (!(lambda > Scalar(0))) throw std::invalid_argument("edge preserving: lambda must be positive");
    if (height < 1 || width < 1) throw std::invalid_argument("edge preserving: empty grid");
    if (!(p >= Scalar(1)) || !(q > Scalar(0)) || !(q <= p) || !(c > Scalar(0)))
      throw std::invalid_argument("edge preserving: need p >= 1, 0 < q <= p, c > 0");
    SmoothFunction h;
    h.kind = Kind::EdgePreserving;
    h.lambda = lambda;
    h.p = p;
    h.q = q;
    h.c = c;
    h.height = height;
    h.width = width;
    return h;
  }

  Scalar phi(Scalar z) const {
    const Scalar az = std::abs(z);
    return std::pow(az, p) / (Scalar(1) + std::pow(az / c, p - q));
  }

  Scalar phi_prime(Scalar z) const {
    if (z == Scalar(0)) return 0;
    const Scalar az = std::abs(z);
    const Scalar t = std::pow(az, p - q) / std::pow(c, p - q);
    const Scalar d = Scalar(1) + t;
    const Scalar v = std::pow(az, p - Scalar(1)) * (p + q * t) / (d * d);
    return z > Scalar(0) ? v : -v;
  }
};

template <typename Scalar>
Scalar eval(const SmoothFunction<Scalar>& h, const Vec<Scalar>& x) {
  switch (h.kind) {
    case SmoothFunction<Scalar>::Kind::Zero:
      return 0;
    case SmoothFunction<Scalar>::Kind::Quadratic:
      return Scalar(0.5) * h.mu * x.squaredNorm();
    case SmoothFunction<Scalar>::Kind::EdgePreserving: {
      const Vec<Scalar> d = finite_difference_2d(x, h.height, h.width);
      Scalar s = 0;
      for (Index j = 0; j < d.size(); ++j) s += h.phi(d[j]);
      return h.lambda * s;
    }
  }
  throw std::logic_error("eval: unsupported kind");
}

template <typename Scalar>
Vec<Scalar> grad_smooth(const SmoothFunction<Scalar>& h, const Vec<Scalar>& x) {
  switch (h.kind) {
    case SmoothFunction<Scalar>::Kind::Zero:
      return Vec<Scalar>::Zero(x.size());
    case SmoothFunction<Scalar>::Kind::Quadratic:
      return h.mu * x;
    case SmoothFunction<Scalar>::Kind::EdgePreserving: {
      Vec<Scalar> d = finite_difference_2d(x, h.height, h.width);
      for (Index j = 0; j < d.size(); ++j) d[j] = h.phi_prime(d[j]);
      return h.lambda * finite_difference_2d_adjoint(d, h.height, h.width);
    }
  }
  throw std::logic_error("grad: unsupported kind");
}

// Certified overestimate of the gradient Lipschitz constant. The potential's
// curvature bound is sampled on a dense grid over [-10c, 10c] (the curvature
// decays outside) and padded by 10%; ||D||^2 <= 8 for the difference stencil.
template <typename Scalar>
Scalar lipschitz_bound(const SmoothFunction<Scalar>& h) {
  switch (h.kind) {
    case SmoothFunction<Scalar>::Kind::Zero:
      return 0;
    case SmoothFunction<Scalar>::Kind::Quadratic:
      return h.mu;
    case SmoothFunction<Scalar>::Kind::EdgePreserving: {
      const int n = 4001;
      const Scalar lo = Scalar(-10) * h.c, hi = Scalar(10) * h.c;
      const Scalar step = (hi - lo) / Scalar(n - 1);
      const Scalar delta = Scalar(1e-5) * h.c;
      Scalar m = 0;
      for (int j = 0; j < n; ++j) {
        const Scalar z = lo + step * Scalar(j);
        const Scalar dd = std::abs(h.phi_prime(z + delta) - h.phi_prime(z - delta)) / (2 * delta);
        m = std::max(m, dd);
      }
      return h.lambda * Scalar(1.1) * m * Scalar(8);
    }
  }
  throw std::logic_error("lipschitz bound: unsupported kind");
}

}  // namespace tos
