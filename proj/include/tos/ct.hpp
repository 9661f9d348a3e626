#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tos/convex.hpp"
#include "tos/linops.hpp"
#include "tos/problem.hpp"
#include "tos/vec.hpp"

namespace tos {

template <typename Scalar>
struct Phantom {
  Index height = 0, width = 0;
  Scalar pixel_size = 0;
  Vec<Scalar> values;  // row-major, in [0, 1]
};

// Piecewise-constant head phantom: ten ellipses with the usual low-contrast
// interior features, rasterized at pixel centers on [-1,1]^2 and clamped.
template <typename Scalar>
Phantom<Scalar> make_phantom(Index height, Index width, Scalar pixel_size) {
  if (height < 16 || width < 16)
    throw std::invalid_argument("phantom: dims must be at least 16x16, got " +
                                std::to_string(height) + "x" + std::to_string(width));
  if (!(pixel_size > Scalar(0))) throw std::invalid_argument("phantom: pixel size must be positive");

  struct Ellipse {
    double amp, a, b, x0, y0, phi_deg;
  };
  static const Ellipse table[] = {
      {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},      {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
      {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0}, {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
      {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},  {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
      {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},  {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
      {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0}, {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
  };

  Phantom<Scalar> ph;
  ph.height = height;
  ph.width = width;
  ph.pixel_size = pixel_size;
  ph.values = Vec<Scalar>::Zero(height * width);

  const double pi = 3.14159265358979323846;
  for (Index r = 0; r < height; ++r) {
    const double y = 1.0 - (2.0 * double(r) + 1.0) / double(height);
    for (Index c = 0; c < width; ++c) {
      const double x = (2.0 * double(c) + 1.0) / double(width) - 1.0;
      double v = 0;
      for (const auto& e : table) {
        const double ang = e.phi_deg * pi / 180.0;
        const double dx = x - e.x0, dy = y - e.y0;
        const double u = (dx * std::cos(ang) + dy * std::sin(ang)) / e.a;
        const double w = (-dx * std::sin(ang) + dy * std::cos(ang)) / e.b;
        if (u * u + w * w <= 1.0) v += e.amp;
      }
      ph.values[r * width + c] = static_cast<Scalar>(std::min(1.0, std::max(0.0, v)));
    }
  }
  return ph;
}

// Parallel-beam line integrals, interpolated along the driving axis of each
// ray. Angle theta = 0 sends rays along +x (horizontal); detector offsets run
// along the perpendicular. Row blocks gather every n_subsets-th angle so each
// block sees the full detector and a spread of directions.
template <typename Scalar>
class RadonBlockOperator : public BlockLinearOperator<Scalar> {
 public:
  RadonBlockOperator(Index height, Index width, std::vector<Scalar> angles, Index n_detectors,
                     Index n_subsets, Scalar pixel_size)
      : h_(height),
        w_(width),
        angles_(std::move(angles)),
        nd_(n_detectors),
        nsub_(n_subsets),
        px_(pixel_size) {
    if (h_ < 1 || w_ < 1) throw std::invalid_argument("projector: empty image grid");
    if (angles_.empty()) throw std::invalid_argument("projector: empty angle list");
    if (nd_ < 1) throw std::invalid_argument("projector: need at least one detector");
    if (nsub_ < 1 || nsub_ > static_cast<Index>(angles_.size()))
      throw std::invalid_argument("projector: need 1 <= subsets <= angles, got " +
                                  std::to_string(nsub_) + " subsets for " +
                                  std::to_string(angles_.size()) + " angles");
    if (!(px_ > Scalar(0))) throw std::invalid_argument("projector: pixel size must be positive");
    // Detector span equals the larger image side: every ray crosses the grid
    // at every angle, so no data row is identically zero (a zero row with a
    // positive divergence target would put +inf into every objective value).
    spacing_ = Scalar(std::max(h_, w_)) / Scalar(nd_);
    subsets_.resize(static_cast<size_t>(nsub_));
    for (size_t a = 0; a < angles_.size(); ++a)
      subsets_[a % static_cast<size_t>(nsub_)].push_back(static_cast<Index>(a));
    cs_.reserve(angles_.size());
    for (const Scalar th : angles_) cs_.emplace_back(std::cos(th), std::sin(th));
  }

  Index domain_dim() const override { return h_ * w_; }
  Index block_count() const override { return nsub_; }
  Index block_dim(Index i) const override {
    this->check_index(i);
    return static_cast<Index>(subsets_[static_cast<size_t>(i)].size()) * nd_;
  }

  Index height() const { return h_; }
  Index width() const { return w_; }
  Index n_detectors() const { return nd_; }
  Index n_angles() const { return static_cast<Index>(angles_.size()); }
  Scalar pixel_size() const { return px_; }
  const std::vector<Scalar>& angles() const { return angles_; }
  const std::vector<Index>& subset_angles(Index i) const {
    this->check_index(i);
    return subsets_[static_cast<size_t>(i)];
  }

  Vec<Scalar> apply_block(Index i, const Vec<Scalar>& x) const override {
    this->check_index(i);
    this->check_domain(x);
    const auto& subset = subsets_[static_cast<size_t>(i)];
    Vec<Scalar> out = Vec<Scalar>::Zero(static_cast<Index>(subset.size()) * nd_);
    for (size_t s = 0; s < subset.size(); ++s)
      project_angle(subset[s], x, out.data() + static_cast<Index>(s) * nd_);
    return out;
  }

  Vec<Scalar> adjoint_block(Index i, const Vec<Scalar>& y) const override {
    this->check_block(i, y);
    const auto& subset = subsets_[static_cast<size_t>(i)];
    Vec<Scalar> out = Vec<Scalar>::Zero(h_ * w_);
    for (size_t s = 0; s < subset.size(); ++s)
      backproject_angle(subset[s], y.data() + static_cast<Index>(s) * nd_, out);
    return out;
  }

  // Angle-major global layout (angle index * detectors + detector).
  Vec<Scalar> global_from_blocks(const BlockVec<Scalar>& b) const {
    Vec<Scalar> g(n_angles() * nd_);
    for (Index i = 0; i < nsub_; ++i) {
      const auto& subset = subsets_[static_cast<size_t>(i)];
      for (size_t s = 0; s < subset.size(); ++s)
        g.segment(subset[s] * nd_, nd_) = b[i].segment(static_cast<Index>(s) * nd_, nd_);
    }
    return g;
  }

  BlockVec<Scalar> blocks_from_global(const Vec<Scalar>& g) const {
    if (g.size() != n_angles() * nd_)
      throw std::invalid_argument("projector: global sinogram dim mismatch");
    BlockVec<Scalar> b = BlockVec<Scalar>::zero(this->block_dims());
    for (Index i = 0; i < nsub_; ++i) {
      const auto& subset = subsets_[static_cast<size_t>(i)];
      for (size_t s = 0; s < subset.size(); ++s)
        b[i].segment(static_cast<Index>(s) * nd_, nd_) = g.segment(subset[s] * nd_, nd_);
    }
    return b;
  }

 private:
  // One projection row per detector for angle index a, accumulated into out.
  void project_angle(Index a, const Vec<Scalar>& img, Scalar* out) const {
    const Scalar c = cs_[static_cast<size_t>(a)].first, s = cs_[static_cast<size_t>(a)].second;
    const Scalar cx = Scalar(w_ - 1) / 2, cy = Scalar(h_ - 1) / 2;
    const Scalar t0 = -Scalar(nd_ - 1) / 2 * spacing_;
    if (std::abs(c) >= std::abs(s)) {
      const Scalar weight = px_ / std::abs(c);
      for (Index j = 0; j < nd_; ++j) {
        const Scalar t = t0 + Scalar(j) * spacing_;
        Scalar acc = 0;
        for (Index col = 0; col < w_; ++col) {
          const Scalar xp = Scalar(col) - cx;
          const Scalar sp = (xp + t * s) / c;
          const Scalar yp = t * c + sp * s;
          const Scalar rf = cy - yp;
          const Index r0 = static_cast<Index>(std::floor(rf));
          const Scalar fr = rf - Scalar(r0);
          if (r0 >= 0 && r0 < h_) acc += (Scalar(1) - fr) * img[r0 * w_ + col];
          if (r0 + 1 >= 0 && r0 + 1 < h_) acc += fr * img[(r0 + 1) * w_ + col];
        }
        out[j] = acc * weight;
      }
    } else {
      const Scalar weight = px_ / std::abs(s);
      for (Index j = 0; j < nd_; ++j) {
        const Scalar t = t0 + Scalar(j) * spacing_;
        Scalar acc = 0;
        for (Index row = 0; row < h_; ++row) {
          const Scalar yp = cy - Scalar(row);
          const Scalar sp = (yp - t * c) / s;
          const Scalar xp = -t * s + sp * c;
          const Scalar cf = xp + cx;
          const Index c0 = static_cast<Index>(std::floor(cf));
          const Scalar fc = cf - Scalar(c0);
          if (c0 >= 0 && c0 < w_) acc += (Scalar(1) - fc) * img[row * w_ + c0];
          if (c0 + 1 >= 0 && c0 + 1 < w_) acc += fc * img[row * w_ + c0 + 1];
        }
        out[j] = acc * weight;
      }
    }
  }

  // Exact transpose of project_angle.
  void backproject_angle(Index a, const Scalar* seg, Vec<Scalar>& img) const {
    const Scalar c = cs_[static_cast<size_t>(a)].first, s = cs_[static_cast<size_t>(a)].second;
    const Scalar cx = Scalar(w_ - 1) / 2, cy = Scalar(h_ - 1) / 2;
    const Scalar t0 = -Scalar(nd_ - 1) / 2 * spacing_;
    if (std::abs(c) >= std::abs(s)) {
      const Scalar weight = px_ / std::abs(c);
      for (Index j = 0; j < nd_; ++j) {
        const Scalar t = t0 + Scalar(j) * spacing_;
        const Scalar val = seg[j] * weight;
        if (val == Scalar(0)) continue;
        for (Index col = 0; col < w_; ++col) {
          const Scalar xp = Scalar(col) - cx;
          const Scalar sp = (xp + t * s) / c;
          const Scalar yp = t * c + sp * s;
          const Scalar rf = cy - yp;
          const Index r0 = static_cast<Index>(std::floor(rf));
          const Scalar fr = rf - Scalar(r0);
          if (r0 >= 0 && r0 < h_) img[r0 * w_ + col] += (Scalar(1) - fr) * val;
          if (r0 + 1 >= 0 && r0 + 1 < h_) img[(r0 + 1) * w_ + col] += fr * val;
        }
      }
    } else {
      const Scalar weight = px_ / std::abs(s);
      for (Index j = 0; j < nd_; ++j) {
        const Scalar t = t0 + Scalar(j) * spacing_;
        const Scalar val = seg[j] * weight;
        if (val == Scalar(0)) continue;
        for (Index row = 0; row < h_; ++row) {
          const Scalar yp = cy - Scalar(row);
          const Scalar sp = (yp - t * c) / s;
          const Scalar xp = -t * s + sp * c;
          const Scalar cf = xp + cx;
          const Index c0 = static_cast<Index>(std::floor(cf));
          const Scalar fc = cf - Scalar(c0);
          if (c0 >= 0 && c0 < w_) img[row * w_ + c0] += (Scalar(1) - fc) * val;
          if (c0 + 1 >= 0 && c0 + 1 < w_) img[row * w_ + c0 + 1] += fc * val;
        }
      }
    }
  }

  Index h_, w_;
  std::vector<Scalar> angles_;
  Index nd_, nsub_;
  Scalar px_, spacing_;
  std::vector<std::vector<Index>> subsets_;
  std::vector<std::pair<Scalar, Scalar>> cs_;
};

template <typename Scalar>
std::vector<Scalar> uniform_angles(Index n_angles) {
  if (n_angles < 1) throw std::invalid_argument("angles: need at least one");
  const Scalar pi = Scalar(3.14159265358979323846);
  std::vector<Scalar> a(static_cast<size_t>(n_angles));
  for (Index i = 0; i < n_angles; ++i) a[static_cast<size_t>(i)] = pi * Scalar(i) / Scalar(n_angles);
  return a;
}

// Transmission counts and their log transform, in angle-major order. The
// Poisson stream walks rays in global order, so the draw is independent of
// the subset partition.
template <typename Scalar>
struct Sinogram {
  Index n_angles = 0, n_detectors = 0;
  Scalar i0 = 0;
  uint64_t seed = 0;
  Vec<Scalar> counts;    // integer-valued
  Vec<Scalar> log_data;  // -log(max(counts,1)/i0)
};

template <typename Scalar>
Sinogram<Scalar> simulate_measurements(const RadonBlockOperator<Scalar>& A,
                                       const Phantom<Scalar>& phantom, Scalar i0, uint64_t seed) {
  if (!(i0 > Scalar(0))) throw std::invalid_argument("measurements: source intensity must be positive");
  if (phantom.values.size() != A.domain_dim())
    throw std::invalid_argument("measurements: phantom dim " + std::to_string(phantom.values.size()) +
                                " does not match projector domain " + std::to_string(A.domain_dim()));
  Sinogram<Scalar> sino;
  sino.n_angles = A.n_angles();
  sino.n_detectors = A.n_detectors();
  sino.i0 = i0;
  sino.seed = seed;

  const Vec<Scalar> line_integrals = A.global_from_blocks(apply(A, phantom.values));
  sino.counts.resize(line_integrals.size());
  sino.log_data.resize(line_integrals.size());

  std::mt19937_64 rng(seed);
  for (Index r = 0; r < line_integrals.size(); ++r) {
    const double mean = double(i0) * std::exp(-double(line_integrals[r]));
    std::poisson_distribution<long long> pois(mean);
    const long long n = mean > 0 ? pois(rng) : 0;
    sino.counts[r] = static_cast<Scalar>(n);
    sino.log_data[r] = -std::log(std::max(sino.counts[r], Scalar(1)) / i0);
  }
  return sino;
}

enum class CtModality { SparseView, LowDose };

// Data vector each modality fits, in global order.
template <typename Scalar>
Vec<Scalar> sino_fit_data(CtModality modality, const Sinogram<Scalar>& sino) {
  if (modality == CtModality::SparseView) return sino.log_data;
  return sino.log_data.cwiseMax(Scalar(0));
}

template <typename Scalar>
struct CtGeometry {
  Index height = 64, width = 64;
  Index n_angles = 60;
  Index n_detectors = 0;  // 0: round(1.5 * width)
  Index n_subsets = 10;
  Scalar pixel_size = 0;  // 0: 2 / width (image spans [-1, 1])

  void fill_defaults() {
    if (n_detectors == 0) n_detectors = static_cast<Index>(std::llround(1.5 * double(width)));
    if (pixel_size == Scalar(0)) pixel_size = Scalar(2) / Scalar(width);
  }
};

template <typename Scalar>
struct CtExperiment {
  SaddleProblem<Scalar> problem;
  std::shared_ptr<RadonBlockOperator<Scalar>> op;
  Phantom<Scalar> phantom;
  Sinogram<Scalar> sinogram;
};

// Assembles the saddle problem for one modality from already-built parts.
// Sparse-view fits the log-transformed data by least squares; low-dose
// applies the divergence fit to the same log-domain data, clamped to keep it
// nonnegative (the raw-count scale sits orders of magnitude above any line
// integral, which would pin the minimizer to the box ceiling). g is the
// [0,1] box; the smooth term is the edge-preserving penalty, dropped
// entirely at lambda = 0.
template <typename Scalar>
CtExperiment<Scalar> assemble_experiment(CtModality modality,
                                         std::shared_ptr<RadonBlockOperator<Scalar>> op,
                                         Phantom<Scalar> phantom, Sinogram<Scalar> sinogram,
                                         Scalar lambda) {
  if (phantom.height != op->height() || phantom.width != op->width())
    throw std::invalid_argument("experiment: phantom dims do not match the projector grid");
  if (sinogram.n_angles != op->n_angles() || sinogram.n_detectors != op->n_detectors())
    throw std::invalid_argument("experiment: sinogram dims do not match the projector");

  CtExperiment<Scalar> ex;
  ex.op = op;
  ex.phantom = std::move(phantom);
  ex.sinogram = std::move(sinogram);

  ex.problem.A = op;
  const BlockVec<Scalar> data = op->blocks_from_global(sino_fit_data(modality, ex.sinogram));
  ex.problem.f_blocks.reserve(static_cast<size_t>(op->block_count()));
  for (Index i = 0; i < op->block_count(); ++i) {
    if (modality == CtModality::SparseView)
      ex.problem.f_blocks.push_back(ConjProxableBlock<Scalar>::squared_l2(data[i]));
    else
      ex.problem.f_blocks.push_back(ConjProxableBlock<Scalar>::kl(data[i]));
  }
  ex.problem.g = ProxableFunction<Scalar>::box(0, 1);
  ex.problem.h = lambda > Scalar(0)
                     ? SmoothFunction<Scalar>::edge_preserving(lambda, op->height(), op->width())
                     : SmoothFunction<Scalar>::zero();
  ex.problem.L = lipschitz_bound(ex.problem.h);
  ex.problem.check();
  return ex;
}

// Generates phantom and measurements, then assembles the problem.
template <typename Scalar>
CtExperiment<Scalar> build_problem(CtModality modality, CtGeometry<Scalar> geom, Scalar lambda,
                                   Scalar i0, uint64_t seed) {
  geom.fill_defaults();
  auto op = std::make_shared<RadonBlockOperator<Scalar>>(
      geom.height, geom.width, uniform_angles<Scalar>(geom.n_angles), geom.n_detectors,
      geom.n_subsets, geom.pixel_size);
  Phantom<Scalar> phantom = make_phantom<Scalar>(geom.height, geom.width, geom.pixel_size);
  Sinogram<Scalar> sinogram = simulate_measurements(*op, phantom, i0, seed);
  return assemble_experiment(modality, std::move(op), std::move(phantom), std::move(sinogram),
                             lambda);
}

}  // namespace tos
