#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tos/vec.hpp"

namespace tos {

// Minimal linear-map interface used by the power method and by composed maps.
template <typename Scalar>
struct LinearMap {
  virtual ~LinearMap() = default;
  virtual Index rows() const = 0;
  virtual Index cols() const = 0;
  virtual Vec<Scalar> apply(const Vec<Scalar>& x) const = 0;
  virtual Vec<Scalar> apply_adjoint(const Vec<Scalar>& y) const = 0;
};

// Linear operator partitioned into n row blocks A = [A_1; ...; A_n].
// Implementations must keep apply_block / adjoint_block exact transposes of
// each other; everything downstream (steps, solvers, diagnostics) relies on it.
template <typename Scalar>
class BlockLinearOperator {
 public:
  virtual ~BlockLinearOperator() = default;

  virtual Index domain_dim() const = 0;
  virtual Index block_count() const = 0;
  virtual Index block_dim(Index i) const = 0;

  // A_i x
  virtual Vec<Scalar> apply_block(Index i, const Vec<Scalar>& x) const = 0;
  // A_i^T y_i
  virtual Vec<Scalar> adjoint_block(Index i, const Vec<Scalar>& y) const = 0;

  std::vector<Index> block_dims() const {
    std::vector<Index> d(static_cast<size_t>(block_count()));
    for (Index i = 0; i < block_count(); ++i) d[static_cast<size_t>(i)] = block_dim(i);
    return d;
  }

  Index total_row_dim() const {
    Index r = 0;
    for (Index i = 0; i < block_count(); ++i) r += block_dim(i);
    return r;
  }

 protected:
  void check_domain(const Vec<Scalar>& x) const {
    if (x.size() != domain_dim())
      throw std::invalid_argument("operator apply: domain dim " + std::to_string(domain_dim()) +
                                  ", got vector of dim " + std::to_string(x.size()));
  }

  void check_index(Index i) const {
    if (i < 0 || i >= block_count())
      throw std::invalid_argument("operator block index " + std::to_string(i) + " out of range [0," +
                                  std::to_string(block_count()) + ")");
  }

  void check_block(Index i, const Vec<Scalar>& y) const {
    check_index(i);
    if (y.size() != block_dim(i))
      throw std::invalid_argument("operator adjoint block " + std::to_string(i) + ": block dim " +
                                  std::to_string(block_dim(i)) + ", got vector of dim " +
                                  std::to_string(y.size()));
  }
};

// y = A x, all blocks.
template <typename Scalar>
BlockVec<Scalar> apply(const BlockLinearOperator<Scalar>& A, const Vec<Scalar>& x) {
  BlockVec<Scalar> y;
  y.blocks.reserve(static_cast<size_t>(A.block_count()));
  for (Index i = 0; i < A.block_count(); ++i) y.blocks.push_back(A.apply_block(i, x));
  return y;
}

// A^T y, summed over blocks.
template <typename Scalar>
Vec<Scalar> adjoint_apply(const BlockLinearOperator<Scalar>& A, const BlockVec<Scalar>& y) {
  if (y.block_count() != A.block_count())
    throw std::invalid_argument("adjoint apply: operator has " + std::to_string(A.block_count()) +
                                " blocks, vector has " + std::to_string(y.block_count()));
  Vec<Scalar> x = Vec<Scalar>::Zero(A.domain_dim());
  for (Index i = 0; i < A.block_count(); ++i) x += A.adjoint_block(i, y[i]);
  return x;
}

// Row blocks backed by explicit sparse matrices with a shared column count.
template <typename Scalar>
class SparseBlockOperator : public BlockLinearOperator<Scalar> {
 public:
  using SpMat = Eigen::SparseMatrix<Scalar>;

  explicit SparseBlockOperator(std::vector<SpMat> blocks) : blocks_(std::move(blocks)) {
    if (blocks_.empty()) throw std::invalid_argument("sparse block operator: no blocks");
    for (const auto& b : blocks_)
      if (b.cols() != blocks_.front().cols())
        throw std::invalid_argument("sparse block operator: inconsistent column counts");
  }

  Index domain_dim() const override { return blocks_.front().cols(); }
  Index block_count() const override { return static_cast<Index>(blocks_.size()); }
  Index block_dim(Index i) const override { return blocks_[static_cast<size_t>(i)].rows(); }

  Vec<Scalar> apply_block(Index i, const Vec<Scalar>& x) const override {
    this->check_index(i);
    this->check_domain(x);
    return blocks_[static_cast<size_t>(i)] * x;
  }

  Vec<Scalar> adjoint_block(Index i, const Vec<Scalar>& y) const override {
    this->check_block(i, y);
    return blocks_[static_cast<size_t>(i)].transpose() * y;
  }

  const SpMat& block_matrix(Index i) const { return blocks_[static_cast<size_t>(i)]; }

 private:
  std::vector<SpMat> blocks_;
};

// Views a single row block as a standalone map (for per-block norms).
template <typename Scalar>
class BlockView : public LinearMap<Scalar> {
 public:
  BlockView(const BlockLinearOperator<Scalar>& A, Index i) : A_(A), i_(i) {}

  Index rows() const override { return A_.block_dim(i_); }
  Index cols() const override { return A_.domain_dim(); }
  Vec<Scalar> apply(const Vec<Scalar>& x) const override { return A_.apply_block(i_, x); }
  Vec<Scalar> apply_adjoint(const Vec<Scalar>& y) const override { return A_.adjoint_block(i_, y); }

 private:
  const BlockLinearOperator<Scalar>& A_;
  Index i_;
};

// Views the full stacked operator as one map (for ||A||).
template <typename Scalar>
class FullOperatorView : public LinearMap<Scalar> {
 public:
  explicit FullOperatorView(const BlockLinearOperator<Scalar>& A) : A_(A) {}

  Index rows() const override { return A_.total_row_dim(); }
  Index cols() const override { return A_.domain_dim(); }

  Vec<Scalar> apply(const Vec<Scalar>& x) const override {
    Vec<Scalar> y(rows());
    Index off = 0;
    for (Index i = 0; i < A_.block_count(); ++i) {
      y.segment(off, A_.block_dim(i)) = A_.apply_block(i, x);
      off += A_.block_dim(i);
    }
    return y;
  }

  Vec<Scalar> apply_adjoint(const Vec<Scalar>& y) const override {
    Vec<Scalar> x = Vec<Scalar>::Zero(cols());
    Index off = 0;
    for (Index i = 0; i < A_.block_count(); ++i) {
      x += A_.adjoint_block(i, y.segment(off, A_.block_dim(i)));
      off += A_.block_dim(i);
    }
    return x;
  }

 private:
  const BlockLinearOperator<Scalar>& A_;
};

template <typename Scalar>
struct PowerMethodResult {
  Scalar value = 0;     // spectral-norm estimate, a lower bound up to float error
  int iterations = 0;
  bool converged = false;
};

// Largest singular value via power iteration on A^T A. The Rayleigh quotient
// sequence is nondecreasing, so the estimate approaches the norm from below.
template <typename Scalar>
PowerMethodResult<Scalar> power_method_norm(const LinearMap<Scalar>& A, Scalar tol = Scalar(1e-8),
                                            int max_iter = 1000, uint64_t seed = 12345,
                                            std::vector<Scalar>* history = nullptr) {
  if (A.rows() <= 0 || A.cols() <= 0)
    throw std::invalid_argument("power method: operator has empty rows or cols");
  if (!(tol > Scalar(0))) throw std::invalid_argument("power method: tol must be positive");
  if (max_iter < 1) throw std::invalid_argument("power method: max_iter must be >= 1");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec<Scalar> v(A.cols());
  for (Index j = 0; j < v.size(); ++j) v[j] = static_cast<Scalar>(gauss(rng));
  Scalar vn = v.norm();
  if (vn == Scalar(0)) v.setOnes();
  v /= v.norm();

  PowerMethodResult<Scalar> res;
  Scalar prev = 0;
  for (int it = 1; it <= max_iter; ++it) {
    Vec<Scalar> w = A.apply(v);
    Scalar sigma = w.norm();  // sqrt of Rayleigh quotient of A^T A at unit v
    res.value = sigma;
    res.iterations = it;
    if (history) history->push_back(sigma);
    // An overflowed norm means the true value exceeds the representable range;
    // report infinity instead of letting the next normalization collapse to 0.
    if (!std::isfinite(sigma)) {
      res.value = std::numeric_limits<Scalar>::infinity();
      res.converged = true;
      return res;
    }
    if (sigma == Scalar(0)) {  // v in the null space and A^T w = 0: norm 0 or restart not needed
      res.converged = true;
      return res;
    }
    if (it > 1 && std::abs(sigma - prev) <= tol * std::max(Scalar(1), sigma)) {
      res.converged = true;
      return res;
    }
    prev = sigma;
    Vec<Scalar> u = A.apply_adjoint(w);
    Scalar un = u.norm();
    if (!std::isfinite(un)) {
      res.value = std::numeric_limits<Scalar>::infinity();
      res.converged = true;
      return res;
    }
    if (un == Scalar(0)) {
      res.converged = true;
      return res;
    }
    v = u / un;
  }
  return res;  // converged stays false; estimate is still a valid lower bound
}

// Forward differences with Neumann boundaries on a row-major h-by-w image,
// stacked [horizontal; vertical]; the last column/row of each part is zero.
template <typename Scalar>
Vec<Scalar> finite_difference_2d(const Vec<Scalar>& img, Index h, Index w) {
  if (h < 1 || w < 1) throw std::invalid_argument("finite differences: empty grid");
  if (img.size() != h * w)
    throw std::invalid_argument("finite differences: image of dim " + std::to_string(img.size()) +
                                " does not match " + std::to_string(h) + "x" + std::to_string(w));
  Vec<Scalar> g = Vec<Scalar>::Zero(2 * h * w);
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c + 1 < w; ++c) g[r * w + c] = img[r * w + c + 1] - img[r * w + c];
  const Index voff = h * w;
  for (Index r = 0; r + 1 < h; ++r)
    for (Index c = 0; c < w; ++c) g[voff + r * w + c] = img[(r + 1) * w + c] - img[r * w + c];
  return g;
}

// Exact transpose of finite_difference_2d (negative divergence).
template <typename Scalar>
Vec<Scalar> finite_difference_2d_adjoint(const Vec<Scalar>& grad, Index h, Index w) {
  if (h < 1 || w < 1) throw std::invalid_argument("finite differences: empty grid");
  if (grad.size() != 2 * h * w)
    throw std::invalid_argument("finite differences adjoint: gradient of dim " +
                                std::to_string(grad.size()) + " does not match 2*" +
                                std::to_string(h) + "x" + std::to_string(w));
  Vec<Scalar> img = Vec<Scalar>::Zero(h * w);
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c + 1 < w; ++c) {
      const Scalar u = grad[r * w + c];
      img[r * w + c + 1] += u;
      img[r * w + c] -= u;
    }
  const Index voff = h * w;
  for (Index r = 0; r + 1 < h; ++r)
    for (Index c = 0; c < w; ++c) {
      const Scalar u = grad[voff + r * w + c];
      img[(r + 1) * w + c] += u;
      img[r * w + c] -= u;
    }
  return img;
}

template <typename Scalar>
class FiniteDifferenceMap : public LinearMap<Scalar> {
 public:
  FiniteDifferenceMap(Index h, Index w) : h_(h), w_(w) {}
  Index rows() const override { return 2 * h_ * w_; }
  Index cols() const override { return h_ * w_; }
  Vec<Scalar> apply(const Vec<Scalar>& x) const override { return finite_difference_2d(x, h_, w_); }
  Vec<Scalar> apply_adjoint(const Vec<Scalar>& y) const override {
    return finite_difference_2d_adjoint(y, h_, w_);
  }

 private:
  Index h_, w_;
};

// Text format: "rows cols nnz" header, then nnz lines "i j value", 0-indexed.
template <typename Scalar>
Eigen::SparseMatrix<Scalar> load_triplet_matrix(std::istream& in) {
  Index rows, cols;
  long long nnz;
  if (!(in >> rows >> cols >> nnz))
    throw std::runtime_error("triplet matrix: malformed header (want: rows cols nnz)");
  if (rows < 1 || cols < 1 || nnz < 0)
    throw std::runtime_error("triplet matrix: invalid header dims");
  std::vector<Eigen::Triplet<Scalar>> trips;
  trips.reserve(static_cast<size_t>(nnz));
  for (long long k = 0; k < nnz; ++k) {
    Index i, j;
    double v;
    if (!(in >> i >> j >> v))
      throw std::runtime_error("triplet matrix: truncated at entry " + std::to_string(k) + " of " +
                               std::to_string(nnz));
    if (i < 0 || i >= rows || j < 0 || j >= cols)
      throw std::runtime_error("triplet matrix: entry " + std::to_string(k) + " index (" +
                               std::to_string(i) + "," + std::to_string(j) + ") outside " +
                               std::to_string(rows) + "x" + std::to_string(cols));
    trips.emplace_back(i, j, static_cast<Scalar>(v));
  }
  Eigen::SparseMatrix<Scalar> m(rows, cols);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

template <typename Scalar>
Eigen::SparseMatrix<Scalar> load_triplet_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("triplet matrix: cannot open " + path);
  try {
    return load_triplet_matrix<Scalar>(in);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(std::string(e.what()) + " in " + path);
  }
}

template <typename Scalar>
void save_triplet_matrix(const Eigen::SparseMatrix<Scalar>& m, std::ostream& out) {
  out << m.rows() << " " << m.cols() << " " << m.nonZeros() << "\n";
  out.precision(17);
  for (int k = 0; k < m.outerSize(); ++k)
    for (typename Eigen::SparseMatrix<Scalar>::InnerIterator it(m, k); it; ++it)
      out << it.row() << " " << it.col() << " " << it.value() << "\n";
}

// Splits a single matrix into n contiguous row blocks (sizes differ by at most one).
template <typename Scalar>
std::vector<Eigen::SparseMatrix<Scalar>> partition_rows(const Eigen::SparseMatrix<Scalar>& m,
                                                        Index n) {
  if (n < 1 || n > m.rows())
    throw std::invalid_argument("partition rows: need 1 <= n <= rows, got n=" + std::to_string(n) +
                                " rows=" + std::to_string(m.rows()));
  std::vector<Eigen::SparseMatrix<Scalar>> out;
  out.reserve(static_cast<size_t>(n));
  const Index base = m.rows() / n, extra = m.rows() % n;
  Index off = 0;
  for (Index i = 0; i < n; ++i) {
    const Index sz = base + (i < extra ? 1 : 0);
    out.push_back(Eigen::SparseMatrix<Scalar>(m.middleRows(off, sz)));
    off += sz;
  }
  return out;
}

}  // namespace tos
