#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tos {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Index = Eigen::Index;

// Dual-space vector partitioned into the row blocks of a block operator.
template <typename Scalar>
struct BlockVec {
  std::vector<Vec<Scalar>> blocks;

  BlockVec() = default;
  explicit BlockVec(std::vector<Vec<Scalar>> b) : blocks(std::move(b)) {}

  Index block_count() const { return static_cast<Index>(blocks.size()); }

  Index total_dim() const {
    Index n = 0;
    for (const auto& b : blocks) n += b.size();
    return n;
  }

  Vec<Scalar>& operator[](Index i) { return blocks[static_cast<size_t>(i)]; }
  const Vec<Scalar>& operator[](Index i) const { return blocks[static_cast<size_t>(i)]; }

  static BlockVec zero(const std::vector<Index>& dims) {
    BlockVec v;
    v.blocks.reserve(dims.size());
    for (Index d : dims) v.blocks.push_back(Vec<Scalar>::Zero(d));
    return v;
  }

  BlockVec& operator+=(const BlockVec& rhs) {
    check_same_shape(rhs, "+=");
    for (size_t i = 0; i < blocks.size(); ++i) blocks[i] += rhs.blocks[i];
    return *this;
  }

  BlockVec& operator-=(const BlockVec& rhs) {
    check_same_shape(rhs, "-=");
    for (size_t i = 0; i < blocks.size(); ++i) blocks[i] -= rhs.blocks[i];
    return *this;
  }

  BlockVec& operator*=(Scalar a) {
    for (auto& b : blocks) b *= a;
    return *this;
  }

  bool all_finite() const {
    for (const auto& b : blocks)
      if (!b.allFinite()) return false;
    return true;
  }

  void check_same_shape(const BlockVec& rhs, const char* what) const {
    if (blocks.size() != rhs.blocks.size())
      throw std::invalid_argument(std::string("block vector ") + what + ": block counts " +
                                  std::to_string(blocks.size()) + " vs " +
                                  std::to_string(rhs.blocks.size()));
    for (size_t i = 0; i < blocks.size(); ++i)
      if (blocks[i].size() != rhs.blocks[i].size())
        throw std::invalid_argument(std::string("block vector ") + what + ": block " +
                                    std::to_string(i) + " dims " +
                                    std::to_string(blocks[i].size()) + " vs " +
                                    std::to_string(rhs.blocks[i].size()));
  }
};

template <typename Scalar>
Scalar dot(const BlockVec<Scalar>& a, const BlockVec<Scalar>& b) {
  a.check_same_shape(b, "dot");
  Scalar s = 0;
  for (size_t i = 0; i < a.blocks.size(); ++i) s += a.blocks[i].dot(b.blocks[i]);
  return s;
}

template <typename Scalar>
Scalar squared_norm(const BlockVec<Scalar>& a) {
  Scalar s = 0;
  for (const auto& b : a.blocks) s += b.squaredNorm();
  return s;
}

template <typename Scalar>
BlockVec<Scalar> operator-(const BlockVec<Scalar>& a, const BlockVec<Scalar>& b) {
  BlockVec<Scalar> r = a;
  r -= b;
  return r;
}

template <typename Scalar>
BlockVec<Scalar> operator+(const BlockVec<Scalar>& a, const BlockVec<Scalar>& b) {
  BlockVec<Scalar> r = a;
  r += b;
  return r;
}

template <typename Scalar>
BlockVec<Scalar> operator*(Scalar a, const BlockVec<Scalar>& v) {
  BlockVec<Scalar> r = v;
  r *= a;
  return r;
}

// Step metric: positive diagonal, stored either as one scalar or a full diagonal.
template <typename Scalar>
class DiagonalMetric {
 public:
  DiagonalMetric() : uniform_(true), scale_(1) {}

  explicit DiagonalMetric(Scalar s) : uniform_(true), scale_(s) {
    if (!(s > Scalar(0))) throw std::invalid_argument("diagonal metric: scale must be positive");
  }

  explicit DiagonalMetric(Vec<Scalar> d) : uniform_(false), scale_(0), diag_(std::move(d)) {
    if (diag_.size() == 0 || (diag_.array() <= Scalar(0)).any())
      throw std::invalid_argument("diagonal metric: entries must be positive");
  }

  bool uniform() const { return uniform_; }
  Scalar scale() const { return scale_; }

  Scalar max_entry() const { return uniform_ ? scale_ : diag_.maxCoeff(); }
  Scalar min_entry() const { return uniform_ ? scale_ : diag_.minCoeff(); }

  Scalar entry(Index j) const { return uniform_ ? scale_ : diag_[j]; }

  // M x
  Vec<Scalar> apply(const Vec<Scalar>& x) const {
    if (uniform_) return scale_ * x;
    require_dim(x);
    return diag_.cwiseProduct(x);
  }

  // ||x||_M^2 = x^T M x
  Scalar weighted_sqnorm(const Vec<Scalar>& x) const {
    if (uniform_) return scale_ * x.squaredNorm();
    require_dim(x);
    return (diag_.array() * x.array().square()).sum();
  }

  // ||x||_{M^{-1}}^2
  Scalar inv_weighted_sqnorm(const Vec<Scalar>& x) const {
    if (uniform_) return x.squaredNorm() / scale_;
    require_dim(x);
    return (x.array().square() / diag_.array()).sum();
  }

 private:
  void require_dim(const Vec<Scalar>& x) const {
    if (x.size() != diag_.size())
      throw std::invalid_argument("diagonal metric: dim " + std::to_string(diag_.size()) +
                                  " applied to vector of dim " + std::to_string(x.size()));
  }

  bool uniform_;
  Scalar scale_;
  Vec<Scalar> diag_;
};

}  // namespace tos
