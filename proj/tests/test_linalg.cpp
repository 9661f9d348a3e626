#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include "oracles.hpp"
#include "tos/linops.hpp"
#include "tos/vec.hpp"

using tos::BlockVec;
using tos::DiagonalMetric;
using tos::Index;
using Vec = tos::Vec<double>;
using SpMat = Eigen::SparseMatrix<double>;

namespace {

tos::SparseBlockOperator<double> identity_op(Index d) {
  SpMat id(d, d);
  id.setIdentity();
  return tos::SparseBlockOperator<double>({id});
}

}  // namespace

TEST_CASE("block vector arithmetic and shape checks") {
  auto v = BlockVec<double>::zero({2, 3});
  CHECK(v.block_count() == 2);
  CHECK(v.total_dim() == 5);
  CHECK(v[0].size() == 2);
  CHECK(v[1].size() == 3);

  v[0] << 1, 2;
  v[1] << 3, 4, 5;
  auto w = v;
  w *= 2.0;
  CHECK(w[1][2] == 10.0);

  auto s = v + w;
  CHECK(s[0][0] == 3.0);
  s -= v;
  CHECK(s[0][0] == 2.0);

  CHECK(tos::dot(v, w) == doctest::Approx(2.0 * (1 + 4 + 9 + 16 + 25)));
  CHECK(tos::squared_norm(v) == doctest::Approx(55.0));
  CHECK(v.all_finite());
  v[1][0] = std::nan("");
  CHECK_FALSE(v.all_finite());

  auto bad = BlockVec<double>::zero({2, 2});
  CHECK_THROWS_AS(w += bad, std::invalid_argument);
  auto fewer = BlockVec<double>::zero({2});
  CHECK_THROWS_AS(tos::dot(w, fewer), std::invalid_argument);
}

TEST_CASE("diagonal metric uniform and per-entry forms") {
  DiagonalMetric<double> one;
  CHECK(one.max_entry() == 1.0);
  CHECK(one.min_entry() == 1.0);

  DiagonalMetric<double> half(0.5);
  Vec x(3);
  x << 2, 4, 6;
  CHECK(half.apply(x)[2] == 3.0);
  CHECK(half.entry(1) == 0.5);

  Vec d(3);
  d << 1, 2, 4;
  DiagonalMetric<double> m(d);
  CHECK(m.max_entry() == 4.0);
  CHECK(m.min_entry() == 1.0);
  CHECK(m.apply(x)[1] == 8.0);
  // x^T M x and x^T M^{-1} x against hand sums.
  CHECK(m.weighted_sqnorm(x) == doctest::Approx(1 * 4 + 2 * 16 + 4 * 36));
  CHECK(m.inv_weighted_sqnorm(x) == doctest::Approx(4.0 / 1 + 16.0 / 2 + 36.0 / 4));

  Vec neg(2);
  neg << 1, -1;
  CHECK_THROWS_AS(DiagonalMetric<double>{neg}, std::invalid_argument);
  CHECK_THROWS_AS(DiagonalMetric<double>{0.0}, std::invalid_argument);
}

TEST_CASE("apply on identity and zero operators") {
  auto id = identity_op(3);
  Vec x(3);
  x << 1, 2, 3;
  auto y = tos::apply(id, x);
  CHECK(y.block_count() == 1);
  CHECK(y[0].isApprox(x));

  SpMat z(4, 3);  // stays empty
  tos::SparseBlockOperator<double> zero({z});
  auto yz = tos::apply(zero, x);
  CHECK(yz[0].isZero(0.0));
}

TEST_CASE("adjoint_apply on identity and zeros") {
  auto id = identity_op(3);
  BlockVec<double> y;
  y.blocks.push_back(Vec(3));
  y[0] << 1, 2, 3;
  CHECK(tos::adjoint_apply(id, y).isApprox(y[0]));

  auto yzero = BlockVec<double>::zero({3});
  CHECK(tos::adjoint_apply(id, yzero).isZero(0.0));

  auto bad = BlockVec<double>::zero({3, 3});
  CHECK_THROWS_AS(tos::adjoint_apply(id, bad), std::invalid_argument);
}

TEST_CASE("block apply and adjoint match a dense oracle") {
  std::mt19937_64 rng(7);
  auto A = oracles::random_block_operator(3, {4, 4}, rng);
  oracles::Mat D = oracles::dense_full(A);
  REQUIRE(D.rows() == 8);
  REQUIRE(D.cols() == 3);

  Vec x = oracles::random_vec(3, rng);
  auto y = tos::apply(A, x);
  Eigen::VectorXd stacked(8);
  stacked << y[0], y[1];
  CHECK((stacked - D * x).norm() <= 1e-12 * stacked.norm());

  BlockVec<double> z;
  z.blocks.push_back(oracles::random_vec(4, rng));
  z.blocks.push_back(oracles::random_vec(4, rng));
  Eigen::VectorXd zs(8);
  zs << z[0], z[1];
  Vec at = tos::adjoint_apply(A, z);
  CHECK((at - D.transpose() * zs).norm() <= 1e-12 * at.norm());

  // Per-block adjoint equals the full adjoint with the other block zeroed.
  for (Index i = 0; i < 2; ++i) {
    auto zi = BlockVec<double>::zero({4, 4});
    zi[i] = z[i];
    CHECK((A.adjoint_block(i, z[i]) - tos::adjoint_apply(A, zi)).norm() <= 1e-14);
    CHECK((A.apply_block(i, x) - oracles::dense_block(A, i) * x).norm() <= 1e-12);
  }

  CHECK_THROWS_AS(A.apply_block(2, x), std::invalid_argument);
  CHECK_THROWS_AS(A.adjoint_block(-1, z[0]), std::invalid_argument);
  CHECK_THROWS_AS(A.apply_block(0, Vec::Zero(5)), std::invalid_argument);
}

TEST_CASE("apply is linear") {
  std::mt19937_64 rng(11);
  auto A = oracles::random_block_operator(6, {3, 5, 2}, rng);
  Vec x = oracles::random_vec(6, rng), z = oracles::random_vec(6, rng);
  const double a = 0.7, b = -1.9;
  auto lhs = tos::apply(A, Vec(a * x + b * z));
  auto ax = tos::apply(A, x), az = tos::apply(A, z);
  for (Index i = 0; i < 3; ++i) {
    Vec rhs = a * ax[i] + b * az[i];
    CHECK((lhs[i] - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
  }
}

TEST_CASE("adjoint consistency over random vector pairs") {
  std::mt19937_64 rng(13);
  auto A = oracles::random_block_operator(9, {4, 7, 5}, rng);
  const double norm_A = oracles::svd_norm(oracles::dense_full(A));

  tos::FullOperatorView<double> full(A);
  for (int t = 0; t < 100; ++t) {
    Vec x = oracles::random_vec(9, rng);
    Vec z = oracles::random_vec(16, rng);
    const double lhs = full.apply(x).dot(z);
    const double rhs = x.dot(full.apply_adjoint(z));
    CHECK(std::abs(lhs - rhs) <= 1e-10 * x.norm() * z.norm() * norm_A);
  }

  for (Index i = 0; i < 3; ++i) {
    tos::BlockView<double> bi(A, i);
    const double ni = oracles::svd_norm(oracles::dense_block(A, i));
    for (int t = 0; t < 100; ++t) {
      Vec x = oracles::random_vec(9, rng);
      Vec z = oracles::random_vec(bi.rows(), rng);
      CHECK(std::abs(bi.apply(x).dot(z) - x.dot(bi.apply_adjoint(z))) <=
            1e-10 * x.norm() * z.norm() * ni);
    }
  }
}

TEST_CASE("power method matches analytic and SVD norms") {
  auto id = identity_op(3);
  tos::FullOperatorView<double> idv(id);
  auto r = tos::power_method_norm(idv);
  CHECK(r.converged);
  CHECK(r.value == doctest::Approx(1.0).epsilon(1e-8));

  SpMat d(2, 2);
  d.insert(0, 0) = 3.0;
  d.insert(1, 1) = 1.0;
  tos::SparseBlockOperator<double> diag({d});
  tos::FullOperatorView<double> dv(diag);
  CHECK(tos::power_method_norm(dv).value == doctest::Approx(3.0).epsilon(1e-8));

  std::mt19937_64 rng(17);
  oracles::Mat M = oracles::random_matrix(20, 10, rng);
  tos::SparseBlockOperator<double> op({SpMat(M.sparseView())});
  tos::FullOperatorView<double> mv(op);
  const double truth = oracles::svd_norm(M);
  const double tol = 1e-10;
  std::vector<double> history;
  auto rm = tos::power_method_norm(mv, tol, 5000, 12345, &history);
  CHECK(rm.converged);
  CHECK(std::abs(rm.value - truth) <= 1e-6 * truth);
  // Lower-bound property and monotone Rayleigh quotients.
  CHECK(rm.value <= truth + tol);
  for (size_t k = 1; k < history.size(); ++k) CHECK(history[k] >= history[k - 1] - 1e-13);

  SpMat zero(4, 3);
  tos::SparseBlockOperator<double> zop({zero});
  tos::FullOperatorView<double> zv(zop);
  auto rz = tos::power_method_norm(zv);
  CHECK(rz.converged);
  CHECK(rz.value == 0.0);

  CHECK_THROWS_AS(tos::power_method_norm(mv, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(tos::power_method_norm(mv, 1e-8, 0), std::invalid_argument);

  // A norm beyond the representable range must report infinity, not collapse
  // to zero through an overflowed normalization.
  SpMat huge(1, 1);
  huge.insert(0, 0) = 1e200;
  tos::SparseBlockOperator<double> hop({huge});
  tos::FullOperatorView<double> hv(hop);
  auto rh = tos::power_method_norm(hv);
  CHECK(rh.converged);
  CHECK(std::isinf(rh.value));
  CHECK(rh.value > 0);
}

TEST_CASE("finite differences: hand values, operator norm, adjoint") {
  Vec c = Vec::Constant(12, 3.7);
  CHECK(tos::finite_difference_2d(c, 3, 4).isZero(0.0));

  // 2x2 image [[0,1],[0,1]] row-major: horizontal diffs 1 in the left
  // column, all vertical diffs 0 (and Neumann edges stay 0).
  Vec img(4);
  img << 0, 1, 0, 1;
  Vec g = tos::finite_difference_2d(img, 2, 2);
  CHECK(g[0] == 1.0);
  CHECK(g[2] == 1.0);
  CHECK(g[1] == 0.0);
  CHECK(g[3] == 0.0);
  CHECK(g.tail(4).isZero(0.0));

  std::mt19937_64 rng(19);
  tos::FiniteDifferenceMap<double> D(8, 8);
  for (int t = 0; t < 100; ++t) {
    Vec x = oracles::random_vec(64, rng);
    Vec z = oracles::random_vec(128, rng);
    CHECK(std::abs(D.apply(x).dot(z) - x.dot(D.apply_adjoint(z))) <=
          1e-12 * std::max(1.0, x.norm() * z.norm()));
  }

  // ||D||^2 <= 8 with Neumann boundaries, any grid shape.
  for (auto [h, w] : {std::pair<Index, Index>{4, 4}, {3, 7}, {16, 5}}) {
    tos::FiniteDifferenceMap<double> Dm(h, w);
    const double nrm = tos::power_method_norm(Dm, 1e-10, 5000).value;
    CHECK(nrm * nrm <= 8.0 + 1e-8);
  }

  CHECK_THROWS_AS(tos::finite_difference_2d(img, 2, 3), std::invalid_argument);
  CHECK_THROWS_AS(tos::finite_difference_2d_adjoint(img, 2, 2), std::invalid_argument);
  CHECK_THROWS_AS(tos::finite_difference_2d(img, 0, 4), std::invalid_argument);
}

TEST_CASE("triplet text round trip and parse errors") {
  std::mt19937_64 rng(23);
  oracles::Mat M = oracles::random_matrix(5, 4, rng);
  M(2, 1) = 0.0;
  SpMat s = M.sparseView();

  std::stringstream buf;
  tos::save_triplet_matrix(s, buf);
  SpMat back = tos::load_triplet_matrix<double>(buf);
  CHECK(back.rows() == 5);
  CHECK(back.cols() == 4);
  CHECK((oracles::Mat(back) - oracles::Mat(s)).norm() == 0.0);

  const std::string path = "/tmp/tos_triplet_test.txt";
  {
    std::ofstream out(path);
    tos::save_triplet_matrix(s, out);
  }
  SpMat disk = tos::load_triplet_matrix<double>(path);
  CHECK((oracles::Mat(disk) - oracles::Mat(s)).norm() == 0.0);
  std::remove(path.c_str());

  std::stringstream bad1("not a header");
  CHECK_THROWS_AS(tos::load_triplet_matrix<double>(bad1), std::runtime_error);
  std::stringstream bad2("2 2 3\n0 0 1.0\n1 1 2.0");  // promises 3 entries, has 2
  CHECK_THROWS_AS(tos::load_triplet_matrix<double>(bad2), std::runtime_error);
  std::stringstream bad3("2 2 1\n2 0 1.0");  // row index out of range
  CHECK_THROWS_AS(tos::load_triplet_matrix<double>(bad3), std::runtime_error);
  std::stringstream bad4("-1 2 0");
  CHECK_THROWS_AS(tos::load_triplet_matrix<double>(bad4), std::runtime_error);
  CHECK_THROWS_AS(tos::load_triplet_matrix<double>("/nonexistent/xyz.txt"), std::runtime_error);
}

TEST_CASE("row partition covers the matrix in order") {
  std::mt19937_64 rng(29);
  oracles::Mat M = oracles::random_matrix(7, 3, rng);
  SpMat s = M.sparseView();
  auto parts = tos::partition_rows(s, Index(3));
  REQUIRE(parts.size() == 3);
  CHECK(parts[0].rows() == 3);  // 7 = 3 + 2 + 2, extras go first
  CHECK(parts[1].rows() == 2);
  CHECK(parts[2].rows() == 2);
  Index off = 0;
  for (const auto& p : parts) {
    CHECK((oracles::Mat(p) - M.middleRows(off, p.rows())).norm() == 0.0);
    off += p.rows();
  }
  CHECK(off == 7);

  CHECK_THROWS_AS(tos::partition_rows(s, Index(0)), std::invalid_argument);
  CHECK_THROWS_AS(tos::partition_rows(s, Index(8)), std::invalid_argument);
}
