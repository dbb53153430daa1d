#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "rgrk/decomp.hpp"
#include "rgrk/rng.hpp"

using rgrk::Index;
using rgrk::Mat;

namespace {

Mat random_mat(Index rows, Index cols, std::uint64_t seed) {
  rgrk::NormalGenerator gen({seed, 0});
  Mat m(rows, cols);
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = gen.next();
  return m;
}

double orthonormality_defect(const Mat& q) {
  const Mat g = rgrk::multiply(rgrk::transpose(q), q);
  double worst = 0.0;
  for (Index i = 0; i < g.rows(); ++i)
    for (Index j = 0; j < g.cols(); ++j)
      worst = std::max(worst, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
  return worst;
}

Mat reconstruct(const rgrk::SvdResult& s) {
  Mat us = s.left_vectors;
  for (Index i = 0; i < us.rows(); ++i)
    for (Index j = 0; j < us.cols(); ++j)
      us(i, j) *= s.singular_values[static_cast<std::size_t>(j)];
  return rgrk::multiply(us, rgrk::transpose(s.right_vectors));
}

}  // namespace

TEST_CASE("svd of a diagonal matrix") {
  const Mat a = Mat::from_rows({{2.0, 0.0}, {0.0, 1.0}});
  const rgrk::SvdResult s = rgrk::svd(a);
  REQUIRE(s.singular_values.size() == 2);
  REQUIRE(s.singular_values[0] == Catch::Approx(2.0).epsilon(1e-14));
  REQUIRE(s.singular_values[1] == Catch::Approx(1.0).epsilon(1e-14));
  REQUIRE(s.numerical_rank == 2);
  REQUIRE(rgrk::max_abs_diff(reconstruct(s), a) < 1e-13);
}

TEST_CASE("svd properties on random rectangular matrices") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    for (auto [rows, cols] : {std::pair<Index, Index>{8, 5}, {5, 8}, {6, 6}}) {
      const Mat a = random_mat(rows, cols, seed * 100 + static_cast<std::uint64_t>(rows));
      const rgrk::SvdResult s = rgrk::svd(a);
      const Index k = static_cast<Index>(s.singular_values.size());
      REQUIRE(k == std::min(rows, cols));
      for (Index i = 1; i < k; ++i)
        REQUIRE(s.singular_values[static_cast<std::size_t>(i - 1)] >=
                s.singular_values[static_cast<std::size_t>(i)]);
      REQUIRE(orthonormality_defect(s.left_vectors) < 1e-10);
      REQUIRE(orthonormality_defect(s.right_vectors) < 1e-10);
      REQUIRE(rgrk::max_abs_diff(reconstruct(s), a) < 1e-10);

      const std::vector<double> ref = oracle::singular_values(a);
      for (Index i = 0; i < k; ++i)
        REQUIRE(s.singular_values[static_cast<std::size_t>(i)] ==
                Catch::Approx(ref[static_cast<std::size_t>(i)]).margin(1e-8));
    }
  }
}

TEST_CASE("svd detects rank deficiency") {
  // Rank-1: outer product of two vectors.
  Mat a(6, 4);
  const Mat u = random_mat(6, 1, 77);
  const Mat v = random_mat(4, 1, 78);
  for (Index i = 0; i < 6; ++i)
    for (Index j = 0; j < 4; ++j) a(i, j) = u(i, 0) * v(j, 0);
  const rgrk::SvdResult s = rgrk::svd(a);
  REQUIRE(s.numerical_rank == 1);
  for (std::size_t i = 1; i < s.singular_values.size(); ++i)
    REQUIRE(s.singular_values[i] <= s.rank_tol);
  REQUIRE(rgrk::max_abs_diff(reconstruct(s), a) < 1e-10);
}

TEST_CASE("svd copes with dead and duplicated columns") {
  // Duplicated or linearly dependent columns turn into roundoff-sized
  // leftovers during the orthogonalization sweeps. Those leftovers must be
  // deflated rather than rotated forever.
  const Mat u = random_mat(9, 3, 301);

  SECTION("exact duplicates") {
    Mat a(9, 6);
    for (Index i = 0; i < 9; ++i) {
      for (Index j = 0; j < 3; ++j) {
        a(i, 2 * j) = u(i, j);
        a(i, 2 * j + 1) = u(i, j);
      }
    }
    const rgrk::SvdResult s = rgrk::svd(a);
    REQUIRE(s.numerical_rank == 3);
    REQUIRE(orthonormality_defect(s.left_vectors) < 1e-10);
    REQUIRE(orthonormality_defect(s.right_vectors) < 1e-10);
    REQUIRE(rgrk::max_abs_diff(reconstruct(s), a) < 1e-10);
  }

  SECTION("perturbed duplicates across scales") {
    for (double eps : {1e-8, 1e-13, 1e-16}) {
      Mat a(9, 6);
      const Mat w = random_mat(9, 3, 302);
      for (Index i = 0; i < 9; ++i) {
        for (Index j = 0; j < 3; ++j) {
          a(i, 2 * j) = u(i, j);
          a(i, 2 * j + 1) = u(i, j) + eps * w(i, j);
        }
      }
      const rgrk::SvdResult s = rgrk::svd(a);
      REQUIRE(orthonormality_defect(s.left_vectors) < 1e-10);
      REQUIRE(rgrk::max_abs_diff(reconstruct(s), a) < 1e-9);
    }
  }

  SECTION("zero columns and rows") {
    Mat a(7, 5);
    const Mat r = random_mat(7, 2, 303);
    for (Index i = 0; i < 7; ++i) {
      a(i, 1) = r(i, 0);
      a(i, 3) = r(i, 1);
    }
    for (Index j = 0; j < 5; ++j) a(6, j) = 0.0;
    const rgrk::SvdResult s = rgrk::svd(a);
    REQUIRE(s.numerical_rank == 2);
    REQUIRE(orthonormality_defect(s.left_vectors) < 1e-10);
    REQUIRE(rgrk::max_abs_diff(reconstruct(s), a) < 1e-12);

    REQUIRE_NOTHROW(rgrk::svd(Mat(4, 3)));
    REQUIRE(rgrk::svd(Mat(4, 3)).numerical_rank == 0);
  }
}

TEST_CASE("householder qr") {
  const Mat a = random_mat(7, 4, 55);
  const rgrk::QrResult qr = rgrk::householder_qr(a);
  REQUIRE(qr.q.rows() == 7);
  REQUIRE(qr.q.cols() == 4);
  REQUIRE(qr.r.rows() == 4);
  REQUIRE(qr.r.cols() == 4);
  REQUIRE(orthonormality_defect(qr.q) < 1e-12);
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < i; ++j) REQUIRE(qr.r(i, j) == 0.0);
  REQUIRE(rgrk::max_abs_diff(rgrk::multiply(qr.q, qr.r), a) < 1e-12);
  REQUIRE_THROWS_AS(rgrk::householder_qr(rgrk::transpose(a)), std::invalid_argument);
}

TEST_CASE("pinv_solution recovers the unique solution of a full-rank system") {
  const Mat a = random_mat(6, 3, 91);
  const Mat x = random_mat(3, 3, 92);
  const Mat b = random_mat(3, 5, 93);
  const Mat c = oracle::matmul(oracle::matmul(a, x), b);
  const Mat got = rgrk::pinv_solution(a, c, b);
  REQUIRE(rgrk::max_abs_diff(got, x) < 1e-10);
}

TEST_CASE("pinv_solution with identity factors returns C") {
  const Mat c = random_mat(3, 3, 101);
  const Mat got = rgrk::pinv_solution(Mat::identity(3), c, Mat::identity(3));
  REQUIRE(rgrk::max_abs_diff(got, c) < 1e-12);
}

TEST_CASE("pinv_solution solves rank-deficient consistent systems") {
  // A has rank 2 < 3; the right-hand side is built from a planted solution so
  // the system stays consistent, and the returned solution must satisfy it.
  Mat a(5, 3);
  const Mat f = random_mat(5, 2, 111);
  const Mat g = random_mat(2, 3, 112);
  a = rgrk::multiply(f, g);
  const Mat planted = random_mat(3, 3, 113);
  const Mat b = random_mat(3, 4, 114);
  const Mat c = oracle::matmul(oracle::matmul(a, planted), b);
  const Mat got = rgrk::pinv_solution(a, c, b);
  const Mat r = oracle::residual(c, a, got, b);
  REQUIRE(std::sqrt(oracle::frob_sq(r)) < 1e-9 * std::sqrt(oracle::frob_sq(c)));
  // Minimum norm among solutions: no larger than the planted one.
  REQUIRE(oracle::frob_sq(got) <= oracle::frob_sq(planted) * (1.0 + 1e-12));
}
