#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "rgrk/problems.hpp"

using rgrk::Family;
using rgrk::Index;
using rgrk::Mat;
using rgrk::ProblemInstance;

namespace {

bool bitwise_equal(const Mat& a, const Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
}

double consistency_gap(const ProblemInstance& inst) {
  const Mat r = oracle::residual(inst.c, inst.a, *inst.x_star, inst.b);
  return std::sqrt(oracle::frob_sq(r)) /
         std::max(std::sqrt(oracle::frob_sq(inst.c)), 1e-300);
}

}  // namespace

TEST_CASE("family parsing") {
  REQUIRE(rgrk::family_from_string("dense") == Family::Dense);
  REQUIRE(rgrk::family_from_string("sparse") == Family::Sparse);
  REQUIRE(rgrk::family_from_string("block") == Family::Block);
  REQUIRE(rgrk::family_from_string("lowrank") == Family::LowRank);
  REQUIRE_THROWS_AS(rgrk::family_from_string("banded"), std::invalid_argument);
  for (Family f : {Family::Dense, Family::Sparse, Family::Block, Family::LowRank})
    REQUIRE(rgrk::family_from_string(rgrk::family_name(f)) == f);
}

TEST_CASE("all generators produce valid consistent instances") {
  for (std::uint64_t seed : {0ull, 5ull, 17ull}) {
    const rgrk::RngSpec rng{seed, 0};
    for (Family f : {Family::Dense, Family::Sparse, Family::Block, Family::LowRank}) {
      const ProblemInstance inst = rgrk::generate(f, 16, 6, 10, 3, 3, rng);
      INFO(inst.label);
      REQUIRE_NOTHROW(rgrk::validate_instance(inst));
      REQUIRE(inst.a.rows() == 16);
      REQUIRE(inst.a.cols() == 6);
      REQUIRE(inst.b.rows() == 6);
      REQUIRE(inst.b.cols() == 10);
      REQUIRE(inst.c.rows() == 16);
      REQUIRE(inst.c.cols() == 10);
      REQUIRE(inst.x_star.has_value());
      REQUIRE(inst.x_star->rows() == 6);
      REQUIRE(consistency_gap(inst) < 1e-10);
      REQUIRE(!inst.label.empty());
    }
  }
}

TEST_CASE("generation is deterministic in the rng spec") {
  for (Family f : {Family::Dense, Family::Sparse, Family::Block, Family::LowRank}) {
    const ProblemInstance one = rgrk::generate(f, 12, 4, 8, 2, 2, {9, 1});
    const ProblemInstance two = rgrk::generate(f, 12, 4, 8, 2, 2, {9, 1});
    const ProblemInstance other = rgrk::generate(f, 12, 4, 8, 2, 2, {10, 1});
    REQUIRE(bitwise_equal(one.a, two.a));
    REQUIRE(bitwise_equal(one.b, two.b));
    REQUIRE(bitwise_equal(one.c, two.c));
    REQUIRE_FALSE(bitwise_equal(one.a, other.a));
  }
}

TEST_CASE("sparse instances have zero entries but no zero rows") {
  const ProblemInstance inst = rgrk::gen_sparse(30, 6, 10, {3, 0});
  Index zeros = 0;
  for (Index k = 0; k < inst.a.size(); ++k)
    if (inst.a.data()[k] == 0.0) ++zeros;
  REQUIRE(zeros > inst.a.size() / 2);
  for (double s : rgrk::row_norms_sq(inst.a)) REQUIRE(s > 0.0);
}

TEST_CASE("block structure and minimum-norm oracle") {
  const ProblemInstance inst = rgrk::gen_block(12, 6, 8, {4, 0});
  // The tiling repeats the top-left block in all four quadrants.
  for (Index i = 0; i < 6; ++i)
    for (Index j = 0; j < 3; ++j) {
      REQUIRE(inst.a(i, j) == inst.a(i + 6, j));
      REQUIRE(inst.a(i, j) == inst.a(i, j + 3));
      REQUIRE(inst.a(i, j) == inst.a(i + 6, j + 3));
    }
  // x_star is the least-norm solution, so applying the pseudoinverse again
  // reproduces it.
  const Mat again = rgrk::pinv_solution(inst.a, inst.c, inst.b);
  REQUIRE(rgrk::max_abs_diff(again, *inst.x_star) < 1e-10);
}

TEST_CASE("lowrank generator hits the requested ranks") {
  const ProblemInstance inst = rgrk::gen_lowrank(14, 6, 9, 4, 3, {8, 0});
  REQUIRE(rgrk::svd(inst.a).numerical_rank == 4);
  REQUIRE(rgrk::svd(inst.b).numerical_rank == 3);
  REQUIRE(inst.label.find("r4x3") != std::string::npos);
  REQUIRE_THROWS_AS(rgrk::gen_lowrank(14, 6, 9, 7, 3, {8, 0}), std::invalid_argument);
}

TEST_CASE("validate_instance rejects broken inputs") {
  ProblemInstance inst = rgrk::gen_dense(10, 4, 6, {1, 0});

  SECTION("zero row in A") {
    for (Index j = 0; j < inst.a.cols(); ++j) inst.a(2, j) = 0.0;
    REQUIRE_THROWS_AS(rgrk::validate_instance(inst), std::invalid_argument);
  }
  SECTION("zero column in B") {
    for (Index i = 0; i < inst.b.rows(); ++i) inst.b(i, 1) = 0.0;
    REQUIRE_THROWS_AS(rgrk::validate_instance(inst), std::invalid_argument);
  }
  SECTION("shape mismatch") {
    inst.c = Mat(3, 3);
    REQUIRE_THROWS_AS(rgrk::validate_instance(inst), std::invalid_argument);
  }
  SECTION("non-finite data") {
    inst.a(0, 0) = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(rgrk::validate_instance(inst), std::invalid_argument);
  }
  SECTION("inconsistent x_star") {
    inst.x_star->operator()(0, 0) += 1.0;
    REQUIRE_THROWS_AS(rgrk::validate_instance(inst), std::invalid_argument);
  }
  SECTION("dimension ordering m >= n and p >= n") {
    ProblemInstance bad = inst;
    bad.a = Mat(3, 4);  // m < n
    REQUIRE_THROWS_AS(rgrk::validate_instance(bad), std::invalid_argument);
  }
}

TEST_CASE("save and load round trip bit-exactly") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "rgrk_test_instance";
  fs::remove_all(dir);

  const ProblemInstance inst = rgrk::gen_lowrank(10, 4, 7, 2, 2, {123, 4});
  rgrk::save_instance(inst, dir);
  REQUIRE(fs::exists(dir / "A.csv"));
  REQUIRE(fs::exists(dir / "meta.json"));

  const ProblemInstance back = rgrk::load_instance(dir);
  REQUIRE(bitwise_equal(back.a, inst.a));
  REQUIRE(bitwise_equal(back.b, inst.b));
  REQUIRE(bitwise_equal(back.c, inst.c));
  REQUIRE(back.x_star.has_value());
  REQUIRE(bitwise_equal(*back.x_star, *inst.x_star));
  REQUIRE(back.label == inst.label);
  REQUIRE(back.rng.seed == 123);
  REQUIRE(back.rng.stream == 4);
  fs::remove_all(dir);
}

TEST_CASE("matrix csv round trip") {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "rgrk_roundtrip.csv";
  rgrk::NormalGenerator gen({55, 0});
  Mat m(5, 3);
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = gen.next() * std::pow(10.0, k % 7 - 3);
  m(0, 0) = 0.1;  // not exactly representable; shortest round trip must hold
  m(1, 1) = -0.0;
  rgrk::save_matrix_csv(m, path);
  const Mat back = rgrk::load_matrix_csv(path);
  REQUIRE(bitwise_equal(back, m));
  fs::remove(path);
}
