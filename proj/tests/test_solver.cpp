#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <vector>

#include "oracles.hpp"
#include "rgrk/problems.hpp"
#include "rgrk/solver.hpp"

using rgrk::Index;
using rgrk::IndexPair;
using rgrk::Mat;
using rgrk::Method;
using rgrk::ProblemInstance;

namespace {

ProblemInstance identity_instance(const Mat& c) {
  ProblemInstance inst;
  inst.a = Mat::identity(c.rows());
  inst.b = Mat::identity(c.cols());
  inst.c = c;
  inst.x_star = c;
  inst.label = "identity";
  return inst;
}

bool bitwise_equal(const Mat& a, const Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("loss matrix") {
  SECTION("zero residual gives zero loss") {
    const Mat r(3, 4);
    const std::vector<double> an{1.0, 2.0, 3.0}, bn{1.0, 1.0, 1.0, 1.0};
    const Mat w = rgrk::loss_matrix(r, an, bn);
    for (Index k = 0; k < w.size(); ++k) REQUIRE(w.data()[k] == 0.0);
  }
  SECTION("unit norms square the residual") {
    const Mat r = Mat::from_rows({{2.0, 0.0}, {0.0, 3.0}});
    const std::vector<double> ones{1.0, 1.0};
    const Mat w = rgrk::loss_matrix(r, ones, ones);
    REQUIRE(w(0, 0) == 4.0);
    REQUIRE(w(1, 1) == 9.0);
    REQUIRE(w(0, 1) == 0.0);
  }
  SECTION("hand example") {
    const Mat r = Mat::from_rows({{1.0, 2.0}});
    const std::vector<double> an{4.0}, bn{1.0, 4.0};
    const Mat w = rgrk::loss_matrix(r, an, bn);
    REQUIRE(w(0, 0) == Catch::Approx(0.25).epsilon(1e-14));
    REQUIRE(w(0, 1) == Catch::Approx(0.25).epsilon(1e-14));
  }
  SECTION("length mismatch throws") {
    const Mat r(2, 2);
    const std::vector<double> an{1.0}, bn{1.0, 1.0};
    REQUIRE_THROWS_AS(rgrk::loss_matrix(r, an, bn), std::invalid_argument);
  }
}

TEST_CASE("greedy threshold") {
  const Mat w = Mat::from_rows({{4.0, 0.0}, {0.0, 9.0}});
  SECTION("hand example") {
    const double delta = rgrk::greedy_threshold(w, 13.0, 0.5, 2.0, 2.0);
    REQUIRE(delta == Catch::Approx(0.5 * 9.0 / 13.0 + 0.5 / 4.0).epsilon(1e-14));
    REQUIRE(delta == Catch::Approx(0.471154).margin(5e-7));
  }
  SECTION("theta endpoints") {
    REQUIRE(rgrk::greedy_threshold(w, 13.0, 1.0, 2.0, 2.0) ==
            Catch::Approx(9.0 / 13.0).epsilon(1e-14));
    REQUIRE(rgrk::greedy_threshold(w, 13.0, 0.0, 2.0, 2.0) ==
            Catch::Approx(1.0 / 4.0).epsilon(1e-14));
  }
  SECTION("zero residual norm is rejected") {
    REQUIRE_THROWS_AS(rgrk::greedy_threshold(w, 0.0, 0.5, 2.0, 2.0), std::invalid_argument);
  }
}

TEST_CASE("index set construction") {
  SECTION("hand example keeps only the large loss") {
    const Mat w = Mat::from_rows({{4.0, 0.0}, {0.0, 9.0}});
    const double delta = rgrk::greedy_threshold(w, 13.0, 0.5, 2.0, 2.0);
    const std::vector<IndexPair> set = rgrk::build_index_set(w, delta, 13.0);
    REQUIRE(set.size() == 1);
    REQUIRE(set[0] == IndexPair{1, 1});
  }
  SECTION("constant losses all qualify") {
    // All norms one, |R| constant: every entry sits at the max.
    Mat w(3, 4);
    for (Index k = 0; k < w.size(); ++k) w.data()[k] = 1.0;
    const double r2 = 12.0;
    const double delta = rgrk::greedy_threshold(w, r2, 0.0, 3.0, 4.0);
    const std::vector<IndexPair> set = rgrk::build_index_set(w, delta, r2);
    REQUIRE(set.size() == 12);
  }
  SECTION("theta one keeps the argmax") {
    const Mat w = Mat::from_rows({{1.0, 5.0}, {2.0, 3.0}});
    const double r2 = 11.0;
    const double delta = rgrk::greedy_threshold(w, r2, 1.0, 2.0, 2.0);
    const std::vector<IndexPair> set = rgrk::build_index_set(w, delta, r2);
    REQUIRE(set.size() == 1);
    REQUIRE(set[0] == IndexPair{0, 1});
  }
  SECTION("the maximizing entry always survives roundoff") {
    rgrk::NormalGenerator gen({17, 0});
    for (int rep = 0; rep < 50; ++rep) {
      Mat w(4, 5);
      for (Index k = 0; k < w.size(); ++k) {
        const double g = gen.next();
        w.data()[k] = g * g;
      }
      double r2 = 0.0;
      for (Index k = 0; k < w.size(); ++k) r2 += w.data()[k];
      const double delta = rgrk::greedy_threshold(w, r2, 0.9, 4.0, 5.0);
      REQUIRE_FALSE(rgrk::build_index_set(w, delta, r2).empty());
    }
  }
}

TEST_CASE("index sampling") {
  SECTION("singleton set is returned directly") {
    const Mat r = Mat::from_rows({{5.0}});
    const std::vector<IndexPair> set{{0, 0}};
    rgrk::Xoshiro256pp rng({1, 0});
    REQUIRE(rgrk::sample_index(set, r, rgrk::Sampling::Proportional, rng) == IndexPair{0, 0});
  }
  SECTION("consumes exactly one draw") {
    const Mat r = Mat::from_rows({{1.0, 2.0}});
    const std::vector<IndexPair> set{{0, 0}, {0, 1}};
    rgrk::Xoshiro256pp used({9, 9});
    rgrk::Xoshiro256pp ref({9, 9});
    ref.next_u64();
    rgrk::sample_index(set, r, rgrk::Sampling::Proportional, used);
    REQUIRE(used.next_u64() == ref.next_u64());
  }
  SECTION("proportional frequencies follow squared residuals") {
    const Mat r = Mat::from_rows({{1.0, std::sqrt(3.0)}});
    const std::vector<IndexPair> set{{0, 0}, {0, 1}};
    rgrk::Xoshiro256pp rng({31, 0});
    int first = 0;
    const int n = 100000;
    for (int k = 0; k < n; ++k)
      if (rgrk::sample_index(set, r, rgrk::Sampling::Proportional, rng) == IndexPair{0, 0})
        ++first;
    REQUIRE(static_cast<double>(first) / n == Catch::Approx(0.25).margin(0.01));
  }
  SECTION("uniform frequencies are flat") {
    const Mat r = Mat::from_rows({{1.0, 2.0, 3.0, 4.0}});
    const std::vector<IndexPair> set{{0, 0}, {0, 1}, {0, 2}, {0, 3}};
    rgrk::Xoshiro256pp rng({32, 0});
    int counts[4] = {0, 0, 0, 0};
    const int n = 100000;
    for (int k = 0; k < n; ++k) ++counts[rgrk::sample_index(set, r, rgrk::Sampling::Uniform, rng).j];
    for (int c : counts)
      REQUIRE(static_cast<double>(c) / n == Catch::Approx(0.25).margin(0.01));
  }
}

TEST_CASE("single steps on the identity system") {
  const Mat c = Mat::from_rows({{2.0, 0.0}, {0.0, 3.0}});
  const ProblemInstance inst = identity_instance(c);

  SECTION("plain step writes the sampled entry") {
    rgrk::SolverState st = rgrk::init_solver_state(inst, Method::MeRgrk);
    rgrk::me_rgrk_step(st, inst, {0, 0});
    REQUIRE(st.x(0, 0) == 2.0);
    REQUIRE(st.x(0, 1) == 0.0);
    REQUIRE(st.x(1, 0) == 0.0);
    REQUIRE(st.x(1, 1) == 0.0);
    REQUIRE(st.iter == 1);
  }
  SECTION("already satisfied pair leaves the iterate alone") {
    rgrk::SolverState st = rgrk::init_solver_state(inst, Method::MeRgrk);
    const double v = rgrk::me_rgrk_step(st, inst, {0, 0});
    rgrk::maintain_residual(st, inst, Method::MeRgrk, {0, 0}, v, 1.0, 0.0);
    const Mat snapshot = st.x;
    REQUIRE(st.r(0, 0) == 0.0);
    rgrk::me_rgrk_step(st, inst, {0, 0});
    REQUIRE(bitwise_equal(st.x, snapshot));
  }
  SECTION("heavy-ball step from a cold start") {
    rgrk::SolverState st = rgrk::init_solver_state(inst, Method::PmRgrk);
    rgrk::pm_rgrk_step(st, inst, {0, 0}, 0.9, 0.3);
    REQUIRE(st.x(0, 0) == 1.8);
    REQUIRE(st.x(1, 1) == 0.0);
    REQUIRE(st.x_prev(0, 0) == 0.0);
  }
  SECTION("nesterov step from a cold start") {
    rgrk::SolverState st = rgrk::init_solver_state(inst, Method::NmRgrk);
    rgrk::nm_rgrk_step(st, inst, {0, 0}, 0.8, 0.5);
    REQUIRE(st.y(0, 0) == 1.6);
    REQUIRE(st.x(0, 0) == Catch::Approx(2.4).margin(1e-14));
    REQUIRE(st.y_prev(0, 0) == 0.0);
    REQUIRE(st.x(1, 1) == 0.0);
  }
  SECTION("stationary point stays put") {
    rgrk::SolverState st = rgrk::init_solver_state(inst, Method::NmRgrk, c);
    REQUIRE(rgrk::frob_norm(st.r) == 0.0);
    const Mat snapshot = st.x;
    rgrk::nm_rgrk_step(st, inst, {1, 1}, 0.8, 0.5);
    REQUIRE(bitwise_equal(st.x, snapshot));
  }
}

TEST_CASE("momentum steps with zero momentum reduce to the plain step") {
  const ProblemInstance inst = rgrk::gen_dense(6, 3, 4, {21, 0});
  rgrk::SolverState me = rgrk::init_solver_state(inst, Method::MeRgrk);
  rgrk::SolverState pm = rgrk::init_solver_state(inst, Method::PmRgrk);
  rgrk::SolverState nm = rgrk::init_solver_state(inst, Method::NmRgrk);
  const IndexPair ij{2, 1};
  for (int k = 0; k < 5; ++k) {
    const double v = rgrk::me_rgrk_step(me, inst, ij);
    rgrk::maintain_residual(me, inst, Method::MeRgrk, ij, v, 1.0, 0.0);
    const double vp = rgrk::pm_rgrk_step(pm, inst, ij, 1.0, 0.0);
    rgrk::maintain_residual(pm, inst, Method::PmRgrk, ij, vp, 1.0, 0.0);
    const double vn = rgrk::nm_rgrk_step(nm, inst, ij, 1.0, 0.0);
    rgrk::maintain_residual(nm, inst, Method::NmRgrk, ij, vn, 1.0, 0.0);
    REQUIRE(v == vp);
    REQUIRE(v == vn);
    REQUIRE(bitwise_equal(me.x, pm.x));
    REQUIRE(bitwise_equal(me.x, nm.x));
    REQUIRE(bitwise_equal(me.r, pm.r));
    REQUIRE(bitwise_equal(me.r, nm.r));
  }
}

TEST_CASE("projection exactness after a plain step") {
  const ProblemInstance inst = rgrk::gen_dense(4, 2, 3, {5, 0});
  rgrk::SolverState st = rgrk::init_solver_state(inst, Method::MeRgrk);
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 3; ++j) {
      const double v = rgrk::me_rgrk_step(st, inst, {i, j});
      rgrk::maintain_residual(st, inst, Method::MeRgrk, {i, j}, v, 1.0, 0.0);
      // a_i^T X' b_j must equal C_ij after projecting onto that constraint.
      double axb = 0.0;
      for (Index s = 0; s < 2; ++s)
        for (Index t = 0; t < 2; ++t)
          axb += inst.a(i, s) * st.x(s, t) * inst.b(t, j);
      REQUIRE(std::abs(axb - inst.c(i, j)) <=
              1e-12 * std::abs(inst.c(i, j)) + 1e-14);
    }
}

TEST_CASE("maintained residual tracks the true residual") {
  const ProblemInstance inst = rgrk::gen_dense(20, 5, 10, {77, 0});
  const double c_norm = rgrk::frob_norm(inst.c);

  SECTION("one step") {
    rgrk::SolverState st = rgrk::init_solver_state(inst, Method::MeRgrk);
    const double v = rgrk::me_rgrk_step(st, inst, {3, 7});
    rgrk::maintain_residual(st, inst, Method::MeRgrk, {3, 7}, v, 1.0, 0.0);
    const Mat fresh = rgrk::residual(inst.c, inst.a, st.x, inst.b);
    REQUIRE(rgrk::frob_dist(st.r, fresh) <= 1e-13 * c_norm);
  }

  SECTION("a thousand heavy-ball steps with periodic refresh") {
    rgrk::SolverState st = rgrk::init_solver_state(inst, Method::PmRgrk);
    rgrk::Xoshiro256pp rng({78, 1});
    double worst = 0.0;
    for (int k = 1; k <= 1000; ++k) {
      const double r2 = rgrk::frob_norm_sq(st.r);
      if (!(r2 > 0.0)) break;
      const Mat w = rgrk::loss_matrix(st.r, st.a_norms_sq, st.b_norms_sq);
      const double delta = rgrk::greedy_threshold(w, r2, 0.9, st.a_frob_sq, st.b_frob_sq);
      const std::vector<IndexPair> set = rgrk::build_index_set(w, delta, r2);
      const IndexPair ij = rgrk::sample_index(set, st.r, rgrk::Sampling::Proportional, rng);
      const double v = rgrk::pm_rgrk_step(st, inst, ij, 0.9, 0.3);
      rgrk::maintain_residual(st, inst, Method::PmRgrk, ij, v, 0.9, 0.3);
      if (k % 500 == 0) {
        const Mat fresh = rgrk::residual(inst.c, inst.a, st.x, inst.b);
        worst = std::max(worst, rgrk::frob_dist(st.r, fresh));
        st.r = fresh;
        st.r_prev = rgrk::residual(inst.c, inst.a, st.x_prev, inst.b);
      }
    }
    REQUIRE(worst <= 1e-10 * c_norm);
  }
}

TEST_CASE("config validation") {
  rgrk::SolverConfig cfg = rgrk::default_config(Method::PmRgrk);
  REQUIRE(cfg.alpha == 0.9);
  REQUIRE(cfg.beta == 0.3);
  REQUIRE(rgrk::default_config(Method::NmRgrk).alpha == 0.8);
  REQUIRE(rgrk::default_config(Method::NmRgrk).beta == 0.5);
  REQUIRE(rgrk::validate_config(cfg).empty());

  SECTION("hard invariants throw") {
    rgrk::SolverConfig bad = cfg;
    bad.theta = 0.0;
    REQUIRE_THROWS_AS(rgrk::validate_config(bad), std::invalid_argument);
    bad = cfg;
    bad.theta = 1.5;
    REQUIRE_THROWS_AS(rgrk::validate_config(bad), std::invalid_argument);
    bad = cfg;
    bad.tol_rrn = 0.0;
    REQUIRE_THROWS_AS(rgrk::validate_config(bad), std::invalid_argument);
    bad = cfg;
    bad.refresh_period = 0;
    REQUIRE_THROWS_AS(rgrk::validate_config(bad), std::invalid_argument);
  }
  SECTION("questionable momentum settings only warn") {
    rgrk::SolverConfig loose = cfg;
    loose.alpha = 2.5;
    REQUIRE(rgrk::validate_config(loose).size() == 1);
    loose.beta = 1.2;
    REQUIRE(rgrk::validate_config(loose).size() == 2);
  }
}

TEST_CASE("solve on the identity system is exact") {
  const Mat c = Mat::from_rows({{2.0, -3.0}, {4.0, 5.0}});
  const ProblemInstance inst = identity_instance(c);
  rgrk::SolverConfig cfg = rgrk::default_config(Method::MeRgrk);
  cfg.theta = 1.0;
  cfg.history_stride = 1;
  const rgrk::ConvergenceReport report = rgrk::solve(inst, cfg);
  REQUIRE(report.converged);
  REQUIRE(report.final_iter <= 4);
  REQUIRE(report.final_rrn_recomputed == 0.0);
  REQUIRE(rgrk::max_abs_diff(report.x_final, c) == 0.0);
  REQUIRE(report.error_to_oracle.has_value());
  REQUIRE(*report.error_to_oracle == 0.0);
}

TEST_CASE("starting at the oracle converges immediately") {
  const ProblemInstance inst = rgrk::gen_dense(8, 3, 5, {41, 0});
  const rgrk::SolverConfig cfg = rgrk::default_config(Method::MeRgrk);
  const rgrk::ConvergenceReport report = rgrk::solve(inst, cfg, *inst.x_star);
  REQUIRE(report.converged);
  REQUIRE(report.final_iter == 0);
  REQUIRE(report.final_rrn_recomputed == 0.0);
}

TEST_CASE("all methods reach the oracle on a dense instance") {
  const ProblemInstance inst = rgrk::gen_dense(20, 5, 10, {2024, 0});
  for (Method m : {Method::MeRgrk, Method::PmRgrk, Method::NmRgrk}) {
    rgrk::SolverConfig cfg = rgrk::default_config(m);
    cfg.tol_rrn = 1e-7;
    cfg.max_iters = 200000;
    cfg.rng = {2024, 1};
    const rgrk::ConvergenceReport report = rgrk::solve(inst, cfg);
    INFO(rgrk::method_name(m));
    REQUIRE(report.converged);
    REQUIRE(report.error_to_oracle.has_value());
    REQUIRE(*report.error_to_oracle <= 1e-4);
    // The reported final residual comes from a fresh recomputation.
    const Mat fresh = rgrk::residual(inst.c, inst.a, report.x_final, inst.b);
    const Mat r0 = rgrk::residual(inst.c, inst.a, Mat(5, 5), inst.b);
    REQUIRE(report.final_rrn_recomputed ==
            Catch::Approx(rgrk::frob_norm(fresh) / rgrk::frob_norm(r0)).epsilon(1e-12));
  }
}

TEST_CASE("history respects the stride and increases strictly") {
  const ProblemInstance inst = rgrk::gen_dense(16, 4, 8, {33, 0});
  rgrk::SolverConfig cfg = rgrk::default_config(Method::MeRgrk);
  cfg.history_stride = 25;
  cfg.tol_rrn = 1e-8;
  cfg.max_iters = 5000;
  cfg.rng = {33, 1};
  const rgrk::ConvergenceReport report = rgrk::solve(inst, cfg);
  REQUIRE(report.history.size() >= 2);
  REQUIRE(report.history.front().iter == 0);
  REQUIRE(report.history.front().rrn == 1.0);
  for (std::size_t k = 1; k < report.history.size(); ++k) {
    REQUIRE(report.history[k].iter > report.history[k - 1].iter);
    REQUIRE(report.history[k].elapsed_seconds >= report.history[k - 1].elapsed_seconds);
    if (k + 1 < report.history.size()) REQUIRE(report.history[k].iter % 25 == 0);
  }
  REQUIRE(report.history.back().iter == report.final_iter);
  REQUIRE(report.method == Method::MeRgrk);
  REQUIRE(report.theta == cfg.theta);
  REQUIRE(report.rng.seed == 33);
}

TEST_CASE("selection snapshots satisfy the advertised relations") {
  const ProblemInstance inst = rgrk::gen_dense(12, 4, 6, {55, 0});
  rgrk::SolverConfig cfg = rgrk::default_config(Method::MeRgrk);
  cfg.theta = 0.7;
  cfg.max_iters = 200;
  cfg.tol_rrn = 1e-14;
  cfg.rng = {55, 1};
  long seen = 0;
  const rgrk::ConvergenceReport report = rgrk::solve(
      inst, cfg, std::nullopt, [&](const rgrk::IterationView& view) {
        ++seen;
        REQUIRE_FALSE(view.index_set_flat.empty());
        // The recorded threshold matches the formula evaluated on the loss.
        double max_w = 0.0;
        for (Index k = 0; k < view.w->size(); ++k)
          max_w = std::max(max_w, view.w->data()[k]);
        const double delta = cfg.theta * max_w / view.r_frob_sq +
                             (1.0 - cfg.theta) / (view.a_frob_sq * view.b_frob_sq);
        REQUIRE(view.delta_k == Catch::Approx(delta).epsilon(1e-12));
        REQUIRE(view.max_w == Catch::Approx(max_w).epsilon(1e-12));
        // The selected pair belongs to the set and clears the threshold.
        const Index flat = view.selected.i * view.cols + view.selected.j;
        bool member = false;
        for (Index f : view.index_set_flat) member = member || f == flat;
        REQUIRE(member);
        REQUIRE((*view.w)(view.selected.i, view.selected.j) >=
                view.delta_k * view.r_frob_sq * (1.0 - 2e-12));
      });
  REQUIRE(seen == report.final_iter);
}

TEST_CASE("greedy runs shrink the error monotonically on average") {
  const ProblemInstance inst = rgrk::gen_dense(8, 3, 5, {61, 0});
  const int runs = 100, iters = 60;
  std::vector<double> mean_err(iters, 0.0);
  for (int run = 0; run < runs; ++run) {
    rgrk::SolverConfig cfg = rgrk::default_config(Method::MeRgrk);
    cfg.theta = 1.0;
    cfg.max_iters = iters;
    cfg.tol_rrn = 1e-300;
    cfg.rng = {61, static_cast<std::uint64_t>(run + 1)};
    rgrk::solve(inst, cfg, std::nullopt, [&](const rgrk::IterationView& view) {
      const double d2 = rgrk::frob_dist(view.x[0], *inst.x_star);
      mean_err[static_cast<std::size_t>(view.iter)] += d2 * d2;
    });
  }
  for (int k = 1; k < iters; ++k)
    REQUIRE(mean_err[static_cast<std::size_t>(k)] <=
            mean_err[static_cast<std::size_t>(k - 1)] * (1.0 + 1e-10) + 1e-30);
}

TEST_CASE("divergent parameters raise a divergence error") {
  const ProblemInstance inst = rgrk::gen_dense(10, 4, 6, {71, 0});
  rgrk::SolverConfig cfg = rgrk::default_config(Method::PmRgrk);
  cfg.alpha = 1.9;
  cfg.beta = 0.95;
  cfg.tol_rrn = 1e-300;
  cfg.max_iters = 100000;
  cfg.refresh_period = 1000000;  // keep the drift check out of the way
  cfg.rng = {71, 1};
  REQUIRE_THROWS_AS(rgrk::solve(inst, cfg), rgrk::DivergenceError);
}
