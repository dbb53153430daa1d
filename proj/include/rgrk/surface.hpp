#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "rgrk/bspline.hpp"
#include "rgrk/mat.hpp"
#include "rgrk/solver.hpp"

namespace rgrk {

// Two analytic test surfaces, sampled on a rectangular (t, s) grid. Rows of
// the data grids follow t, columns follow s.
enum class SurfaceKind { Spiral, Tube };

inline const char* surface_name(SurfaceKind kind) {
  return kind == SurfaceKind::Spiral ? "spiral" : "tube";
}

inline SurfaceKind surface_from_string(const std::string& s) {
  if (s == "spiral" || s == "1") return SurfaceKind::Spiral;
  if (s == "tube" || s == "2") return SurfaceKind::Tube;
  throw std::invalid_argument("unknown surface: " + s);
}

inline std::array<double, 3> surface_point(SurfaceKind kind, double t, double s) {
  if (kind == SurfaceKind::Spiral) {
    const double t3 = t * t * t;
    return {-2.0 * t * std::cos(s) + 2.0 * std::cos(s) / t - 2.0 * t3 * std::cos(3.0 * s) / 3.0,
            6.0 * t * std::sin(s) - 2.0 * std::sin(s) / t - 2.0 * t3 * std::sin(3.0 * s) / 3.0,
            4.0 * std::log(t)};
  }
  const double third = 2.0 * std::numbers::pi / 3.0;
  return {(2.0 + std::cos(t)) * (s / 3.0 - std::sin(s)),
          (2.0 + std::cos(t - third)) * (std::cos(s) - 1.0),
          (2.0 + std::cos(t + third)) * (std::cos(s) - 1.0)};
}

struct SurfaceGrid {
  std::array<Mat, 3> q;  // x, y, z samples, each rows x cols
  std::vector<double> t, s;
  Index rows() const { return q[0].rows(); }
  Index cols() const { return q[0].cols(); }
};

inline SurfaceGrid sample_surface(SurfaceKind kind, Index rows, Index cols) {
  if (rows < 2 || cols < 2) throw std::invalid_argument("surface grid needs at least 2 x 2 samples");
  double t0, t1, s0, s1;
  if (kind == SurfaceKind::Spiral) {
    t0 = 0.5;
    t1 = 1.0;
    s0 = 0.0;
    s1 = 2.0 * std::numbers::pi;
  } else {
    t0 = -std::numbers::pi;
    t1 = std::numbers::pi;
    s0 = -2.0 * std::numbers::pi;
    s1 = 2.0 * std::numbers::pi;
  }
  SurfaceGrid grid;
  for (Mat& q : grid.q) q = Mat(rows, cols);
  grid.t.resize(static_cast<std::size_t>(rows));
  grid.s.resize(static_cast<std::size_t>(cols));
  for (Index i = 0; i < rows; ++i)
    grid.t[static_cast<std::size_t>(i)] =
        t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(rows - 1);
  for (Index j = 0; j < cols; ++j)
    grid.s[static_cast<std::size_t>(j)] =
        s0 + (s1 - s0) * static_cast<double>(j) / static_cast<double>(cols - 1);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) {
      const std::array<double, 3> pt = surface_point(kind, grid.t[static_cast<std::size_t>(i)],
                                                     grid.s[static_cast<std::size_t>(j)]);
      for (int c = 0; c < 3; ++c) grid.q[static_cast<std::size_t>(c)](i, j) = pt[static_cast<std::size_t>(c)];
    }
  return grid;
}

// Normalized chord-length parameters along one grid direction, averaged over
// the other direction. Rows of all-coincident points are skipped; if every
// line is degenerate the parameters fall back to uniform.
inline std::vector<double> chord_params(const std::array<Mat, 3>& q, bool along_rows) {
  const Index m = q[0].rows(), p = q[0].cols();
  const Index count = along_rows ? m : p;
  const Index lines = along_rows ? p : m;
  std::vector<double> params(static_cast<std::size_t>(count), 0.0);
  std::vector<double> line(static_cast<std::size_t>(count));
  Index used = 0;
  for (Index l = 0; l < lines; ++l) {
    line[0] = 0.0;
    for (Index k = 1; k < count; ++k) {
      double d2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double diff = along_rows ? q[static_cast<std::size_t>(c)](k, l) -
                                             q[static_cast<std::size_t>(c)](k - 1, l)
                                       : q[static_cast<std::size_t>(c)](l, k) -
                                             q[static_cast<std::size_t>(c)](l, k - 1);
        d2 += diff * diff;
      }
      line[static_cast<std::size_t>(k)] =
          line[static_cast<std::size_t>(k - 1)] + std::sqrt(d2);
    }
    const double total = line[static_cast<std::size_t>(count - 1)];
    if (total == 0.0) continue;
    for (Index k = 0; k < count; ++k)
      params[static_cast<std::size_t>(k)] += line[static_cast<std::size_t>(k)] / total;
    ++used;
  }
  if (used == 0) {
    for (Index k = 0; k < count; ++k)
      params[static_cast<std::size_t>(k)] =
          static_cast<double>(k) / static_cast<double>(count - 1);
    return params;
  }
  for (double& v : params) v /= static_cast<double>(used);
  params.front() = 0.0;
  params.back() = 1.0;
  return params;
}

// Seeds the control net from a coarse subsample of the data: control point
// (k, l) starts at the data point whose (1-based) row is 1 for k = 1 and
// floor(m k / n) otherwise, and likewise for columns.
inline Index control_seed_index(Index k, Index data_count, Index control_count) {
  if (k == 0) return 0;
  Index idx = (data_count * (k + 1)) / control_count;
  if (idx > data_count) idx = data_count;
  return idx - 1;
}

inline std::array<Mat, 3> init_control_net(const SurfaceGrid& grid, Index count) {
  std::array<Mat, 3> p0{Mat(count, count), Mat(count, count), Mat(count, count)};
  for (Index k = 0; k < count; ++k) {
    const Index i = control_seed_index(k, grid.rows(), count);
    for (Index l = 0; l < count; ++l) {
      const Index j = control_seed_index(l, grid.cols(), count);
      for (int c = 0; c < 3; ++c) p0[static_cast<std::size_t>(c)](k, l) = grid.q[static_cast<std::size_t>(c)](i, j);
    }
  }
  return p0;
}

struct FitOptions {
  Index basis_count = 30;
  int degree = 3;
  SolverConfig solver;
  ResidualAggregate aggregate = ResidualAggregate::SumNorms;
  // When nonempty these replace the chord-length parameters (sizes must match
  // the grid). Useful for refitting data with known parameterization.
  std::vector<double> params_u, params_v;
};

struct FitResult {
  BSplineBasis basis_u, basis_v;
  std::vector<double> params_u, params_v;
  Mat a, b;                   // u collocation (m x n) and transposed v collocation (n x p)
  std::array<Mat, 3> control;  // fitted control nets
  ConvergenceReport report;
};

// Least-squares fit of a tensor-product B-spline surface to the grid: all
// three coordinate channels share the row/column selection through a combined
// loss, and the reported rrn is the aggregated residual E_k / E_0.
inline FitResult fit_surface(const SurfaceGrid& grid, const FitOptions& opt,
                             const IterationObserver& observer = {}) {
  validate_config(opt.solver);
  FitResult fit;
  fit.params_u = opt.params_u.empty() ? chord_params(grid.q, true) : opt.params_u;
  fit.params_v = opt.params_v.empty() ? chord_params(grid.q, false) : opt.params_v;
  if (static_cast<Index>(fit.params_u.size()) != grid.rows() ||
      static_cast<Index>(fit.params_v.size()) != grid.cols())
    throw std::invalid_argument("parameter overrides must match the grid dimensions");
  fit.basis_u = averaging_knots(fit.params_u, opt.basis_count, opt.degree);
  fit.basis_v = averaging_knots(fit.params_v, opt.basis_count, opt.degree);
  fit.a = collocation_matrix(fit.basis_u, fit.params_u);
  fit.b = transpose(collocation_matrix(fit.basis_v, fit.params_v));
  std::array<Mat, 3> p0 = init_control_net(grid, opt.basis_count);
  const Mat* cs[3] = {&grid.q[0], &grid.q[1], &grid.q[2]};
  std::vector<Mat> x0s(p0.begin(), p0.end());
  detail::EngineResult res = detail::run_engine(fit.a, fit.b, std::span<const Mat* const>(cs, 3),
                                                std::move(x0s), opt.solver, opt.aggregate,
                                                observer);
  for (int c = 0; c < 3; ++c) fit.control[static_cast<std::size_t>(c)] = std::move(res.x[static_cast<std::size_t>(c)]);
  fit.report = std::move(res.report);
  fit.report.x_final = fit.control[0];
  return fit;
}

// Point on the fitted surface at spline parameters (u, v) in [0, 1]^2.
inline std::array<double, 3> eval_surface(const FitResult& fit, double u, double v) {
  const BasisEval eu = basis_eval(fit.basis_u, u);
  const BasisEval ev = basis_eval(fit.basis_v, v);
  std::array<double, 3> pt{0.0, 0.0, 0.0};
  for (int c = 0; c < 3; ++c) {
    const Mat& ctrl = fit.control[static_cast<std::size_t>(c)];
    double acc = 0.0;
    for (int iu = 0; iu < eu.count; ++iu) {
      double row = 0.0;
      for (int iv = 0; iv < ev.count; ++iv)
        row += ctrl(eu.first + iu, ev.first + iv) * ev.values[static_cast<std::size_t>(iv)];
      acc += eu.values[static_cast<std::size_t>(iu)] * row;
    }
    pt[static_cast<std::size_t>(c)] = acc;
  }
  return pt;
}

}  // namespace rgrk
