#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rgrk/mat.hpp"

namespace rgrk {

// Clamped B-spline basis of the given degree on [0, 1]: the knot vector
// repeats 0 and 1 (degree + 1) times around the interior knots, so there are
// count = interior + degree + 1 basis functions.
struct BSplineBasis {
  std::vector<double> knots;
  int degree = 3;
  Index count = 0;
};

inline BSplineBasis make_clamped_basis(const std::vector<double>& interior, int degree) {
  if (degree < 1 || degree > 7) throw std::invalid_argument("basis degree must lie in [1, 7]");
  double prev = 0.0;
  for (double u : interior) {
    if (!(u > prev && u < 1.0))
      throw std::invalid_argument("interior knots must be increasing inside (0, 1)");
    prev = u;
  }
  BSplineBasis basis;
  basis.degree = degree;
  basis.count = static_cast<Index>(interior.size()) + degree + 1;
  basis.knots.assign(static_cast<std::size_t>(degree) + 1, 0.0);
  basis.knots.insert(basis.knots.end(), interior.begin(), interior.end());
  basis.knots.insert(basis.knots.end(), static_cast<std::size_t>(degree) + 1, 1.0);
  return basis;
}

// Interior knots by parameter quantiles: knot j sits at the (possibly
// fractional) order statistic j (M - 1) / (J + 1) of the sorted parameters,
// interpolating linearly between neighbours. For uniform parameters this
// reduces to evenly spaced knots, and successive knots are always separated
// by at least one parameter whenever count <= M, which keeps the collocation
// matrix full rank.
inline BSplineBasis averaging_knots(const std::vector<double>& params, Index count, int degree) {
  const Index m = static_cast<Index>(params.size());
  if (count < degree + 1) throw std::invalid_argument("basis count must be at least degree + 1");
  if (count > m)
    throw std::invalid_argument("basis count must not exceed the number of parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i] < 0.0 || params[i] > 1.0)
      throw std::invalid_argument("parameters must lie in [0, 1]");
    if (i > 0 && params[i] < params[i - 1])
      throw std::invalid_argument("parameters must be nondecreasing");
  }
  const Index interior = count - degree - 1;
  std::vector<double> knots(static_cast<std::size_t>(interior));
  for (Index j = 1; j <= interior; ++j) {
    const double pos = static_cast<double>(j) * static_cast<double>(m - 1) /
                       static_cast<double>(interior + 1);
    const Index lo = static_cast<Index>(pos);
    const double frac = pos - static_cast<double>(lo);
    double u = params[static_cast<std::size_t>(lo)];
    if (frac > 0.0 && lo + 1 < m)
      u += frac * (params[static_cast<std::size_t>(lo + 1)] - u);
    knots[static_cast<std::size_t>(j - 1)] = u;
  }
  // Guard against repeated parameters collapsing adjacent knots.
  for (std::size_t j = 0; j < knots.size(); ++j) {
    const double lo = j == 0 ? 0.0 : knots[j - 1];
    if (!(knots[j] > lo && knots[j] < 1.0))
      throw std::invalid_argument("degenerate parameters: knot spacing collapsed");
  }
  return make_clamped_basis(knots, degree);
}

// The degree + 1 basis values that can be nonzero at x. Values sum to one;
// points outside [0, 1] are clamped to the boundary and flagged.
struct BasisEval {
  Index first = 0;  // index of the first (possibly) nonzero basis function
  std::array<double, 8> values{};
  int count = 0;  // = degree + 1
  bool clamped = false;
};

inline BasisEval basis_eval(const BSplineBasis& basis, double x) {
  const int d = basis.degree;
  const Index n = basis.count;
  const std::vector<double>& knots = basis.knots;
  BasisEval out;
  out.count = d + 1;
  if (x < 0.0) {
    x = 0.0;
    out.clamped = true;
  } else if (x > 1.0) {
    x = 1.0;
    out.clamped = true;
  }
  // Locate the knot span [knots[s], knots[s+1]) containing x; the right end
  // belongs to the final span.
  Index s;
  if (x >= 1.0) {
    s = n - 1;
  } else {
    Index lo = d, hi = n;
    while (hi - lo > 1) {
      const Index mid = (lo + hi) / 2;
      if (x < knots[static_cast<std::size_t>(mid)])
        hi = mid;
      else
        lo = mid;
    }
    s = lo;
  }
  out.first = s - d;
  std::array<double, 8> left{}, right{};
  out.values[0] = 1.0;
  for (int j = 1; j <= d; ++j) {
    left[static_cast<std::size_t>(j)] = x - knots[static_cast<std::size_t>(s + 1 - j)];
    right[static_cast<std::size_t>(j)] = knots[static_cast<std::size_t>(s + j)] - x;
    double saved = 0.0;
    for (int t = 0; t < j; ++t) {
      const double denom = right[static_cast<std::size_t>(t + 1)] +
                           left[static_cast<std::size_t>(j - t)];
      const double temp = out.values[static_cast<std::size_t>(t)] / denom;
      out.values[static_cast<std::size_t>(t)] =
          saved + right[static_cast<std::size_t>(t + 1)] * temp;
      saved = left[static_cast<std::size_t>(j - t)] * temp;
    }
    out.values[static_cast<std::size_t>(j)] = saved;
  }
  return out;
}

// Rows evaluate the basis at each parameter; at most degree + 1 entries per
// row are nonzero. Throws unless an increasing subsequence of parameters hits
// the support of every basis function (the interlacing condition that keeps
// the normal equations nonsingular).
inline Mat collocation_matrix(const BSplineBasis& basis, const std::vector<double>& params) {
  const Index m = static_cast<Index>(params.size());
  if (m < basis.count)
    throw std::invalid_argument("collocation needs at least as many parameters as basis functions");
  Mat a(m, basis.count);
  for (Index i = 0; i < m; ++i) {
    const BasisEval ev = basis_eval(basis, params[static_cast<std::size_t>(i)]);
    for (int t = 0; t < ev.count; ++t)
      a(i, ev.first + t) = ev.values[static_cast<std::size_t>(t)];
  }
  // Greedy interlacing check: basis function k needs a parameter of its own,
  // past the one claimed by basis function k - 1, where it is nonzero.
  Index next_param = 0;
  for (Index k = 0; k < basis.count; ++k) {
    while (next_param < m && a(next_param, k) == 0.0) ++next_param;
    if (next_param >= m)
      throw std::invalid_argument("parameters miss the support of a basis function");
    ++next_param;
  }
  return a;
}

}  // namespace rgrk
