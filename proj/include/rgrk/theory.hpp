#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "rgrk/decomp.hpp"
#include "rgrk/mat.hpp"
#include "rgrk/solver.hpp"

namespace rgrk {

// Quantities entering the convergence rate: the extreme nonzero singular
// values of A and B and the ratio
//   rho_tilde = sigma_r(A)^2 sigma_r(B)^2 / (||A||_F^2 ||B||_F^2),
// which lies in (0, 1] and bounds the per-step contraction from below.
struct SpectralBounds {
  double sigma_min_nz_a = 0.0, sigma_max_a = 0.0;
  double sigma_min_nz_b = 0.0, sigma_max_b = 0.0;
  double a_frob_sq = 0.0, b_frob_sq = 0.0;
  Index rank_a = 0, rank_b = 0;
  double rho_tilde = 0.0;
};

inline SpectralBounds spectral_bounds(const Mat& a, const Mat& b) {
  SpectralBounds out;
  const SvdResult sa = svd(a);
  const SvdResult sb = svd(b);
  if (sa.numerical_rank == 0 || sb.numerical_rank == 0)
    throw std::invalid_argument("spectral_bounds: zero matrix has no nonzero singular value");
  out.rank_a = sa.numerical_rank;
  out.rank_b = sb.numerical_rank;
  out.sigma_max_a = sa.singular_values.front();
  out.sigma_max_b = sb.singular_values.front();
  out.sigma_min_nz_a = sa.singular_values[static_cast<std::size_t>(sa.numerical_rank - 1)];
  out.sigma_min_nz_b = sb.singular_values[static_cast<std::size_t>(sb.numerical_rank - 1)];
  out.a_frob_sq = frob_norm_sq(a);
  out.b_frob_sq = frob_norm_sq(b);
  out.rho_tilde = (out.sigma_min_nz_a * out.sigma_min_nz_a) *
                  (out.sigma_min_nz_b * out.sigma_min_nz_b) /
                  (out.a_frob_sq * out.b_frob_sq);
  return out;
}

// Per-iteration greedy constants. With Omega_k the set of pairs whose loss is
// (numerically) zero,
//   zeta_k  = ||A||_F^2 ||B||_F^2 - sum_{(i,j) in Omega_k} ||a_i||^2 ||b_j||^2,
//   gamma_k = theta ||A||_F^2 ||B||_F^2 / zeta_k + (1 - theta)  >= 1,
// and the threshold satisfies delta_k ||A||_F^2 ||B||_F^2 >= gamma_k. The
// sharpened per-step rate is rho_tilde_k = gamma_k * rho_tilde.
struct GreedyConstants {
  double zeta_k = 0.0;
  double gamma_k = 0.0;
  double rho_tilde_k = 0.0;
};

// Returns nullopt when every loss entry is zero, i.e. the residual vanished
// and the iteration is done. Entries count as zero below 1e-24 * max(W).
inline std::optional<GreedyConstants> greedy_constants(const Mat& w,
                                                       std::span<const double> a_norms_sq,
                                                       std::span<const double> b_norms_sq,
                                                       double theta, double a_frob_sq,
                                                       double b_frob_sq, double rho_tilde) {
  if (static_cast<Index>(a_norms_sq.size()) != w.rows() ||
      static_cast<Index>(b_norms_sq.size()) != w.cols())
    throw std::invalid_argument("greedy_constants: norm vector lengths disagree with W");
  double max_w = 0.0;
  for (Index k = 0; k < w.size(); ++k) max_w = std::max(max_w, w.data()[k]);
  const double zero_tol = 1e-24 * max_w;
  double omega_mass = 0.0;
  for (Index i = 0; i < w.rows(); ++i)
    for (Index j = 0; j < w.cols(); ++j)
      if (w(i, j) <= zero_tol)
        omega_mass += a_norms_sq[static_cast<std::size_t>(i)] *
                      b_norms_sq[static_cast<std::size_t>(j)];
  const double prod = a_frob_sq * b_frob_sq;
  GreedyConstants out;
  out.zeta_k = prod - omega_mass;
  if (!(out.zeta_k > 0.0)) return std::nullopt;
  out.gamma_k = theta * prod / out.zeta_k + (1.0 - theta);
  out.rho_tilde_k = out.gamma_k * rho_tilde;
  return out;
}

// Two-term contraction factors for the momentum methods.
//
// Heavy ball: with tau1 = 4 + alpha - alpha rho_tilde and
// tau2 = alpha (2 - alpha) rho_tilde, the expected squared error satisfies
// E_{k+1} <= gamma1 E_k + gamma2 E_{k-1} where
//   gamma1 = 1 + 3 beta + beta^2 - (2 alpha + alpha beta - alpha^2) rho_tilde,
//   gamma2 = 2 beta^2 + (1 + alpha) beta,
// and expanding the sum gives gamma1 + gamma2 - 1 = 3 beta^2 + tau1 beta - tau2
// exactly, so the sum drops below one precisely for
//   beta < beta_max = (sqrt(tau1^2 + 12 tau2) - tau1) / 6.
//
// Nesterov: with c = 1 + (alpha^2 - 2 alpha) rho_tilde,
//   gamma3 = 2 (1 + beta)^2 c,   gamma4 = 2 beta^2 c,
// and with tau3 = 1 / (2 + 2 alpha (2 - alpha) rho_tilde) the certified range
// is beta < (sqrt(2 tau3 - 1) - 1) / 2 when 2 tau3 > 1 and empty otherwise.
// Since 2 tau3 < 1 whenever 0 < alpha < 2 and rho_tilde > 0, the range is
// structurally empty and params_admissible is always false for this variant.
//
// Once the relevant gamma pair sums below one, the recurrence is dominated by
//   E_{k+1} <= q1^k (1 + q2) E_0,  q1 = (t1 + sqrt(t1^2 + 4 t2)) / 2,
//   q2 = q1 - t1,  with (t1, t2) the gamma pair.
struct RateFactors {
  Method method = Method::PmRgrk;
  double alpha = 0.0, beta = 0.0, rho_tilde = 0.0;
  double tau1 = 0.0, tau2 = 0.0, tau3 = 0.0;
  double gamma1 = 0.0, gamma2 = 0.0;  // heavy-ball pair
  double gamma3 = 0.0, gamma4 = 0.0;  // Nesterov pair
  double beta_max = 0.0;
  bool params_admissible = false;
  double q1 = 0.0, q2 = 0.0;
};

inline RateFactors rate_factors(Method method, double alpha, double beta, double rho_tilde) {
  if (!(rho_tilde > 0.0 && rho_tilde <= 1.0))
    throw std::invalid_argument("rate_factors: rho_tilde must lie in (0, 1]");
  if (!std::isfinite(alpha) || !std::isfinite(beta))
    throw std::invalid_argument("rate_factors: alpha and beta must be finite");
  RateFactors f;
  f.method = method;
  f.alpha = alpha;
  f.beta = beta;
  f.rho_tilde = rho_tilde;
  double t1 = 0.0, t2 = 0.0;
  switch (method) {
    case Method::MeRgrk:
    case Method::PmRgrk: {
      f.tau1 = 4.0 + alpha - alpha * rho_tilde;
      f.tau2 = alpha * (2.0 - alpha) * rho_tilde;
      f.gamma1 = 1.0 + 3.0 * beta + beta * beta -
                 (2.0 * alpha + alpha * beta - alpha * alpha) * rho_tilde;
      f.gamma2 = 2.0 * beta * beta + (1.0 + alpha) * beta;
      f.beta_max = f.tau2 > 0.0
                       ? (std::sqrt(f.tau1 * f.tau1 + 12.0 * f.tau2) - f.tau1) / 6.0
                       : 0.0;
      t1 = f.gamma1;
      t2 = f.gamma2;
      break;
    }
    case Method::NmRgrk: {
      const double c = 1.0 + (alpha * alpha - 2.0 * alpha) * rho_tilde;
      f.tau3 = 1.0 / (2.0 + 2.0 * alpha * (2.0 - alpha) * rho_tilde);
      f.gamma3 = 2.0 * (1.0 + beta) * (1.0 + beta) * c;
      f.gamma4 = 2.0 * beta * beta * c;
      f.beta_max = 2.0 * f.tau3 > 1.0 ? (std::sqrt(2.0 * f.tau3 - 1.0) - 1.0) / 2.0 : 0.0;
      t1 = f.gamma3;
      t2 = f.gamma4;
      break;
    }
  }
  f.q1 = (t1 + std::sqrt(t1 * t1 + 4.0 * t2)) / 2.0;
  f.q2 = f.q1 - t1;
  // The range check implies the sum and root conditions in exact arithmetic;
  // both are also tested directly so the flag stays honest under roundoff.
  f.params_admissible = alpha > 0.0 && alpha < 2.0 && beta > 0.0 && beta < f.beta_max &&
                        t1 + t2 < 1.0 && f.q1 < 1.0;
  return f;
}

// curve[k] = q1^k (1 + q2) E0, an upper bound on the expected squared error of
// iterate k+1 (and, at k = 0, of iterates 0 and 1, which coincide).
inline std::vector<double> error_bound_curve(const RateFactors& f, double initial_error_sq,
                                             long k_max) {
  if (!f.params_admissible)
    throw std::invalid_argument("error_bound_curve: parameters outside the certified range");
  if (!(initial_error_sq >= 0.0))
    throw std::invalid_argument("error_bound_curve: initial error must be >= 0");
  if (k_max < 0) throw std::invalid_argument("error_bound_curve: k_max must be >= 0");
  std::vector<double> curve(static_cast<std::size_t>(k_max) + 1);
  curve[0] = (1.0 + f.q2) * initial_error_sq;
  for (long k = 1; k <= k_max; ++k)
    curve[static_cast<std::size_t>(k)] = curve[static_cast<std::size_t>(k - 1)] * f.q1;
  return curve;
}

// Greatest root of q^2 = t1 q + t2 (the characteristic equation of the
// recurrence F_{k+1} <= t1 F_k + t2 F_{k-1}); the domination constant is
// q2 = q1 - t1.
struct RecurrenceRoot {
  double q1 = 0.0, q2 = 0.0;
};

inline RecurrenceRoot recurrence_root(double t1, double t2) {
  if (!(t2 >= 0.0) || !(t1 >= 0.0) || !(t1 + t2 < 1.0) || !(t1 + t2 > 0.0))
    throw std::invalid_argument(
        "recurrence_root: needs t1 >= 0, t2 >= 0, 0 < t1 + t2 < 1");
  RecurrenceRoot r;
  r.q1 = (t1 + std::sqrt(t1 * t1 + 4.0 * t2)) / 2.0;
  r.q2 = r.q1 - t1;
  return r;
}

}  // namespace rgrk
