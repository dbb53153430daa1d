#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <vector>

#include "rgrk/mat.hpp"

namespace rgrk {

// Thin singular value decomposition M = U * diag(sigma) * V^T with
// k = min(rows, cols) columns in U and V and sigma sorted descending.
struct SvdResult {
  Mat left_vectors;                    // rows x k, orthonormal columns
  std::vector<double> singular_values; // length k, descending, >= 0
  Mat right_vectors;                   // cols x k, orthonormal columns
  Index numerical_rank = 0;
  double rank_tol = 0.0;               // max(rows, cols) * eps * sigma_max
};

namespace detail {

inline double col_dot(const Mat& m, Index a, Index b) {
  double s = 0.0;
  for (Index i = 0; i < m.rows(); ++i) s += m(i, a) * m(i, b);
  return s;
}

// Fills column `target` of `u` with a unit vector orthogonal to columns
// [0, upto) by orthogonalizing the best canonical basis vector.
inline void complete_orthonormal_column(Mat& u, Index target, Index upto) {
  const Index m = u.rows();
  for (Index trial = 0; trial < m; ++trial) {
    std::vector<double> v(static_cast<std::size_t>(m), 0.0);
    v[static_cast<std::size_t>(trial)] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (Index c = 0; c < upto; ++c) {
        double proj = 0.0;
        for (Index i = 0; i < m; ++i) proj += v[static_cast<std::size_t>(i)] * u(i, c);
        for (Index i = 0; i < m; ++i) v[static_cast<std::size_t>(i)] -= proj * u(i, c);
      }
    }
    double norm_sq = 0.0;
    for (double x : v) norm_sq += x * x;
    if (norm_sq > 0.25) {
      const double inv = 1.0 / std::sqrt(norm_sq);
      for (Index i = 0; i < m; ++i) u(i, target) = v[static_cast<std::size_t>(i)] * inv;
      return;
    }
  }
  throw InvariantError("svd: failed to complete an orthonormal basis");
}

// One-sided Jacobi on the columns of `work` (rows >= cols), accumulating the
// right rotations into `v`. Returns the number of sweeps used.
inline int jacobi_orthogonalize(Mat& work, Mat& v) {
  const Index n = work.cols();
  const double tol = 1e-15;
  const int max_sweeps = 60;
  // Columns that have shrunk to roundoff level carry no information;
  // rotating two of them against each other just churns noise whose mutual
  // correlation never falls below the relative threshold, so pairs with a
  // numerically dead member are skipped. Their singular values end up under
  // rank_tol regardless.
  double max_norm_sq = 0.0;
  for (Index j = 0; j < n; ++j) max_norm_sq = std::max(max_norm_sq, col_dot(work, j, j));
  const double dead_norm_sq = max_norm_sq * 1e-30;
  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (Index p = 0; p < n - 1; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double app = col_dot(work, p, p);
        const double aqq = col_dot(work, q, q);
        if (app <= dead_norm_sq || aqq <= dead_norm_sq) continue;
        const double apq = col_dot(work, p, q);
        if (std::abs(apq) <= tol * std::sqrt(app) * std::sqrt(aqq)) continue;
        rotated = true;
        const double zeta = (aqq - app) / (2.0 * apq);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Index i = 0; i < work.rows(); ++i) {
          const double wp = work(i, p), wq = work(i, q);
          work(i, p) = c * wp - s * wq;
          work(i, q) = s * wp + c * wq;
        }
        for (Index i = 0; i < v.rows(); ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) return sweep + 1;
  }
  double worst = 0.0;
  for (Index p = 0; p < n - 1; ++p)
    for (Index q = p + 1; q < n; ++q)
      worst = std::max(worst, std::abs(col_dot(work, p, q)));
  char msg[128];
  std::snprintf(msg, sizeof msg, "svd: Jacobi sweeps exhausted (%d), worst off-diagonal %.3e",
                max_sweeps, worst);
  throw std::runtime_error(msg);
}

}  // namespace detail

// One-sided Jacobi SVD. Accurate and simple at the dense sizes this library
// targets; matrices with rows < cols are handled through the transpose.
inline SvdResult svd(const Mat& m) {
  if (m.rows() < m.cols()) {
    SvdResult t = svd(transpose(m));
    std::swap(t.left_vectors, t.right_vectors);
    return t;
  }
  const Index rows = m.rows(), cols = m.cols();
  Mat work = m;
  Mat v = Mat::identity(cols);
  detail::jacobi_orthogonalize(work, v);

  std::vector<double> sigma(static_cast<std::size_t>(cols));
  for (Index j = 0; j < cols; ++j)
    sigma[static_cast<std::size_t>(j)] = std::sqrt(detail::col_dot(work, j, j));

  std::vector<Index> order(static_cast<std::size_t>(cols));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return sigma[static_cast<std::size_t>(a)] > sigma[static_cast<std::size_t>(b)];
  });

  SvdResult out;
  out.left_vectors = Mat(rows, cols);
  out.right_vectors = Mat(cols, cols);
  out.singular_values.resize(static_cast<std::size_t>(cols));
  const double sigma_max = sigma[static_cast<std::size_t>(order[0])];
  out.rank_tol = static_cast<double>(std::max(rows, cols)) *
                 std::numeric_limits<double>::epsilon() * sigma_max;

  Index filled = 0;
  for (Index j = 0; j < cols; ++j) {
    const Index src = order[static_cast<std::size_t>(j)];
    const double s = sigma[static_cast<std::size_t>(src)];
    out.singular_values[static_cast<std::size_t>(j)] = s;
    for (Index i = 0; i < cols; ++i) out.right_vectors(i, j) = v(i, src);
    if (s > out.rank_tol && s > 0.0) {
      const double inv = 1.0 / s;
      for (Index i = 0; i < rows; ++i) out.left_vectors(i, j) = work(i, src) * inv;
      filled = j + 1;
    }
  }
  out.numerical_rank = filled;
  for (Index j = filled; j < cols; ++j)
    detail::complete_orthonormal_column(out.left_vectors, j, j);
  return out;
}

// Thin Householder QR for rows >= cols: M = Q * R with Q orthonormal columns
// and R upper triangular with nonnegative diagonal.
struct QrResult {
  Mat q;  // rows x cols
  Mat r;  // cols x cols
};

inline QrResult householder_qr(const Mat& m) {
  const Index rows = m.rows(), cols = m.cols();
  if (rows < cols) throw std::invalid_argument("householder_qr: requires rows >= cols");
  Mat work = m;
  std::vector<std::vector<double>> reflectors;
  reflectors.reserve(static_cast<std::size_t>(cols));

  for (Index k = 0; k < cols; ++k) {
    double norm_sq = 0.0;
    for (Index i = k; i < rows; ++i) norm_sq += work(i, k) * work(i, k);
    const double norm = std::sqrt(norm_sq);
    std::vector<double> vk(static_cast<std::size_t>(rows - k), 0.0);
    if (norm > 0.0) {
      const double x0 = work(k, k);
      const double alpha = (x0 >= 0.0 ? -norm : norm);
      for (Index i = k; i < rows; ++i) vk[static_cast<std::size_t>(i - k)] = work(i, k);
      vk[0] -= alpha;
      double vnorm_sq = 0.0;
      for (double x : vk) vnorm_sq += x * x;
      if (vnorm_sq > 0.0) {
        const double inv = 1.0 / std::sqrt(vnorm_sq);
        for (double& x : vk) x *= inv;
        for (Index j = k; j < cols; ++j) {
          double proj = 0.0;
          for (Index i = k; i < rows; ++i)
            proj += vk[static_cast<std::size_t>(i - k)] * work(i, j);
          proj *= 2.0;
          for (Index i = k; i < rows; ++i)
            work(i, j) -= proj * vk[static_cast<std::size_t>(i - k)];
        }
      } else {
        vk.assign(vk.size(), 0.0);
      }
    }
    reflectors.push_back(std::move(vk));
  }

  QrResult out;
  out.r = Mat(cols, cols);
  for (Index i = 0; i < cols; ++i)
    for (Index j = i; j < cols; ++j) out.r(i, j) = work(i, j);

  out.q = Mat(rows, cols);
  for (Index j = 0; j < cols; ++j) out.q(j, j) = 1.0;
  for (Index k = cols - 1; k >= 0; --k) {
    const auto& vk = reflectors[static_cast<std::size_t>(k)];
    for (Index j = 0; j < cols; ++j) {
      double proj = 0.0;
      for (Index i = k; i < rows; ++i)
        proj += vk[static_cast<std::size_t>(i - k)] * out.q(i, j);
      proj *= 2.0;
      for (Index i = k; i < rows; ++i)
        out.q(i, j) -= proj * vk[static_cast<std::size_t>(i - k)];
    }
  }

  for (Index i = 0; i < cols; ++i) {
    if (out.r(i, i) < 0.0) {
      for (Index j = i; j < cols; ++j) out.r(i, j) = -out.r(i, j);
      for (Index k = 0; k < rows; ++k) out.q(k, i) = -out.q(k, i);
    }
  }
  return out;
}

namespace detail {

// pinv(M) * X using a precomputed SVD of M.
inline Mat pinv_apply(const SvdResult& s, const Mat& x) {
  Mat ut_x = multiply(transpose(s.left_vectors), x);
  for (Index i = 0; i < ut_x.rows(); ++i) {
    const double sv = s.singular_values[static_cast<std::size_t>(i)];
    const double scale = (i < s.numerical_rank && sv > 0.0) ? 1.0 / sv : 0.0;
    for (Index j = 0; j < ut_x.cols(); ++j) ut_x(i, j) *= scale;
  }
  return multiply(s.right_vectors, ut_x);
}

}  // namespace detail

// Minimum-norm solution pinv(A) * C * pinv(B) of A*X*B = C.
inline Mat pinv_solution(const Mat& a, const Mat& c, const Mat& b) {
  if (a.rows() != c.rows() || b.cols() != c.cols())
    throw std::invalid_argument("pinv_solution: shape mismatch");
  const SvdResult sa = svd(a);
  const SvdResult sb = svd(transpose(b));
  // pinv(A) * C, then right-multiply by pinv(B) = (pinv(B^T))^T.
  Mat left = detail::pinv_apply(sa, c);
  Mat right = detail::pinv_apply(sb, transpose(left));
  return transpose(right);
}

}  // namespace rgrk
