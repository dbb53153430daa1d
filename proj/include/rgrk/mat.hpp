#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rgrk {

using Index = std::ptrdiff_t;

// Thrown when an internal consistency check fails (a bug, not a usage error).
struct InvariantError : std::runtime_error {
  explicit InvariantError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when an iteration produces non-finite values.
struct DivergenceError : std::runtime_error {
  long iteration;
  DivergenceError(long iter, const std::string& what)
      : std::runtime_error(what), iteration(iter) {}
};

// Dense real matrix, row-major contiguous storage.
class Mat {
 public:
  Mat() : rows_(0), cols_(0) {}

  Mat(Index rows, Index cols) : rows_(rows), cols_(cols) {
    if (rows < 1 || cols < 1)
      throw std::invalid_argument("Mat: rows and cols must be >= 1");
    data_.assign(static_cast<std::size_t>(rows * cols), 0.0);
  }

  Mat(Index rows, Index cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows < 1 || cols < 1)
      throw std::invalid_argument("Mat: rows and cols must be >= 1");
    if (data_.size() != static_cast<std::size_t>(rows * cols))
      throw std::invalid_argument("Mat: data size does not match rows*cols");
    if (!all_finite())
      throw std::invalid_argument("Mat: non-finite entry on construction");
  }

  static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Index r = static_cast<Index>(rows.size());
    if (r == 0) throw std::invalid_argument("Mat::from_rows: empty");
    Index c = static_cast<Index>(rows.begin()->size());
    Mat m(r, c);
    Index i = 0;
    for (const auto& row : rows) {
      if (static_cast<Index>(row.size()) != c)
        throw std::invalid_argument("Mat::from_rows: ragged rows");
      Index j = 0;
      for (double v : row) m(i, j++) = v;
      ++i;
    }
    if (!m.all_finite())
      throw std::invalid_argument("Mat: non-finite entry on construction");
    return m;
  }

  static Mat identity(Index n) {
    Mat m(n, n);
    for (Index i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index size() const { return rows_ * cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(Index i, Index j) { return data_[static_cast<std::size_t>(i * cols_ + j)]; }
  double operator()(Index i, Index j) const { return data_[static_cast<std::size_t>(i * cols_ + j)]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  std::span<double> row(Index i) { return {data_.data() + i * cols_, static_cast<std::size_t>(cols_)}; }
  std::span<const double> row(Index i) const { return {data_.data() + i * cols_, static_cast<std::size_t>(cols_)}; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const Mat& a, const Mat& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  Index rows_, cols_;
  std::vector<double> data_;
};

inline Mat transpose(const Mat& a) {
  Mat t(a.cols(), a.rows());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline Mat multiply(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("multiply: inner dimensions disagree");
  Mat c(a.rows(), b.cols());
  const Index n = a.cols(), p = b.cols();
  for (Index i = 0; i < a.rows(); ++i) {
    const double* arow = a.data() + i * n;
    double* crow = c.data() + i * p;
    for (Index k = 0; k < n; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.data() + k * p;
      for (Index j = 0; j < p; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

// C - A*X*B evaluated as C - (A*X)*B; all residual code uses this one grouping
// so that independently recomputed residuals agree bit-for-bit.
inline Mat residual(const Mat& c, const Mat& a, const Mat& x, const Mat& b) {
  Mat axb = multiply(multiply(a, x), b);
  if (!axb.same_shape(c)) throw std::invalid_argument("residual: shape mismatch");
  Mat r(c.rows(), c.cols());
  for (Index k = 0; k < c.size(); ++k) r.data()[k] = c.data()[k] - axb.data()[k];
  return r;
}

inline Mat add_scaled(const Mat& a, double s, const Mat& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("add_scaled: shape mismatch");
  Mat r(a.rows(), a.cols());
  for (Index k = 0; k < a.size(); ++k) r.data()[k] = a.data()[k] + s * b.data()[k];
  return r;
}

// Sum of squared entries, accumulated in a fixed (row-major, 4-way unrolled)
// order so results are deterministic for a given input.
inline double frob_norm_sq(const Mat& m) {
  const double* d = m.data();
  const Index n = m.size();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  Index k = 0;
  for (; k + 4 <= n; k += 4) {
    s0 += d[k] * d[k];
    s1 += d[k + 1] * d[k + 1];
    s2 += d[k + 2] * d[k + 2];
    s3 += d[k + 3] * d[k + 3];
  }
  for (; k < n; ++k) s0 += d[k] * d[k];
  return (s0 + s1) + (s2 + s3);
}

inline double frob_norm(const Mat& m) { return std::sqrt(frob_norm_sq(m)); }

// Squared Euclidean norm of every row.
inline std::vector<double> row_norms_sq(const Mat& m) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i) {
    const double* r = m.data() + i * m.cols();
    double s = 0.0;
    for (Index j = 0; j < m.cols(); ++j) s += r[j] * r[j];
    out[static_cast<std::size_t>(i)] = s;
  }
  return out;
}

// M += scale * u * w^T.
inline void rank_one_update(Mat& m, double scale, std::span<const double> u,
                            std::span<const double> w) {
  if (static_cast<Index>(u.size()) != m.rows() || static_cast<Index>(w.size()) != m.cols())
    throw std::invalid_argument("rank_one_update: vector lengths disagree with matrix shape");
  for (Index i = 0; i < m.rows(); ++i) {
    const double su = scale * u[static_cast<std::size_t>(i)];
    double* r = m.data() + i * m.cols();
    for (Index j = 0; j < m.cols(); ++j) r[j] += su * w[static_cast<std::size_t>(j)];
  }
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (Index k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a.data()[k] - b.data()[k]));
  return m;
}

inline double frob_dist(const Mat& a, const Mat& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("frob_dist: shape mismatch");
  double s = 0.0;
  for (Index k = 0; k < a.size(); ++k) {
    const double d = a.data()[k] - b.data()[k];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace rgrk
