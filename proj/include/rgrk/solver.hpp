#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rgrk/mat.hpp"
#include "rgrk/problems.hpp"
#include "rgrk/rng.hpp"

namespace rgrk {

enum class Method { MeRgrk, PmRgrk, NmRgrk };
enum class Sampling { Proportional, Uniform };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::MeRgrk: return "me-rgrk";
    case Method::PmRgrk: return "pm-rgrk";
    case Method::NmRgrk: return "nm-rgrk";
  }
  return "unknown";
}

inline Method method_from_string(std::string s) {
  if (s == "me" || s == "me-rgrk") return Method::MeRgrk;
  if (s == "pm" || s == "pm-rgrk") return Method::PmRgrk;
  if (s == "nm" || s == "nm-rgrk") return Method::NmRgrk;
  throw std::invalid_argument("unknown method: " + s);
}

struct SolverConfig {
  Method method = Method::MeRgrk;
  double theta = 0.9;        // greedy relaxation weight, (0, 1]
  double alpha = 1.0;        // step size (momentum methods)
  double beta = 0.0;         // momentum weight
  double tol_rrn = 1e-5;     // stop once ||R^k||_F / ||R^0||_F falls below this
  long max_iters = 100000;
  RngSpec rng{};
  long refresh_period = 5000;  // full residual recomputation cadence
  Sampling sampling = Sampling::Proportional;
  long history_stride = 10;
  std::size_t gram_budget_bytes = 512ull << 20;
};

// Per-method step-size/momentum defaults.
inline SolverConfig default_config(Method m) {
  SolverConfig cfg;
  cfg.method = m;
  switch (m) {
    case Method::MeRgrk: cfg.alpha = 1.0; cfg.beta = 0.0; break;
    case Method::PmRgrk: cfg.alpha = 0.9; cfg.beta = 0.3; break;
    case Method::NmRgrk: cfg.alpha = 0.8; cfg.beta = 0.5; break;
  }
  return cfg;
}

// Hard invariants throw; questionable momentum settings only produce warnings
// since the methods are routinely run outside the certified parameter ranges.
inline std::vector<std::string> validate_config(const SolverConfig& cfg) {
  if (!(cfg.theta > 0.0 && cfg.theta <= 1.0))
    throw std::invalid_argument("config: theta must lie in (0, 1]");
  if (!(cfg.tol_rrn > 0.0)) throw std::invalid_argument("config: tol_rrn must be > 0");
  if (cfg.max_iters < 0) throw std::invalid_argument("config: max_iters must be >= 0");
  if (cfg.refresh_period < 1) throw std::invalid_argument("config: refresh_period must be >= 1");
  if (cfg.history_stride < 1) throw std::invalid_argument("config: history_stride must be >= 1");
  if (!std::isfinite(cfg.alpha) || !std::isfinite(cfg.beta))
    throw std::invalid_argument("config: alpha and beta must be finite");
  std::vector<std::string> warnings;
  if (cfg.method != Method::MeRgrk) {
    if (!(cfg.alpha > 0.0 && cfg.alpha < 2.0))
      warnings.push_back("alpha outside (0, 2): convergence theory does not apply");
    if (cfg.beta < 0.0) warnings.push_back("beta < 0: convergence theory does not apply");
    if (cfg.beta >= 1.0) warnings.push_back("beta >= 1: iteration is likely to diverge");
  }
  return warnings;
}

struct HistoryEntry {
  long iter;
  double rrn;
  double elapsed_seconds;
};

struct ConvergenceReport {
  std::vector<HistoryEntry> history;
  long final_iter = 0;
  double final_rrn_recomputed = 0.0;  // from a from-scratch residual at exit
  bool converged = false;
  Mat x_final;
  std::optional<double> error_to_oracle;  // ||X - x_star||_F / ||x_star||_F
  double elapsed_seconds = 0.0;
  double max_rel_drift = 0.0;  // worst maintained-vs-fresh residual gap seen
  Method method = Method::MeRgrk;
  double theta = 0.0, alpha = 0.0, beta = 0.0;
  RngSpec rng{};
};

struct IndexPair {
  Index i, j;
  friend bool operator==(IndexPair a, IndexPair b) { return a.i == b.i && a.j == b.j; }
};

// ---------------------------------------------------------------------------
// Greedy selection primitives.
// ---------------------------------------------------------------------------

// W_ij = R_ij^2 / (||a_i||^2 ||b_j||^2).
inline Mat loss_matrix(const Mat& r, std::span<const double> a_norms_sq,
                       std::span<const double> b_norms_sq) {
  if (static_cast<Index>(a_norms_sq.size()) != r.rows() ||
      static_cast<Index>(b_norms_sq.size()) != r.cols())
    throw std::invalid_argument("loss_matrix: norm vector lengths disagree with R");
  Mat w(r.rows(), r.cols());
  for (Index i = 0; i < r.rows(); ++i) {
    const double ia = 1.0 / a_norms_sq[static_cast<std::size_t>(i)];
    for (Index j = 0; j < r.cols(); ++j)
      w(i, j) = r(i, j) * r(i, j) * ia / b_norms_sq[static_cast<std::size_t>(j)];
  }
  return w;
}

// delta_k = theta * max(W) / ||R||_F^2 + (1 - theta) / (||A||_F^2 ||B||_F^2).
// The index set {W_ij >= delta_k ||R||_F^2} is then never empty because the
// maximizing entry always qualifies.
inline double greedy_threshold(const Mat& w, double r_frob_sq, double theta, double a_frob_sq,
                               double b_frob_sq) {
  if (!(r_frob_sq > 0.0)) throw std::invalid_argument("greedy_threshold: requires ||R||^2 > 0");
  if (!(theta >= 0.0 && theta <= 1.0))
    throw std::invalid_argument("greedy_threshold: theta must lie in [0, 1]");
  double max_w = 0.0;
  for (Index k = 0; k < w.size(); ++k) max_w = std::max(max_w, w.data()[k]);
  return theta * max_w / r_frob_sq + (1.0 - theta) / (a_frob_sq * b_frob_sq);
}

// All (i, j) with W_ij >= delta_k ||R||_F^2, in row-major order. The >= is
// applied with a 1e-12 relative slack to absorb roundoff at the max entry.
inline std::vector<IndexPair> build_index_set(const Mat& w, double delta_k, double r_frob_sq) {
  const double thresh = delta_k * r_frob_sq * (1.0 - 1e-12);
  std::vector<IndexPair> set;
  for (Index i = 0; i < w.rows(); ++i)
    for (Index j = 0; j < w.cols(); ++j)
      if (w(i, j) >= thresh) set.push_back({i, j});
  if (set.empty()) throw InvariantError("build_index_set: greedy index set came out empty");
  return set;
}

// Draws one pair from the set, consuming exactly one value from the stream.
inline IndexPair sample_index(std::span<const IndexPair> set, const Mat& r, Sampling sampling,
                              Xoshiro256pp& rng) {
  if (set.empty()) throw std::invalid_argument("sample_index: empty candidate set");
  const double u = rng.next_double();
  if (sampling == Sampling::Proportional) {
    double total = 0.0;
    for (const IndexPair& ij : set) total += r(ij.i, ij.j) * r(ij.i, ij.j);
    if (total > 0.0) {
      const double target = u * total;
      double acc = 0.0;
      for (const IndexPair& ij : set) {
        acc += r(ij.i, ij.j) * r(ij.i, ij.j);
        if (acc > target) return ij;
      }
      return set.back();
    }
  }
  const auto pos = std::min<std::size_t>(set.size() - 1,
                                         static_cast<std::size_t>(u * static_cast<double>(set.size())));
  return set[pos];
}

// ---------------------------------------------------------------------------
// Update kernels. The momentum variants are written so that alpha = 1, beta = 0
// reproduces the plain update bit for bit.
// ---------------------------------------------------------------------------

namespace detail {

// M += coef * u w^T.
inline void update_plain(Mat& m, double coef, std::span<const double> u,
                         std::span<const double> w) {
  const Index rows = m.rows(), cols = m.cols();
  for (Index i = 0; i < rows; ++i) {
    const double cu = coef * u[static_cast<std::size_t>(i)];
    double* row = m.data() + i * cols;
    for (Index j = 0; j < cols; ++j) row[j] += cu * w[static_cast<std::size_t>(j)];
  }
}

// M' = M + coef u w^T + beta (M - M_prev); M_prev <- M.
inline void update_polyak(Mat& m, Mat& m_prev, double coef, std::span<const double> u,
                          std::span<const double> w, double beta) {
  const Index rows = m.rows(), cols = m.cols();
  for (Index i = 0; i < rows; ++i) {
    const double cu = coef * u[static_cast<std::size_t>(i)];
    double* row = m.data() + i * cols;
    double* prev = m_prev.data() + i * cols;
    for (Index j = 0; j < cols; ++j) {
      const double cur = row[j];
      row[j] = (cur + cu * w[static_cast<std::size_t>(j)]) + beta * (cur - prev[j]);
      prev[j] = cur;
    }
  }
}

// AUX' = M + coef u w^T; M' = AUX' + beta (AUX' - AUX); AUX <- AUX'.
inline void update_nesterov(Mat& m, Mat& aux, double coef, std::span<const double> u,
                            std::span<const double> w, double beta) {
  const Index rows = m.rows(), cols = m.cols();
  for (Index i = 0; i < rows; ++i) {
    const double cu = coef * u[static_cast<std::size_t>(i)];
    double* row = m.data() + i * cols;
    double* aux_row = aux.data() + i * cols;
    for (Index j = 0; j < cols; ++j) {
      const double next_aux = row[j] + cu * w[static_cast<std::size_t>(j)];
      row[j] = next_aux + beta * (next_aux - aux_row[j]);
      aux_row[j] = next_aux;
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Single-step interface over an explicit state. The benchmark loop below uses
// the same kernels with cached Gram rows.
// ---------------------------------------------------------------------------

struct SolverState {
  Mat x;        // current iterate X^(k)
  Mat x_prev;   // X^(k-1), Polyak only
  Mat y;        // auxiliary iterate Y^(k), Nesterov only
  Mat y_prev;   // Y^(k-1), Nesterov only
  Mat r;        // maintained C - A X^(k) B
  Mat r_prev;   // residual matching x_prev, Polyak only
  Mat ry;       // maintained C - A Y^(k) B, Nesterov only
  Mat ry_prev;  // residual matching y_prev, Nesterov only
  Mat bt;       // B^T, for contiguous access to columns of B
  std::vector<double> a_norms_sq, b_norms_sq;
  double a_frob_sq = 0.0, b_frob_sq = 0.0;
  long iter = 0;
};

inline SolverState init_solver_state(const ProblemInstance& inst, Method method,
                                     const std::optional<Mat>& x0 = std::nullopt) {
  SolverState st;
  const Index n = inst.a.cols();
  st.x = x0 ? *x0 : Mat(n, n);
  if (st.x.rows() != n || st.x.cols() != n)
    throw std::invalid_argument("init_solver_state: x0 must be n x n");
  st.r = residual(inst.c, inst.a, st.x, inst.b);
  st.bt = transpose(inst.b);
  st.a_norms_sq = row_norms_sq(inst.a);
  st.b_norms_sq = row_norms_sq(st.bt);
  for (double s : st.a_norms_sq) {
    if (s == 0.0) throw std::invalid_argument("init_solver_state: zero row in A");
    st.a_frob_sq += s;
  }
  for (double s : st.b_norms_sq) {
    if (s == 0.0) throw std::invalid_argument("init_solver_state: zero column in B");
    st.b_frob_sq += s;
  }
  if (method == Method::PmRgrk) {
    st.x_prev = st.x;
    st.r_prev = st.r;
  }
  if (method == Method::NmRgrk) {
    st.y = st.x;
    st.y_prev = st.x;
    st.ry = st.r;
    st.ry_prev = st.r;
  }
  return st;
}

namespace detail {

inline double entry_weight(const SolverState& st, IndexPair ij) {
  return st.a_norms_sq[static_cast<std::size_t>(ij.i)] *
         st.b_norms_sq[static_cast<std::size_t>(ij.j)];
}

}  // namespace detail

// X^(k+1) = X^(k) + v a_i b_j^T with v = R_ij / (||a_i||^2 ||b_j||^2).
// Returns v.
inline double me_rgrk_step(SolverState& st, const ProblemInstance& inst, IndexPair ij) {
  const double v = st.r(ij.i, ij.j) / detail::entry_weight(st, ij);
  detail::update_plain(st.x, v, inst.a.row(ij.i), st.bt.row(ij.j));
  ++st.iter;
  return v;
}

// X^(k+1) = X^(k) + alpha v a_i b_j^T + beta (X^(k) - X^(k-1)).
inline double pm_rgrk_step(SolverState& st, const ProblemInstance& inst, IndexPair ij,
                           double alpha, double beta) {
  const double v = st.r(ij.i, ij.j) / detail::entry_weight(st, ij);
  detail::update_polyak(st.x, st.x_prev, alpha * v, inst.a.row(ij.i), st.bt.row(ij.j), beta);
  ++st.iter;
  return v;
}

// Y^(k+1) = X^(k) + alpha v a_i b_j^T; X^(k+1) = Y^(k+1) + beta (Y^(k+1) - Y^(k)).
inline double nm_rgrk_step(SolverState& st, const ProblemInstance& inst, IndexPair ij,
                           double alpha, double beta) {
  const double v = st.r(ij.i, ij.j) / detail::entry_weight(st, ij);
  st.y_prev = st.y;
  detail::update_nesterov(st.x, st.y, alpha * v, inst.a.row(ij.i), st.bt.row(ij.j), beta);
  ++st.iter;
  return v;
}

// Applies the matching recurrence to the maintained residual(s): the update
// C - A X B inherits from the X update with u = A a_i and w = B^T b_j,
//   plain:    R' = R - v u w^T
//   Polyak:   R' = R - alpha v u w^T + beta (R - R_prev)
//   Nesterov: RY' = R - alpha v u w^T; R' = RY' + beta (RY' - RY)
inline void maintain_residual(SolverState& st, const ProblemInstance& inst, Method method,
                              IndexPair ij, double v, double alpha, double beta) {
  const Index m = inst.a.rows(), n = inst.a.cols(), p = st.bt.rows();
  std::vector<double> u(static_cast<std::size_t>(m)), w(static_cast<std::size_t>(p));
  const std::span<const double> arow = inst.a.row(ij.i);
  for (Index t = 0; t < m; ++t) {
    double s = 0.0;
    const double* row = inst.a.data() + t * n;
    for (Index k = 0; k < n; ++k) s += row[k] * arow[static_cast<std::size_t>(k)];
    u[static_cast<std::size_t>(t)] = s;
  }
  const std::span<const double> btrow = st.bt.row(ij.j);
  for (Index t = 0; t < p; ++t) {
    double s = 0.0;
    const double* row = st.bt.data() + t * n;
    for (Index k = 0; k < n; ++k) s += row[k] * btrow[static_cast<std::size_t>(k)];
    w[static_cast<std::size_t>(t)] = s;
  }
  switch (method) {
    case Method::MeRgrk: detail::update_plain(st.r, -v, u, w); break;
    case Method::PmRgrk: detail::update_polyak(st.r, st.r_prev, -(alpha * v), u, w, beta); break;
    case Method::NmRgrk:
      st.ry_prev = st.ry;
      detail::update_nesterov(st.r, st.ry, -(alpha * v), u, w, beta);
      break;
  }
}

// ---------------------------------------------------------------------------
// Full iteration loop, shared by the single-equation solver and the
// three-channel surface fit (which couples several right-hand sides through a
// combined loss while every channel shares the selected index pair).
// ---------------------------------------------------------------------------

enum class ResidualAggregate { SumNorms, SumSquares };

// Snapshot handed to an iteration observer just before a step is taken.
struct IterationView {
  long iter = 0;
  double rrn = 0.0;
  double r_frob_sq = 0.0;  // combined over channels
  double max_w = 0.0;
  double delta_k = 0.0;
  IndexPair selected{0, 0};
  std::span<const Index> index_set_flat;  // flattened i * cols + j
  Index rows = 0, cols = 0;
  const Mat* w = nullptr;  // combined loss matrix
  std::span<const double> a_norms_sq, b_norms_sq;
  double a_frob_sq = 0.0, b_frob_sq = 0.0;
  std::span<const Mat> x;  // per-channel iterates
  std::span<const Mat> r;  // per-channel maintained residuals
};

using IterationObserver = std::function<void(const IterationView&)>;

namespace detail {

inline double sum_sq_rowwise(const Mat& m) {
  double total = 0.0;
  for (Index i = 0; i < m.rows(); ++i) {
    const double* row = m.data() + i * m.cols();
    double s = 0.0;
    for (Index j = 0; j < m.cols(); ++j) s += row[j] * row[j];
    total += s;
  }
  return total;
}

struct EngineResult {
  std::vector<Mat> x;
  std::vector<Mat> r_final;  // recomputed from scratch at exit
  ConvergenceReport report;
};

// Relative slack used when testing W_ij >= delta_k ||R||_F^2.
constexpr double kSetSlack = 1e-12;
// Maintained residuals may drift from the true residual by at most this
// fraction of ||C||_F before the run is aborted as inconsistent.
constexpr double kDriftLimit = 1e-9;

inline EngineResult run_engine(const Mat& a, const Mat& b, std::span<const Mat* const> cs,
                               std::vector<Mat> x0s, const SolverConfig& cfg,
                               ResidualAggregate agg, const IterationObserver& observer) {
  using clock = std::chrono::steady_clock;
  const auto t_start = clock::now();
  auto elapsed = [&t_start] {
    return std::chrono::duration<double>(clock::now() - t_start).count();
  };

  const Index m = a.rows(), n = a.cols(), p = b.cols();
  const int nc = static_cast<int>(cs.size());
  if (nc < 1 || nc > 8) throw std::invalid_argument("run_engine: channel count out of range");
  for (const Mat* c : cs)
    if (c->rows() != m || c->cols() != p)
      throw std::invalid_argument("run_engine: C channel shape mismatch");

  const std::vector<double> a_norms = row_norms_sq(a);
  const Mat bt = transpose(b);
  const std::vector<double> b_norms = row_norms_sq(bt);
  double a_frob_sq = 0.0, b_frob_sq = 0.0;
  std::vector<double> inv_a(a_norms.size()), inv_b(b_norms.size());
  for (std::size_t i = 0; i < a_norms.size(); ++i) {
    if (a_norms[i] == 0.0) throw std::invalid_argument("run_engine: zero row in A");
    a_frob_sq += a_norms[i];
    inv_a[i] = 1.0 / a_norms[i];
  }
  for (std::size_t j = 0; j < b_norms.size(); ++j) {
    if (b_norms[j] == 0.0) throw std::invalid_argument("run_engine: zero column in B");
    b_frob_sq += b_norms[j];
    inv_b[j] = 1.0 / b_norms[j];
  }

  const bool use_gram =
      static_cast<std::size_t>(m) * static_cast<std::size_t>(m) * sizeof(double) +
          static_cast<std::size_t>(p) * static_cast<std::size_t>(p) * sizeof(double) <=
      cfg.gram_budget_bytes;
  Mat gram_aat, gram_btb;
  if (use_gram) {
    gram_aat = multiply(a, transpose(a));  // row i = A a_i
    gram_btb = multiply(bt, b);            // row j = B^T b_j
  }

  const bool momentum_prev = cfg.method == Method::PmRgrk;
  const bool momentum_aux = cfg.method == Method::NmRgrk;

  std::vector<Mat> x(static_cast<std::size_t>(nc));
  std::vector<Mat> x_aux;  // x_prev (Polyak) or y (Nesterov)
  std::vector<Mat> r(static_cast<std::size_t>(nc));
  std::vector<Mat> r_aux;  // r_prev (Polyak) or ry (Nesterov)
  std::vector<double> c_norm(static_cast<std::size_t>(nc));
  for (int ch = 0; ch < nc; ++ch) {
    x[ch] = x0s.empty() ? Mat(n, n) : std::move(x0s[static_cast<std::size_t>(ch)]);
    if (x[ch].rows() != n || x[ch].cols() != n)
      throw std::invalid_argument("run_engine: initial iterate must be n x n");
    r[ch] = residual(*cs[static_cast<std::size_t>(ch)], a, x[ch], b);
    c_norm[ch] = frob_norm(*cs[static_cast<std::size_t>(ch)]);
  }
  if (momentum_prev || momentum_aux) {
    x_aux = x;
    r_aux = r;
  }

  const Index sz = m * p;
  std::vector<double> w_buf;
  if (observer) w_buf.assign(static_cast<std::size_t>(sz), 0.0);
  std::vector<Index> set_flat;
  std::vector<double> cum;
  set_flat.reserve(64);
  cum.reserve(64);
  std::vector<double> u_scratch(static_cast<std::size_t>(m));
  std::vector<double> w_scratch(static_cast<std::size_t>(p));

  Xoshiro256pp rng(cfg.rng);
  ConvergenceReport report;
  report.method = cfg.method;
  report.theta = cfg.theta;
  report.alpha = cfg.alpha;
  report.beta = cfg.beta;
  report.rng = cfg.rng;

  double agg0 = 0.0;
  double rrn = 0.0;
  double r2c[8];
  long iter = 0;
  bool converged = false;

  while (true) {
    // Pass 1: per-channel squared residual norms plus the combined loss max.
    double max_w = -1.0;
    for (int ch = 0; ch < nc; ++ch) r2c[ch] = 0.0;
    if (nc == 1) {
      const double* rd = r[0].data();
      double r2 = 0.0;
      for (Index i = 0; i < m; ++i) {
        const double ia = inv_a[static_cast<std::size_t>(i)];
        const double* row = rd + i * p;
        for (Index j = 0; j < p; ++j) {
          const double s = row[j] * row[j];
          r2 += s;
          const double w = s * ia * inv_b[static_cast<std::size_t>(j)];
          if (observer) w_buf[static_cast<std::size_t>(i * p + j)] = w;
          if (w > max_w) max_w = w;
        }
      }
      r2c[0] = r2;
    } else {
      for (Index i = 0; i < m; ++i) {
        const double ia = inv_a[static_cast<std::size_t>(i)];
        for (Index j = 0; j < p; ++j) {
          const Index idx = i * p + j;
          double s = 0.0;
          for (int ch = 0; ch < nc; ++ch) {
            const double v = r[ch].data()[idx];
            const double sq = v * v;
            r2c[ch] += sq;
            s += sq;
          }
          const double w = s * ia * inv_b[static_cast<std::size_t>(j)];
          if (observer) w_buf[static_cast<std::size_t>(idx)] = w;
          if (w > max_w) max_w = w;
        }
      }
    }

    double r2_total = 0.0;
    double agg_now = 0.0;
    for (int ch = 0; ch < nc; ++ch) {
      r2_total += r2c[ch];
      agg_now += (agg == ResidualAggregate::SumNorms) ? std::sqrt(r2c[ch]) : r2c[ch];
    }
    if (!std::isfinite(agg_now))
      throw DivergenceError(iter, "iteration diverged: non-finite residual at iteration " +
                                      std::to_string(iter));
    if (iter == 0) {
      agg0 = agg_now;
      if (agg0 == 0.0) {
        rrn = 0.0;
        report.history.push_back({0, 0.0, elapsed()});
        converged = true;
        break;
      }
    }
    rrn = agg_now / agg0;

    if (iter % cfg.history_stride == 0) report.history.push_back({iter, rrn, elapsed()});

    if (rrn <= cfg.tol_rrn) {
      converged = true;
      break;
    }
    if (iter >= cfg.max_iters) break;

    // Pass 2: collect the candidate set.
    const double big_t = cfg.theta * max_w + (1.0 - cfg.theta) * r2_total / (a_frob_sq * b_frob_sq);
    const double thresh = big_t * (1.0 - kSetSlack);
    const bool proportional = cfg.sampling == Sampling::Proportional;
    set_flat.clear();
    cum.clear();
    double weight_sum = 0.0;
    for (Index i = 0; i < m; ++i) {
      const double ia = inv_a[static_cast<std::size_t>(i)];
      for (Index j = 0; j < p; ++j) {
        const Index idx = i * p + j;
        double s = 0.0;
        for (int ch = 0; ch < nc; ++ch) {
          const double v = r[ch].data()[idx];
          s += v * v;
        }
        const double w = s * ia * inv_b[static_cast<std::size_t>(j)];
        if (w >= thresh) {
          set_flat.push_back(idx);
          if (proportional) {
            weight_sum += s;
            cum.push_back(weight_sum);
          }
        }
      }
    }
    if (set_flat.empty())
      throw InvariantError("run_engine: greedy index set empty at iteration " +
                           std::to_string(iter));

    // One stream draw per iteration, whatever the sampling rule.
    const double u = rng.next_double();
    std::size_t pos;
    if (proportional && weight_sum > 0.0) {
      pos = static_cast<std::size_t>(
          std::upper_bound(cum.begin(), cum.end(), u * weight_sum) - cum.begin());
      if (pos >= set_flat.size()) pos = set_flat.size() - 1;
    } else {
      pos = std::min<std::size_t>(set_flat.size() - 1,
                                  static_cast<std::size_t>(u * static_cast<double>(set_flat.size())));
    }
    const Index flat = set_flat[pos];
    const IndexPair sel{flat / p, flat % p};

    if (observer) {
      Mat w_view(m, p, w_buf);
      IterationView view;
      view.iter = iter;
      view.rrn = rrn;
      view.r_frob_sq = r2_total;
      view.max_w = max_w;
      view.delta_k = big_t / r2_total;
      view.selected = sel;
      view.index_set_flat = set_flat;
      view.rows = m;
      view.cols = p;
      view.w = &w_view;
      view.a_norms_sq = a_norms;
      view.b_norms_sq = b_norms;
      view.a_frob_sq = a_frob_sq;
      view.b_frob_sq = b_frob_sq;
      view.x = x;
      view.r = r;
      observer(view);
    }

    // Step: X update with (a_i, b_j), residual update with (A a_i, B^T b_j).
    const double inv_ab = inv_a[static_cast<std::size_t>(sel.i)] *
                          inv_b[static_cast<std::size_t>(sel.j)];
    std::span<const double> arow = a.row(sel.i);
    std::span<const double> bcol = bt.row(sel.j);
    std::span<const double> uvec, wvec;
    if (use_gram) {
      uvec = gram_aat.row(sel.i);
      wvec = gram_btb.row(sel.j);
    } else {
      for (Index t = 0; t < m; ++t) {
        double s = 0.0;
        const double* row = a.data() + t * n;
        for (Index k = 0; k < n; ++k) s += row[k] * arow[static_cast<std::size_t>(k)];
        u_scratch[static_cast<std::size_t>(t)] = s;
      }
      for (Index t = 0; t < p; ++t) {
        double s = 0.0;
        const double* row = bt.data() + t * n;
        for (Index k = 0; k < n; ++k) s += row[k] * bcol[static_cast<std::size_t>(k)];
        w_scratch[static_cast<std::size_t>(t)] = s;
      }
      uvec = u_scratch;
      wvec = w_scratch;
    }

    for (int ch = 0; ch < nc; ++ch) {
      const double v = r[ch].data()[flat] * inv_ab;
      switch (cfg.method) {
        case Method::MeRgrk:
          detail::update_plain(x[ch], v, arow, bcol);
          detail::update_plain(r[ch], -v, uvec, wvec);
          break;
        case Method::PmRgrk: {
          const double coef = cfg.alpha * v;
          detail::update_polyak(x[ch], x_aux[ch], coef, arow, bcol, cfg.beta);
          detail::update_polyak(r[ch], r_aux[ch], -coef, uvec, wvec, cfg.beta);
          break;
        }
        case Method::NmRgrk: {
          const double coef = cfg.alpha * v;
          detail::update_nesterov(x[ch], x_aux[ch], coef, arow, bcol, cfg.beta);
          detail::update_nesterov(r[ch], r_aux[ch], -coef, uvec, wvec, cfg.beta);
          break;
        }
      }
    }
    ++iter;

    if (iter % cfg.refresh_period == 0) {
      for (int ch = 0; ch < nc; ++ch) {
        if (!x[ch].all_finite())
          throw DivergenceError(iter, "iteration diverged: non-finite iterate at iteration " +
                                          std::to_string(iter));
        Mat fresh = residual(*cs[static_cast<std::size_t>(ch)], a, x[ch], b);
        const double drift = frob_dist(r[ch], fresh);
        const double rel = drift / std::max(c_norm[ch], std::numeric_limits<double>::min());
        report.max_rel_drift = std::max(report.max_rel_drift, rel);
        if (rel > kDriftLimit)
          throw InvariantError("run_engine: maintained residual drifted by " +
                               std::to_string(rel) + " of ||C||_F at iteration " +
                               std::to_string(iter));
        r[ch] = std::move(fresh);
        if (momentum_prev) r_aux[ch] = residual(*cs[static_cast<std::size_t>(ch)], a, x_aux[ch], b);
        if (momentum_aux) r_aux[ch] = residual(*cs[static_cast<std::size_t>(ch)], a, x_aux[ch], b);
      }
    }
  }

  if (report.history.empty() || report.history.back().iter != iter)
    report.history.push_back({iter, rrn, elapsed()});

  EngineResult out;
  double agg_fresh = 0.0;
  for (int ch = 0; ch < nc; ++ch) {
    if (!x[ch].all_finite())
      throw DivergenceError(iter, "iteration diverged: non-finite iterate at iteration " +
                                      std::to_string(iter));
    Mat fresh = residual(*cs[static_cast<std::size_t>(ch)], a, x[ch], b);
    const double r2 = sum_sq_rowwise(fresh);
    agg_fresh += (agg == ResidualAggregate::SumNorms) ? std::sqrt(r2) : r2;
    out.r_final.push_back(std::move(fresh));
  }
  report.final_iter = iter;
  report.converged = converged;
  report.final_rrn_recomputed = (agg0 > 0.0) ? agg_fresh / agg0 : 0.0;
  report.elapsed_seconds = elapsed();
  out.x = std::move(x);
  out.report = std::move(report);
  return out;
}

}  // namespace detail

// Runs the configured method on a consistent instance from X^(0) = x0 (zero by
// default). Exit status: report.converged distinguishes tolerance-met from
// iteration-budget-exhausted.
inline ConvergenceReport solve(const ProblemInstance& inst, const SolverConfig& cfg,
                               const std::optional<Mat>& x0 = std::nullopt,
                               const IterationObserver& observer = {}) {
  validate_config(cfg);
  const Mat* c = &inst.c;
  std::vector<Mat> x0s;
  if (x0) x0s.push_back(*x0);
  detail::EngineResult res = detail::run_engine(inst.a, inst.b, std::span<const Mat* const>(&c, 1),
                                                std::move(x0s), cfg,
                                                ResidualAggregate::SumNorms, observer);
  ConvergenceReport report = std::move(res.report);
  report.x_final = std::move(res.x[0]);
  if (inst.x_star) {
    const double denom = frob_norm(*inst.x_star);
    const double dist = frob_dist(report.x_final, *inst.x_star);
    report.error_to_oracle = denom > 0.0 ? dist / denom : dist;
  }
  return report;
}

}  // namespace rgrk
