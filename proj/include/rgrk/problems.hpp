#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "rgrk/decomp.hpp"
#include "rgrk/mat.hpp"
#include "rgrk/mat_io.hpp"
#include "rgrk/rng.hpp"

namespace rgrk {

// A consistent matrix equation A*X*B = C with A (m x n), X (n x n), B (n x p).
// x_star, when present, is a solution; generators fill it with the planted
// solution (or the minimum-norm one when the planted solution is not unique).
struct ProblemInstance {
  Mat a, b, c;
  std::optional<Mat> x_star;
  std::string label;
  RngSpec rng;
};

enum class Family { Dense, Sparse, Block, LowRank };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::Dense: return "dense";
    case Family::Sparse: return "sparse";
    case Family::Block: return "block";
    case Family::LowRank: return "lowrank";
  }
  return "unknown";
}

inline Family family_from_string(const std::string& s) {
  if (s == "dense") return Family::Dense;
  if (s == "sparse") return Family::Sparse;
  if (s == "block") return Family::Block;
  if (s == "lowrank") return Family::LowRank;
  throw std::invalid_argument("unknown problem family: " + s);
}

// Throws std::invalid_argument naming the first violated instance invariant.
inline void validate_instance(const ProblemInstance& inst) {
  const Index m = inst.a.rows(), n = inst.a.cols(), p = inst.b.cols();
  if (n < 1 || m < n || inst.b.rows() != n || p < n)
    throw std::invalid_argument("instance invariant: dimensions require m >= n >= 1, p >= n");
  if (inst.c.rows() != m || inst.c.cols() != p)
    throw std::invalid_argument("instance invariant: C must be m x p");
  if (!inst.a.all_finite() || !inst.b.all_finite() || !inst.c.all_finite())
    throw std::invalid_argument("instance invariant: all entries must be finite");
  for (double s : row_norms_sq(inst.a))
    if (s == 0.0) throw std::invalid_argument("instance invariant: zero row in A");
  for (double s : row_norms_sq(transpose(inst.b)))
    if (s == 0.0) throw std::invalid_argument("instance invariant: zero column in B");
  if (inst.x_star) {
    if (inst.x_star->rows() != n || inst.x_star->cols() != n)
      throw std::invalid_argument("instance invariant: x_star must be n x n");
    const double rel = frob_norm_sq(residual(inst.c, inst.a, *inst.x_star, inst.b));
    if (rel > 1e-18 * frob_norm_sq(inst.c))
      throw std::invalid_argument("instance invariant: x_star is not a solution of A*X*B = C");
  }
}

namespace detail {

inline Mat randn_mat(Index rows, Index cols, NormalGenerator& gen) {
  Mat m(rows, cols);
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = gen.next();
  return m;
}

inline void check_dims(Index m, Index n, Index p) {
  if (n < 1 || m < n || p < n)
    throw std::invalid_argument("generator: dimensions require m >= n >= 1 and p >= n");
}

inline std::string dim_label(const char* fam, Index m, Index n, Index p, RngSpec rng) {
  return std::string(fam) + "-" + std::to_string(m) + "x" + std::to_string(n) + "x" +
         std::to_string(p) + "-seed" + std::to_string(rng.seed);
}

}  // namespace detail

// Dense standard-normal A and B with a planted standard-normal solution.
inline ProblemInstance gen_dense(Index m, Index n, Index p, RngSpec rng) {
  detail::check_dims(m, n, p);
  NormalGenerator gen(rng);
  ProblemInstance inst;
  inst.a = detail::randn_mat(m, n, gen);
  inst.b = detail::randn_mat(n, p, gen);
  inst.x_star = detail::randn_mat(n, n, gen);
  inst.c = multiply(multiply(inst.a, *inst.x_star), inst.b);
  inst.label = detail::dim_label("dense", m, n, p, rng);
  inst.rng = rng;
  return inst;
}

// A holds roughly m normal entries placed independently with probability 1/n
// per position (so the expected count is m); rows left empty get a single
// normal entry at a random column. B and the planted solution are dense.
inline ProblemInstance gen_sparse(Index m, Index n, Index p, RngSpec rng) {
  detail::check_dims(m, n, p);
  NormalGenerator gen(rng);
  ProblemInstance inst;
  inst.a = Mat(m, n);
  const double density = 1.0 / static_cast<double>(n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j)
      if (gen.uniform() < density) inst.a(i, j) = gen.next();
  for (Index i = 0; i < m; ++i) {
    bool empty = true;
    for (Index j = 0; j < n; ++j)
      if (inst.a(i, j) != 0.0) { empty = false; break; }
    if (empty) {
      const Index j = std::min<Index>(n - 1, static_cast<Index>(gen.uniform() * static_cast<double>(n)));
      inst.a(i, j) = gen.next();
    }
  }
  inst.b = detail::randn_mat(n, p, gen);
  inst.x_star = detail::randn_mat(n, n, gen);
  inst.c = multiply(multiply(inst.a, *inst.x_star), inst.b);
  inst.label = detail::dim_label("sparse", m, n, p, rng);
  inst.rng = rng;
  return inst;
}

// A is a 2x2 block tiling of one uniform(0,1) block, so rank(A) <= n/2. The
// planted solution is therefore not unique; x_star stores the minimum-norm
// solution the iterations converge to from a zero start.
inline ProblemInstance gen_block(Index m, Index n, Index p, RngSpec rng) {
  detail::check_dims(m, n, p);
  if (m % 2 != 0 || n % 2 != 0)
    throw std::invalid_argument("gen_block: m and n must be even");
  NormalGenerator gen(rng);
  ProblemInstance inst;
  const Index mh = m / 2, nh = n / 2;
  Mat a1(mh, nh);
  for (Index k = 0; k < a1.size(); ++k) a1.data()[k] = gen.uniform();
  inst.a = Mat(m, n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) inst.a(i, j) = a1(i % mh, j % nh);
  inst.b = detail::randn_mat(n, p, gen);
  const Mat planted = detail::randn_mat(n, n, gen);
  inst.c = multiply(multiply(inst.a, planted), inst.b);
  inst.x_star = pinv_solution(inst.a, inst.c, inst.b);
  inst.label = detail::dim_label("block", m, n, p, rng);
  inst.rng = rng;
  return inst;
}

// A and B have prescribed ranks r1 and r2 with singular values drawn from
// [1, 3]. The planted solution A^T * Z * B^T lies in the range of the update
// operator, so it is exactly the minimum-norm solution.
inline ProblemInstance gen_lowrank(Index m, Index n, Index p, Index r1, Index r2, RngSpec rng) {
  detail::check_dims(m, n, p);
  if (r1 < 1 || r1 > n || r2 < 1 || r2 > n)
    throw std::invalid_argument("gen_lowrank: ranks must satisfy 1 <= r <= n");
  NormalGenerator gen(rng);

  auto factor = [&gen](Index rows, Index cols, Index rank) {
    const Mat u = householder_qr(detail::randn_mat(rows, rank, gen)).q;
    const Mat v = householder_qr(detail::randn_mat(cols, rank, gen)).q;
    std::vector<double> d(static_cast<std::size_t>(rank));
    for (double& x : d) x = 1.0 + 2.0 * gen.uniform();
    Mat ud = u;
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < rank; ++j) ud(i, j) *= d[static_cast<std::size_t>(j)];
    return multiply(ud, transpose(v));
  };

  ProblemInstance inst;
  inst.a = factor(m, n, r1);
  inst.b = factor(n, p, r2);
  const Mat z = detail::randn_mat(m, p, gen);
  inst.x_star = multiply(multiply(transpose(inst.a), z), transpose(inst.b));
  inst.c = multiply(multiply(inst.a, *inst.x_star), inst.b);
  inst.label = detail::dim_label("lowrank", m, n, p, rng) + "-r" + std::to_string(r1) + "x" +
               std::to_string(r2);
  inst.rng = rng;
  return inst;
}

// Uniform entry point used by the command-line tools.
inline ProblemInstance generate(Family fam, Index m, Index n, Index p, Index r1, Index r2,
                                RngSpec rng) {
  switch (fam) {
    case Family::Dense: return gen_dense(m, n, p, rng);
    case Family::Sparse: return gen_sparse(m, n, p, rng);
    case Family::Block: return gen_block(m, n, p, rng);
    case Family::LowRank: return gen_lowrank(m, n, p, r1, r2, rng);
  }
  throw std::invalid_argument("generate: unknown family");
}

// On-disk layout: A.csv, B.csv, C.csv, optional Xstar.csv, and a one-line
// meta.json carrying the label and seed.
inline void save_instance(const ProblemInstance& inst, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_matrix_csv(inst.a, dir / "A.csv");
  save_matrix_csv(inst.b, dir / "B.csv");
  save_matrix_csv(inst.c, dir / "C.csv");
  if (inst.x_star) save_matrix_csv(*inst.x_star, dir / "Xstar.csv");
  nlohmann::json meta{{"label", inst.label},
                      {"seed", inst.rng.seed},
                      {"stream", inst.rng.stream}};
  std::ofstream out(dir / "meta.json");
  if (!out) throw std::runtime_error("save_instance: cannot open meta.json");
  out << meta.dump() << "\n";
}

inline ProblemInstance load_instance(const std::filesystem::path& dir) {
  ProblemInstance inst;
  inst.a = load_matrix_csv(dir / "A.csv");
  inst.b = load_matrix_csv(dir / "B.csv");
  inst.c = load_matrix_csv(dir / "C.csv");
  if (std::filesystem::exists(dir / "Xstar.csv"))
    inst.x_star = load_matrix_csv(dir / "Xstar.csv");
  const auto meta_path = dir / "meta.json";
  if (std::filesystem::exists(meta_path)) {
    std::ifstream in(meta_path);
    nlohmann::json meta = nlohmann::json::parse(in);
    inst.label = meta.value("label", std::string{});
    inst.rng.seed = meta.value("seed", std::uint64_t{0});
    inst.rng.stream = meta.value("stream", std::uint64_t{0});
  }
  validate_instance(inst);
  return inst;
}

}  // namespace rgrk
