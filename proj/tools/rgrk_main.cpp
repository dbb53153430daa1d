// Command line front end: generate test problems, run the solvers, benchmark
// the three variants against each other, inspect convergence-rate constants,
// and fit B-spline surfaces.
//
// Exit codes: 0 success/converged, 1 usage or input errors, 2 iteration budget
// exhausted before the tolerance, 3 internal consistency failure (residual
// drift or divergence).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rgrk/mat_io.hpp"
#include "rgrk/problems.hpp"
#include "rgrk/report_io.hpp"
#include "rgrk/solver.hpp"
#include "rgrk/surface.hpp"
#include "rgrk/theory.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNotConverged = 2;
constexpr int kExitInvariant = 3;

struct InstanceSpec {
  std::string input_dir;
  std::string family = "dense";
  rgrk::Index rows = 100;
  rgrk::Index cols = 25;
  rgrk::Index rhs_cols = 50;
  rgrk::Index rank_a = 0;  // 0 picks cols / 2
  rgrk::Index rank_b = 0;
};

void add_instance_options(CLI::App* sub, InstanceSpec& spec, bool allow_input) {
  if (allow_input)
    sub->add_option("--input", spec.input_dir, "directory with A.csv/B.csv/C.csv to load");
  sub->add_option("--family", spec.family, "dense|sparse|block|lowrank")
      ->capture_default_str();
  sub->add_option("--rows,-m", spec.rows, "rows of A and C")->capture_default_str();
  sub->add_option("--cols,-n", spec.cols, "columns of A, order of X")->capture_default_str();
  sub->add_option("--rhs-cols,-p", spec.rhs_cols, "columns of B and C")->capture_default_str();
  sub->add_option("--rank-a", spec.rank_a, "factor rank of A (lowrank family, 0 = cols/2)")
      ->capture_default_str();
  sub->add_option("--rank-b", spec.rank_b, "factor rank of B (lowrank family, 0 = cols/2)")
      ->capture_default_str();
}

rgrk::ProblemInstance make_instance(const InstanceSpec& spec, std::uint64_t seed) {
  if (!spec.input_dir.empty()) return rgrk::load_instance(spec.input_dir);
  const rgrk::Family family = rgrk::family_from_string(spec.family);
  const rgrk::Index r1 = spec.rank_a > 0 ? spec.rank_a : std::max<rgrk::Index>(1, spec.cols / 2);
  const rgrk::Index r2 = spec.rank_b > 0 ? spec.rank_b : std::max<rgrk::Index>(1, spec.cols / 2);
  return rgrk::generate(family, spec.rows, spec.cols, spec.rhs_cols, r1, r2,
                        rgrk::RngSpec{seed, 0});
}

struct SolveFlags {
  std::string method = "me-rgrk";
  double theta = 0.9;
  double alpha = std::numeric_limits<double>::quiet_NaN();  // NaN = per-method default
  double beta = std::numeric_limits<double>::quiet_NaN();
  double tol = 1e-5;
  long max_iters = 100000;
  long refresh = 5000;
  long stride = 10;
  std::string sampling = "proportional";
};

void add_solver_options(CLI::App* sub, SolveFlags& flags) {
  sub->add_option("--method", flags.method, "me-rgrk|pm-rgrk|nm-rgrk (or me|pm|nm)")
      ->capture_default_str();
  sub->add_option("--theta", flags.theta, "greedy relaxation weight in (0, 1]")
      ->capture_default_str();
  sub->add_option("--alpha", flags.alpha, "step size (defaults per method)");
  sub->add_option("--beta", flags.beta, "momentum weight (defaults per method)");
  sub->add_option("--tol", flags.tol, "stop once ||R||_F/||R0||_F falls below this")
      ->capture_default_str();
  sub->add_option("--max-iters", flags.max_iters, "iteration budget")->capture_default_str();
  sub->add_option("--refresh", flags.refresh, "recompute the residual every this many steps")
      ->capture_default_str();
  sub->add_option("--stride", flags.stride, "history recording stride")->capture_default_str();
  sub->add_option("--sampling", flags.sampling, "proportional|uniform")->capture_default_str();
}

rgrk::SolverConfig build_config(const SolveFlags& flags, std::uint64_t seed,
                                std::uint64_t stream) {
  const rgrk::Method method = rgrk::method_from_string(flags.method);
  rgrk::SolverConfig cfg = rgrk::default_config(method);
  cfg.theta = flags.theta;
  if (!std::isnan(flags.alpha)) cfg.alpha = flags.alpha;
  if (!std::isnan(flags.beta)) cfg.beta = flags.beta;
  cfg.tol_rrn = flags.tol;
  if (cfg.tol_rrn <= 0.0) {
    std::cerr << "warning: tolerance clamped to the smallest positive double; the run "
                 "will stop only on the iteration budget\n";
    cfg.tol_rrn = std::numeric_limits<double>::denorm_min();
  }
  cfg.max_iters = flags.max_iters;
  cfg.refresh_period = flags.refresh;
  cfg.history_stride = flags.stride;
  if (flags.sampling == "proportional")
    cfg.sampling = rgrk::Sampling::Proportional;
  else if (flags.sampling == "uniform")
    cfg.sampling = rgrk::Sampling::Uniform;
  else
    throw std::invalid_argument("unknown sampling rule: " + flags.sampling);
  cfg.rng = rgrk::RngSpec{seed, stream};
  for (const std::string& w : rgrk::validate_config(cfg)) std::cerr << "warning: " << w << '\n';
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
  if (!out.good()) throw std::runtime_error("write failed: " + path);
}

std::string report_csv(const rgrk::ConvergenceReport& r) {
  std::ostringstream os;
  os << "method,theta,alpha,beta,seed,iters,converged,final_rrn,elapsed_seconds,"
        "error_to_oracle\n";
  os << rgrk::method_name(r.method) << ',' << rgrk::format_double(r.theta) << ','
     << rgrk::format_double(r.alpha) << ',' << rgrk::format_double(r.beta) << ',' << r.rng.seed
     << ',' << r.final_iter << ',' << (r.converged ? 1 : 0) << ','
     << rgrk::format_double(r.final_rrn_recomputed) << ','
     << rgrk::format_double(r.elapsed_seconds) << ','
     << (r.error_to_oracle ? rgrk::format_double(*r.error_to_oracle) : std::string()) << '\n';
  return os.str();
}

int cmd_generate(const InstanceSpec& spec, std::uint64_t seed, const std::string& out_dir) {
  if (out_dir.empty()) throw std::invalid_argument("generate requires --out DIRECTORY");
  const rgrk::ProblemInstance inst = make_instance(spec, seed);
  rgrk::save_instance(inst, out_dir);
  std::cout << "wrote " << inst.label << " (" << inst.a.rows() << "x" << inst.a.cols() << "x"
            << inst.b.cols() << ", seed " << seed << ") to " << out_dir << '\n';
  return kExitOk;
}

// With --out PREFIX, writes PREFIX_history.csv and PREFIX_summary.json;
// without it the summary goes to stdout in the chosen format.
int cmd_solve(const InstanceSpec& spec, const SolveFlags& flags, std::uint64_t seed,
              const std::string& out, const std::string& format) {
  const rgrk::ProblemInstance inst = make_instance(spec, seed);
  const rgrk::SolverConfig cfg = build_config(flags, seed, 1);
  const rgrk::ConvergenceReport report = rgrk::solve(inst, cfg);
  nlohmann::json j = rgrk::report_to_json(report);
  j["instance"] = inst.label;
  if (out.empty()) {
    write_text("", format == "json" ? j.dump(2) + "\n" : report_csv(report));
  } else {
    rgrk::save_history_csv(out + "_history.csv", report.history);
    rgrk::save_report_json(out + "_summary.json", j);
  }
  if (!report.converged) {
    std::cerr << "did not reach tolerance " << rgrk::format_double(cfg.tol_rrn) << " within "
              << cfg.max_iters << " iterations (final rrn "
              << rgrk::format_double(report.final_rrn_recomputed) << ")\n";
    return kExitNotConverged;
  }
  return kExitOk;
}

int cmd_bench(const InstanceSpec& spec, const SolveFlags& flags, std::uint64_t seed,
              long repeats, const std::vector<double>& thetas, const std::string& out,
              const std::string& format) {
  if (repeats < 1) throw std::invalid_argument("bench requires --repeats >= 1");
  const rgrk::ProblemInstance inst = make_instance(spec, seed);
  const std::size_t window =
      std::max<std::size_t>(1, std::thread::hardware_concurrency());

  struct Row {
    std::string method;
    double theta = 0.0, alpha = 0.0, beta = 0.0;
    double it_mean = 0.0, it_median = 0.0, cpu_mean = 0.0, rrn_mean = 0.0, speedup = 1.0;
    long converged = 0;
    std::vector<std::uint64_t> seeds;
  };
  std::vector<Row> rows;
  for (double theta : thetas) {
    double baseline_cpu = 0.0;
    for (const char* name : {"me-rgrk", "pm-rgrk", "nm-rgrk"}) {
      SolveFlags f = flags;
      f.method = name;
      f.theta = theta;
      // Replicates share the immutable instance; each owns its own seed
      // (base + index) and runs in the bounded async window.
      std::vector<rgrk::ConvergenceReport> reports(static_cast<std::size_t>(repeats));
      std::deque<std::pair<std::size_t, std::future<rgrk::ConvergenceReport>>> inflight;
      auto drain_one = [&] {
        reports[inflight.front().first] = inflight.front().second.get();
        inflight.pop_front();
      };
      for (long rep = 0; rep < repeats; ++rep) {
        const rgrk::SolverConfig cfg = build_config(f, seed + static_cast<std::uint64_t>(rep), 1);
        inflight.emplace_back(static_cast<std::size_t>(rep),
                              std::async(std::launch::async,
                                         [&inst, cfg] { return rgrk::solve(inst, cfg); }));
        if (inflight.size() >= window) drain_one();
      }
      while (!inflight.empty()) drain_one();

      Row row;
      row.method = name;
      row.theta = theta;
      row.alpha = reports.front().alpha;
      row.beta = reports.front().beta;
      std::vector<double> its;
      for (long rep = 0; rep < repeats; ++rep) {
        const rgrk::ConvergenceReport& r = reports[static_cast<std::size_t>(rep)];
        its.push_back(static_cast<double>(r.final_iter));
        row.cpu_mean += r.elapsed_seconds;
        row.rrn_mean += r.final_rrn_recomputed;
        row.converged += r.converged ? 1 : 0;
        row.seeds.push_back(seed + static_cast<std::uint64_t>(rep));
      }
      row.cpu_mean /= static_cast<double>(repeats);
      row.rrn_mean /= static_cast<double>(repeats);
      double it_sum = 0.0;
      for (double v : its) it_sum += v;
      row.it_mean = std::round(it_sum / static_cast<double>(repeats));
      std::sort(its.begin(), its.end());
      const std::size_t h = its.size() / 2;
      row.it_median = its.size() % 2 == 1 ? its[h] : 0.5 * (its[h - 1] + its[h]);
      if (row.method == "me-rgrk") baseline_cpu = row.cpu_mean;
      row.speedup = row.cpu_mean > 0.0 ? baseline_cpu / row.cpu_mean : 1.0;
      rows.push_back(row);
      std::cerr << name << " theta=" << theta << ": mean it " << row.it_mean << ", mean cpu "
                << row.cpu_mean << "s (" << row.converged << '/' << repeats << " converged)\n";
    }
  }
  std::ostringstream os;
  if (format == "json") {
    nlohmann::json arr = nlohmann::json::array();
    for (const Row& r : rows)
      arr.push_back({{"method", r.method},
                     {"theta", r.theta},
                     {"alpha", r.alpha},
                     {"beta", r.beta},
                     {"it_mean", r.it_mean},
                     {"it_median", r.it_median},
                     {"cpu_mean_seconds", r.cpu_mean},
                     {"rrn_final_mean", r.rrn_mean},
                     {"speedup_vs_baseline", r.speedup},
                     {"repeats", repeats},
                     {"converged", r.converged},
                     {"seeds", r.seeds}});
    os << arr.dump(2) << '\n';
  } else {
    os << "method,theta,it,cpu,su\n";
    for (const Row& r : rows)
      os << r.method << ',' << rgrk::format_double(r.theta) << ',' << r.it_mean << ','
         << rgrk::format_double(r.cpu_mean) << ',' << rgrk::format_double(r.speedup) << '\n';
  }
  write_text(out, os.str());
  return kExitOk;
}

int cmd_bounds(const InstanceSpec& spec, std::uint64_t seed, const std::vector<double>& alphas,
               const std::vector<double>& betas, const std::string& out,
               const std::string& format) {
  const rgrk::ProblemInstance inst = make_instance(spec, seed);
  const rgrk::SpectralBounds sb = rgrk::spectral_bounds(inst.a, inst.b);
  struct Entry {
    rgrk::Method method;
    rgrk::RateFactors f;
  };
  std::vector<Entry> grid;
  for (rgrk::Method m : {rgrk::Method::PmRgrk, rgrk::Method::NmRgrk})
    for (double alpha : alphas)
      for (double beta : betas) grid.push_back({m, rgrk::rate_factors(m, alpha, beta, sb.rho_tilde)});
  std::ostringstream os;
  if (format == "json") {
    nlohmann::json j;
    j["spectral"] = {{"sigma_min_nz_a", sb.sigma_min_nz_a},
                     {"sigma_max_a", sb.sigma_max_a},
                     {"sigma_min_nz_b", sb.sigma_min_nz_b},
                     {"sigma_max_b", sb.sigma_max_b},
                     {"a_frob_sq", sb.a_frob_sq},
                     {"b_frob_sq", sb.b_frob_sq},
                     {"rank_a", sb.rank_a},
                     {"rank_b", sb.rank_b},
                     {"rho_tilde", sb.rho_tilde}};
    nlohmann::json arr = nlohmann::json::array();
    for (const Entry& e : grid)
      arr.push_back({{"method", rgrk::method_name(e.method)},
                     {"alpha", e.f.alpha},
                     {"beta", e.f.beta},
                     {"beta_max", e.f.beta_max},
                     {"gamma1", e.f.gamma1},
                     {"gamma2", e.f.gamma2},
                     {"gamma3", e.f.gamma3},
                     {"gamma4", e.f.gamma4},
                     {"q1", e.f.q1},
                     {"q2", e.f.q2},
                     {"admissible", e.f.params_admissible}});
    j["grid"] = arr;
    os << j.dump(2) << '\n';
  } else {
    os << "method,alpha,beta,rho_tilde,beta_max,gamma1,gamma2,gamma3,gamma4,q1,q2,admissible\n";
    for (const Entry& e : grid)
      os << rgrk::method_name(e.method) << ',' << rgrk::format_double(e.f.alpha) << ','
         << rgrk::format_double(e.f.beta) << ',' << rgrk::format_double(sb.rho_tilde) << ','
         << rgrk::format_double(e.f.beta_max) << ',' << rgrk::format_double(e.f.gamma1) << ','
         << rgrk::format_double(e.f.gamma2) << ',' << rgrk::format_double(e.f.gamma3) << ','
         << rgrk::format_double(e.f.gamma4) << ',' << rgrk::format_double(e.f.q1) << ','
         << rgrk::format_double(e.f.q2) << ',' << (e.f.params_admissible ? 1 : 0) << '\n';
  }
  write_text(out, os.str());
  return kExitOk;
}

int cmd_fit(const std::string& surface, rgrk::Index rows, rgrk::Index cols, rgrk::Index basis,
            int degree, const SolveFlags& flags, bool squared, std::uint64_t seed,
            const std::string& prefix, rgrk::Index mesh_rows, rgrk::Index mesh_cols) {
  if (prefix.empty()) throw std::invalid_argument("fit requires --out PREFIX");
  const rgrk::SurfaceKind kind = rgrk::surface_from_string(surface);
  const rgrk::SurfaceGrid grid = rgrk::sample_surface(kind, rows, cols);
  rgrk::FitOptions opt;
  opt.basis_count = basis;
  opt.degree = degree;
  opt.solver = build_config(flags, seed, 1);
  opt.aggregate = squared ? rgrk::ResidualAggregate::SumSquares
                          : rgrk::ResidualAggregate::SumNorms;
  const rgrk::FitResult fit = rgrk::fit_surface(grid, opt);
  rgrk::save_surface_csv(prefix + "_data.csv", grid);
  rgrk::save_fit_mesh_obj(prefix + "_mesh.obj", fit, mesh_rows, mesh_cols);
  rgrk::save_history_csv(prefix + "_history.csv", fit.report.history);
  nlohmann::json j = rgrk::report_to_json(fit.report);
  j["surface"] = rgrk::surface_name(kind);
  j["grid_rows"] = rows;
  j["grid_cols"] = cols;
  j["basis_count"] = basis;
  j["degree"] = degree;
  j["aggregate"] = squared ? "sum_squared_norms" : "sum_norms";
  rgrk::save_report_json(prefix + "_summary.json", j);
  std::cout << "fit " << rgrk::surface_name(kind) << ": " << fit.report.final_iter
            << " iterations, residual ratio "
            << rgrk::format_double(fit.report.final_rrn_recomputed) << '\n';
  if (!fit.report.converged) {
    std::cerr << "did not reach tolerance within the iteration budget\n";
    return kExitNotConverged;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"randomized greedy Kaczmarz solvers for the matrix equation A X B = C"};
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 0;
  std::string out, format = "csv";
  app.add_option("--seed", seed, "seed for generation and solver streams")
      ->capture_default_str();
  app.add_option("--out", out, "output file/directory/prefix (default: stdout)");
  app.add_option("--format", format, "csv|json")->capture_default_str()
      ->check(CLI::IsMember({"csv", "json"}));

  InstanceSpec gen_spec;
  CLI::App* gen = app.add_subcommand("generate", "write a consistent test instance to --out");
  add_instance_options(gen, gen_spec, false);

  InstanceSpec solve_spec;
  SolveFlags solve_flags;
  CLI::App* solve = app.add_subcommand("solve", "run one solver on one instance");
  add_instance_options(solve, solve_spec, true);
  add_solver_options(solve, solve_flags);

  InstanceSpec bench_spec;
  SolveFlags bench_flags;
  std::vector<double> thetas{0.5, 0.7, 0.9};
  long repeats = 20;
  CLI::App* bench = app.add_subcommand("bench", "compare the three methods on one instance");
  add_instance_options(bench, bench_spec, true);
  bench->add_option("--thetas", thetas, "greedy weights to sweep")->capture_default_str();
  bench->add_option("--repeats", repeats, "runs per method/theta pair")->capture_default_str();
  bench->add_option("--tol", bench_flags.tol, "stopping tolerance")->capture_default_str();
  bench->add_option("--max-iters", bench_flags.max_iters, "iteration budget")
      ->capture_default_str();

  InstanceSpec bounds_spec;
  std::vector<double> bounds_alphas{0.9, 0.8};
  std::vector<double> bounds_betas{0.3, 0.5};
  CLI::App* bounds = app.add_subcommand("bounds", "convergence-rate constants for an instance");
  add_instance_options(bounds, bounds_spec, true);
  bounds->add_option("--alphas", bounds_alphas, "step sizes to tabulate")->capture_default_str();
  bounds->add_option("--betas", bounds_betas, "momentum weights to tabulate")
      ->capture_default_str();

  std::string fit_surface_name = "1";
  rgrk::Index fit_rows = 100, fit_cols = 40, fit_basis = 30;
  int fit_degree = 3;
  SolveFlags fit_flags;
  fit_flags.method = "pm-rgrk";
  fit_flags.tol = 5e-4;
  bool fit_squared = false;
  rgrk::Index mesh_rows = 100, mesh_cols = 40;
  CLI::App* fit = app.add_subcommand("fit", "fit a B-spline surface to a sampled test surface");
  fit->add_option("--surface", fit_surface_name, "spiral|tube (or 1|2)")->capture_default_str();
  fit->add_option("--rows", fit_rows, "sample rows (t direction)")->capture_default_str();
  fit->add_option("--cols", fit_cols, "sample columns (s direction)")->capture_default_str();
  fit->add_option("--basis", fit_basis, "basis functions per direction")->capture_default_str();
  fit->add_option("--degree", fit_degree, "spline degree")->capture_default_str();
  add_solver_options(fit, fit_flags);
  fit->add_flag("--squared-aggregate", fit_squared,
                "aggregate channels by squared norms instead of norms");
  fit->add_option("--mesh-rows", mesh_rows, "OBJ mesh resolution (u)")->capture_default_str();
  fit->add_option("--mesh-cols", mesh_cols, "OBJ mesh resolution (v)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_generate(gen_spec, seed, out);
    if (solve->parsed()) return cmd_solve(solve_spec, solve_flags, seed, out, format);
    if (bench->parsed())
      return cmd_bench(bench_spec, bench_flags, seed, repeats, thetas, out, format);
    if (bounds->parsed())
      return cmd_bounds(bounds_spec, seed, bounds_alphas, bounds_betas, out, format);
    if (fit->parsed())
      return cmd_fit(fit_surface_name, fit_rows, fit_cols, fit_basis, fit_degree, fit_flags,
                     fit_squared, seed, out, mesh_rows, mesh_cols);
    std::cerr << "no subcommand given\n";
    return kExitUsage;
  } catch (const rgrk::DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvariant;
  } catch (const rgrk::InvariantError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}
