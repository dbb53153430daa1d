#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rgrk/mat_io.hpp"
#include "rgrk/solver.hpp"
#include "rgrk/surface.hpp"

namespace rgrk {

inline void save_history_csv(const std::string& path, const std::vector<HistoryEntry>& history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "iter,rrn,elapsed_seconds\n";
  for (const HistoryEntry& h : history)
    out << h.iter << ',' << format_double(h.rrn) << ',' << format_double(h.elapsed_seconds)
        << '\n';
  if (!out.good()) throw std::runtime_error("write failed: " + path);
}

inline std::vector<HistoryEntry> load_history_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty history file: " + path);
  std::vector<HistoryEntry> history;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw std::runtime_error("malformed history row in " + path + ": " + line);
    HistoryEntry h;
    h.iter = std::stol(line.substr(0, c1));
    h.rrn = parse_double(line.substr(c1 + 1, c2 - c1 - 1));
    h.elapsed_seconds = parse_double(line.substr(c2 + 1));
    history.push_back(h);
  }
  return history;
}

inline nlohmann::json report_to_json(const ConvergenceReport& report) {
  nlohmann::json j;
  j["method"] = method_name(report.method);
  j["theta"] = report.theta;
  j["alpha"] = report.alpha;
  j["beta"] = report.beta;
  j["seed"] = report.rng.seed;
  j["stream"] = report.rng.stream;
  j["iters"] = report.final_iter;
  j["converged"] = report.converged;
  j["final_rrn"] = report.final_rrn_recomputed;
  j["elapsed_seconds"] = report.elapsed_seconds;
  j["max_rel_residual_drift"] = report.max_rel_drift;
  if (report.error_to_oracle) j["error_to_oracle"] = *report.error_to_oracle;
  return j;
}

inline void save_report_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump(2) << '\n';
  if (!out.good()) throw std::runtime_error("write failed: " + path);
}

// Long-form dump of the sampled surface: one row per grid node.
inline void save_surface_csv(const std::string& path, const SurfaceGrid& grid) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "i,j,x,y,z\n";
  for (Index i = 0; i < grid.rows(); ++i)
    for (Index j = 0; j < grid.cols(); ++j)
      out << i << ',' << j << ',' << format_double(grid.q[0](i, j)) << ','
          << format_double(grid.q[1](i, j)) << ',' << format_double(grid.q[2](i, j)) << '\n';
  if (!out.good()) throw std::runtime_error("write failed: " + path);
}

// Quad mesh of the fitted surface, evaluated on a uniform grid in the spline
// parameter square. Wavefront OBJ, 1-based vertex indices.
inline void save_fit_mesh_obj(const std::string& path, const FitResult& fit, Index rows,
                              Index cols) {
  if (rows < 2 || cols < 2) throw std::invalid_argument("mesh needs at least 2 x 2 vertices");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (Index i = 0; i < rows; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(rows - 1);
    for (Index j = 0; j < cols; ++j) {
      const double v = static_cast<double>(j) / static_cast<double>(cols - 1);
      const std::array<double, 3> pt = eval_surface(fit, u, v);
      out << "v " << format_double(pt[0]) << ' ' << format_double(pt[1]) << ' '
          << format_double(pt[2]) << '\n';
    }
  }
  for (Index i = 0; i + 1 < rows; ++i)
    for (Index j = 0; j + 1 < cols; ++j) {
      const Index base = i * cols + j + 1;
      out << "f " << base << ' ' << base + 1 << ' ' << base + cols + 1 << ' ' << base + cols
          << '\n';
    }
  if (!out.good()) throw std::runtime_error("write failed: " + path);
}

}  // namespace rgrk
