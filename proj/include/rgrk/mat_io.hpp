#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>

#include "rgrk/mat.hpp"

namespace rgrk {

// Shortest representation that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  // std::from_chars<double> is available but strtod keeps us tolerant of
  // leading whitespace in hand-edited files.
  std::string tmp(s);
  char* end = nullptr;
  double v = std::strtod(tmp.c_str(), &end);
  if (end == tmp.c_str())
    throw std::invalid_argument("parse_double: not a number: '" + tmp + "'");
  return v;
}

// Plain-text matrix format: '#'-prefixed header lines carrying the shape,
// then one comma-separated line per row.
//
//   # rows 3
//   # cols 2
//   1,2.5
//   ...
inline void save_matrix_csv(const Mat& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_matrix_csv: cannot open " + path.string());
  out << "# rows " << m.rows() << "\n# cols " << m.cols() << "\n";
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_matrix_csv: write failed for " + path.string());
}

inline Mat load_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_matrix_csv: cannot open " + path.string());
  Index rows = -1, cols = -1;
  std::string line;
  std::vector<double> data;
  Index seen_rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string key;
      long long value;
      if (hs >> key >> value) {
        if (key == "rows") rows = value;
        else if (key == "cols") cols = value;
      }
      continue;
    }
    if (rows < 1 || cols < 1)
      throw std::runtime_error("load_matrix_csv: " + path.string() +
                               ": data before '# rows'/'# cols' headers");
    std::size_t start = 0;
    Index seen_cols = 0;
    while (true) {
      std::size_t comma = line.find(',', start);
      std::string_view field(line.data() + start,
                             (comma == std::string::npos ? line.size() : comma) - start);
      data.push_back(parse_double(field));
      ++seen_cols;
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (seen_cols != cols)
      throw std::runtime_error("load_matrix_csv: " + path.string() + ": row " +
                               std::to_string(seen_rows) + " has " + std::to_string(seen_cols) +
                               " fields, expected " + std::to_string(cols));
    ++seen_rows;
  }
  if (rows < 1 || cols < 1)
    throw std::runtime_error("load_matrix_csv: " + path.string() + ": missing shape headers");
  if (seen_rows != rows)
    throw std::runtime_error("load_matrix_csv: " + path.string() + ": expected " +
                             std::to_string(rows) + " rows, found " + std::to_string(seen_rows));
  return Mat(rows, cols, std::move(data));
}

}  // namespace rgrk
