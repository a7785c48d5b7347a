#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stsa/engine.hpp"
#include "stsa/errors.hpp"

namespace stsa {

// All floats serialize with 17 significant digits so files round-trip exactly.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_cell(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();  // missing metrics stay empty, never zero
}

// Fixed per-run trace schema:
//   seed,k,err_x,resid_1..resid_N,grad_sq,F_val,alpha_k,beta_k_1..beta_k_N
inline std::string trace_header(int n_sequences) {
  std::ostringstream out;
  out << "seed,k,err_x";
  for (int n = 1; n <= n_sequences; ++n) out << ",resid_" << n;
  out << ",grad_sq,F_val,alpha_k";
  for (int n = 1; n <= n_sequences; ++n) out << ",beta_k_" << n;
  return out.str();
}

inline void write_traces_csv(std::ostream& out, const std::vector<RunTrace>& traces) {
  if (traces.empty()) throw config_error("write_traces_csv: no traces");
  out << trace_header(traces.front().n_sequences) << "\n";
  for (const auto& t : traces)
    for (const auto& row : t.rows) {
      out << t.seed << "," << row.k << "," << format_cell(row.err_x);
      for (const auto& r : row.resid) out << "," << format_cell(r);
      out << "," << format_cell(row.grad_sq) << "," << format_cell(row.f_val) << ","
          << format_double(row.alpha);
      for (double b : row.beta) out << "," << format_double(b);
      out << "\n";
    }
}

// Seed-averaged companion schema: every metric column carries a mean and a
// standard error.
inline std::string aggregate_header(int n_sequences) {
  std::ostringstream out;
  out << "k,err_x_mean,err_x_se";
  for (int n = 1; n <= n_sequences; ++n) out << ",resid_" << n << "_mean,resid_" << n << "_se";
  out << ",grad_sq_mean,grad_sq_se,F_val_mean,F_val_se,running_mean_mean,running_mean_se,alpha_k";
  for (int n = 1; n <= n_sequences; ++n) out << ",beta_k_" << n;
  return out.str();
}

inline void write_aggregate_csv(std::ostream& out, const AveragedTrace& avg) {
  out << aggregate_header(avg.n_sequences) << "\n";
  auto cell = [](const std::optional<MeanSe>& v, bool se) {
    return v ? format_double(se ? v->se : v->mean) : std::string();
  };
  for (const auto& row : avg.rows) {
    out << row.k << "," << cell(row.err_x, false) << "," << cell(row.err_x, true);
    for (const auto& r : row.resid) out << "," << cell(r, false) << "," << cell(r, true);
    out << "," << cell(row.grad_sq, false) << "," << cell(row.grad_sq, true) << ","
        << cell(row.f_val, false) << "," << cell(row.f_val, true) << ","
        << cell(row.running_mean, false) << "," << cell(row.running_mean, true) << ","
        << format_double(row.alpha);
    for (double b : row.beta) out << "," << format_double(b);
    out << "\n";
  }
}

// Minimal CSV reader for the rate subcommand: header + rows of optionally
// empty numeric cells.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::optional<double>>> rows;

  int column_index(const std::string& name) const {
    for (size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return static_cast<int>(i);
    return -1;
  }
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open CSV file: " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw config_error("empty CSV file: " + path);
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) table.columns.push_back(cell);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::optional<double>> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (cell.empty()) {
        row.emplace_back(std::nullopt);
      } else {
        try {
          size_t pos = 0;
          const double v = std::stod(cell, &pos);
          row.emplace_back(pos == cell.size() ? std::optional<double>(v) : std::nullopt);
        } catch (...) {
          row.emplace_back(std::nullopt);  // non-numeric cells read as missing
        }
      }
    }
    while (row.size() < table.columns.size()) row.emplace_back(std::nullopt);
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace stsa
