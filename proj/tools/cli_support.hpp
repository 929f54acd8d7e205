#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "elastic/errors.hpp"
#include "elastic/parameters.hpp"

namespace elastic::cli {

enum ExitCode : int { ok = 0, domain_error = 2, convergence_error = 3, comparison_failed = 4 };

inline constexpr const char* kCsvVersion = "# elastic-cli csv v1";

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_number(const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw DomainError("not a number: '" + text + "'");
  }
  if (used != text.size()) throw DomainError("not a number: '" + text + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? std::string() : item.substr(b, e - b + 1));
  }
  return out;
}

/// Either "start:stop:count" (inclusive, evenly spaced) or a comma list.
inline std::vector<double> parse_grid(const std::string& text) {
  if (text.find(':') != std::string::npos) {
    const auto parts = split(text, ':');
    if (parts.size() != 3) throw DomainError("grid must be start:stop:count, got '" + text + "'");
    const double a = parse_number(parts[0]);
    const double b = parse_number(parts[1]);
    const double count = parse_number(parts[2]);
    if (!(count >= 1.0) || count != std::floor(count) || count > 1e7)
      throw DomainError("grid count must be a positive integer, got '" + parts[2] + "'");
    const auto n = static_cast<std::size_t>(count);
    if (!std::isfinite(a) || !std::isfinite(b) || (n > 1 && b < a))
      throw DomainError("grid needs finite start <= stop, got '" + text + "'");
    std::vector<double> grid(n);
    for (std::size_t i = 0; i < n; ++i) grid[i] = n == 1 ? a : a + (b - a) * static_cast<double>(i) / (n - 1);
    if (n > 1) grid.back() = b;
    return grid;
  }
  std::vector<double> grid;
  for (const auto& p : split(text, ',')) grid.push_back(parse_number(p));
  if (grid.empty()) throw DomainError("empty grid");
  return grid;
}

inline std::vector<Chaoticity> parse_kappa_list(const std::string& text) {
  std::vector<Chaoticity> out;
  for (const auto& p : split(text, ',')) out.push_back(Chaoticity::parse(p));
  if (out.empty()) throw DomainError("empty kappa list");
  return out;
}

using Cell = std::variant<double, std::string>;

/// Long-format result table with free-form metadata.
struct Table {
  std::string command;
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void write_csv(std::ostream& os) const {
    os << kCsvVersion << '\n';
    os << "# command=" << command << '\n';
    for (const auto& [k, v] : meta) os << "# " << k << '=' << v << '\n';
    for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i];
    os << '\n';
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) os << ',';
        if (const double* d = std::get_if<double>(&row[i]))
          os << format_number(*d);
        else
          os << std::get<std::string>(row[i]);
      }
      os << '\n';
    }
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["schema"] = "elastic-cli v1";
    nlohmann::ordered_json m = nlohmann::ordered_json::object();
    for (const auto& [k, v] : meta) m[k] = v;
    j["meta"] = m;
    j["columns"] = columns;
    nlohmann::ordered_json rs = nlohmann::ordered_json::array();
    for (const auto& row : rows) {
      nlohmann::ordered_json r = nlohmann::ordered_json::object();
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (const double* d = std::get_if<double>(&row[i]))
          r[columns[i]] = json_number(*d);
        else
          r[columns[i]] = std::get<std::string>(row[i]);
      }
      rs.push_back(std::move(r));
    }
    j["rows"] = rs;
    return j;
  }

  // JSON has no inf/nan; those are written as strings.
  static nlohmann::ordered_json json_number(double v) {
    if (std::isfinite(v)) return v;
    return format_number(v);
  }
};

/// Writes to `path`, or stdout when path is empty or "-".
template <class Writer>
void emit(const std::string& path, Writer&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream f(path);
  if (!f) throw DomainError("cannot open output file '" + path + "'");
  write(f);
  if (!f) throw DomainError("failed writing output file '" + path + "'");
}

inline void emit_table(const Table& t, const std::string& path, const std::string& format) {
  emit(path, [&](std::ostream& os) {
    if (format == "json")
      os << t.to_json().dump(2) << '\n';
    else
      t.write_csv(os);
  });
}

inline std::string one_line(std::string msg) {
  for (char& c : msg)
    if (c == '\n' || c == '\r') c = ' ';
  return msg;
}

inline int report_error(const char* code, int exit_code, const std::string& msg) {
  std::cerr << "error code=" << code << " exit=" << exit_code << " msg=" << one_line(msg) << '\n';
  return exit_code;
}

}  // namespace elastic::cli
