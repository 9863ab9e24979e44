#ifndef MRSTD_TOOLS_REPORT_HPP
#define MRSTD_TOOLS_REPORT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

#include "mrstd/numeric.hpp"

namespace mrstd::cli {

enum class Format { Table, Csv, Record };

inline Format parse_format(std::string_view s) {
  if (s == "table") return Format::Table;
  if (s == "csv") return Format::Csv;
  if (s == "record") return Format::Record;
  throw ValidationError("unknown output format '" + std::string(s) + "'");
}

using Cell = std::variant<std::monostate, std::string, double, std::int64_t, bool>;

struct Report {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row) {
    if (row.size() != columns.size()) throw Error("report row width mismatch");
    rows.push_back(std::move(row));
  }
};

inline std::string format_double(double v, int digits) {
  if (std::isnan(v)) return "NaN";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::string render(const Cell& c, int digits) {
  return std::visit(
      [&](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::monostate>) return "";
        else if constexpr (std::is_same_v<T, std::string>) return v;
        else if constexpr (std::is_same_v<T, double>) return format_double(v, digits);
        else if constexpr (std::is_same_v<T, bool>) return v ? "true" : "false";
        else return std::to_string(v);
      },
      c);
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

inline void write_csv(const Report& r, std::ostream& os) {
  for (std::size_t k = 0; k < r.columns.size(); ++k)
    os << (k ? "," : "") << csv_escape(r.columns[k]);
  os << '\n';
  for (const auto& row : r.rows) {
    for (std::size_t k = 0; k < row.size(); ++k) os << (k ? "," : "") << csv_escape(render(row[k], 17));
    os << '\n';
  }
}

inline void write_table(const Report& r, std::ostream& os) {
  std::vector<std::size_t> width(r.columns.size());
  std::vector<std::vector<std::string>> text;
  for (std::size_t k = 0; k < r.columns.size(); ++k) width[k] = r.columns[k].size();
  for (const auto& row : r.rows) {
    auto& t = text.emplace_back();
    for (std::size_t k = 0; k < row.size(); ++k) {
      t.push_back(render(row[k], 4));
      width[k] = std::max(width[k], t.back().size());
    }
  }
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) {
      os << (k ? "  " : "") << cells[k];
      if (k + 1 < cells.size()) os << std::string(width[k] - cells[k].size(), ' ');
    }
    os << '\n';
  };
  line(r.columns);
  for (const auto& t : text) line(t);
}

inline void write_record(const Report& r, std::ostream& os) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    nlohmann::ordered_json obj = nlohmann::ordered_json::object();
    for (std::size_t k = 0; k < row.size(); ++k) {
      std::visit(
          [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::monostate>) obj[r.columns[k]] = nullptr;
            else if constexpr (std::is_same_v<T, double>) {
              if (std::isfinite(v)) obj[r.columns[k]] = v;
              else obj[r.columns[k]] = nullptr;
            } else obj[r.columns[k]] = v;
          },
          row[k]);
    }
    out.push_back(std::move(obj));
  }
  os << out.dump(2) << '\n';
}

inline void write(const Report& r, Format f, std::ostream& os) {
  switch (f) {
    case Format::Table: write_table(r, os); break;
    case Format::Csv: write_csv(r, os); break;
    case Format::Record: write_record(r, os); break;
  }
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace mrstd::cli

#endif  // MRSTD_TOOLS_REPORT_HPP
