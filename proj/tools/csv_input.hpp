#ifndef MRSTD_TOOLS_CSV_INPUT_HPP
#define MRSTD_TOOLS_CSV_INPUT_HPP

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mrstd/core.hpp"
#include "mrstd/randomization.hpp"

namespace mrstd::cli {

struct CsvTable {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;  // 1-based physical line of each row

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] == name) return k;
    return std::nullopt;
  }
};

namespace detail {

inline std::vector<std::string> split_record(std::string_view line, const std::string& where) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char ch = line[k];
    if (quoted) {
      if (ch == '"') {
        if (k + 1 < line.size() && line[k + 1] == '"') {
          field += '"';
          ++k;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
    } else if (ch == '"' && field.empty()) {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field += ch;
    }
  }
  if (quoted) throw ValidationError(where + ": unterminated quoted field");
  out.push_back(std::move(field));
  return out;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

/// Comma-separated text with a mandatory header row. Quoted fields, CRLF
/// line ends and a UTF-8 byte-order mark are accepted; blank lines skipped.
inline CsvTable read_csv(std::istream& in, std::string source, bool header = true) {
  CsvTable t;
  t.source = std::move(source);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const std::string where = t.source + ":" + std::to_string(lineno);
    auto fields = detail::split_record(line, where);
    for (auto& f : fields) f = detail::trim(f);
    if (header && t.header.empty()) {
      t.header = std::move(fields);
      for (std::size_t a = 0; a < t.header.size(); ++a)
        for (std::size_t b = a + 1; b < t.header.size(); ++b)
          if (t.header[a] == t.header[b])
            throw ValidationError(where + ": duplicate column '" + t.header[a] + "'");
      continue;
    }
    const std::size_t width = header ? t.header.size() : (t.rows.empty() ? fields.size() : t.rows.front().size());
    if (fields.size() != width)
      throw ValidationError(where + ": expected " + std::to_string(width) + " fields, found " +
                            std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.lines.push_back(lineno);
  }
  if (header && t.header.empty()) throw ValidationError(t.source + ": missing header row");
  return t;
}

inline CsvTable read_csv_file(const std::string& path, bool header = true) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return read_csv(in, path, header);
}

inline double parse_number(const std::string& text, const std::string& where) {
  double v = 0.0;
  const char* b = text.data();
  const char* e = b + text.size();
  if (!text.empty() && *b == '+') ++b;
  const auto [ptr, ec] = std::from_chars(b, e, v);
  if (text.empty() || text == "NA" || text == "NaN" || text == "nan")
    throw ValidationError(where + ": missing value");
  if (ec != std::errc() || ptr != e || !std::isfinite(v))
    throw ValidationError(where + ": '" + text + "' is not a finite number");
  return v;
}

/// Which header names carry which role in the long-format input.
struct ColumnRoles {
  std::string cluster = "cluster";
  std::string treatment = "treatment";
  std::string outcome = "y";
  std::vector<std::string> covariates;
  std::vector<std::string> cluster_covariates;
  std::string stratum;  // empty: none
};

/// One row per individual. Clusters appear in order of first occurrence;
/// treatment, stratum and cluster covariates must be constant within a
/// cluster.
inline TrialData load_trial(const CsvTable& t, const ColumnRoles& roles) {
  auto require = [&](const std::string& name, const char* role) {
    const auto k = t.column(name);
    if (!k)
      throw ValidationError(t.source + ": " + role + " column '" + name + "' not found in header");
    return *k;
  };
  const auto c_id = require(roles.cluster, "cluster");
  const auto c_a = require(roles.treatment, "treatment");
  const auto c_y = require(roles.outcome, "outcome");
  std::vector<std::size_t> c_x, c_h;
  for (const auto& n : roles.covariates) c_x.push_back(require(n, "covariate"));
  for (const auto& n : roles.cluster_covariates) c_h.push_back(require(n, "cluster covariate"));
  std::optional<std::size_t> c_s;
  if (!roles.stratum.empty()) c_s = require(roles.stratum, "stratum");

  struct Pending {
    ClusterRecord rec;
    std::vector<double> x;
    std::size_t first_line = 0;
  };
  std::vector<Pending> clusters;
  std::map<std::string, std::size_t> index;
  const auto p = c_x.size();
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = t.source + ":" + std::to_string(t.lines[r]);
    const std::string& id = row[c_id];
    if (id.empty()) throw ValidationError(where + ": empty cluster id");
    const double a = parse_number(row[c_a], where + " column '" + roles.treatment + "'");
    if (a != 0.0 && a != 1.0)
      throw ValidationError(where + ": treatment must be 0 or 1, found '" + row[c_a] + "'");
    Eigen::VectorXd h(static_cast<Eigen::Index>(c_h.size()));
    for (std::size_t k = 0; k < c_h.size(); ++k)
      h[static_cast<Eigen::Index>(k)] =
          parse_number(row[c_h[k]], where + " column '" + roles.cluster_covariates[k] + "'");

    auto [it, inserted] = index.try_emplace(id, clusters.size());
    if (inserted) {
      Pending pc;
      pc.rec.id = id;
      pc.rec.treatment = static_cast<int>(a);
      pc.rec.cluster_covariates = h;
      if (c_s) pc.rec.stratum = row[*c_s];
      pc.first_line = t.lines[r];
      clusters.push_back(std::move(pc));
    }
    auto& pc = clusters[it->second];
    const std::string first = " (first seen at line " + std::to_string(pc.first_line) + ")";
    if (pc.rec.treatment != static_cast<int>(a))
      throw ValidationError(where + ": treatment varies within cluster '" + id + "'" + first);
    if (pc.rec.cluster_covariates != h)
      throw ValidationError(where + ": cluster covariate varies within cluster '" + id + "'" + first);
    if (c_s && pc.rec.stratum != row[*c_s])
      throw ValidationError(where + ": stratum varies within cluster '" + id + "'" + first);
    pc.rec.outcomes.push_back(parse_number(row[c_y], where + " column '" + roles.outcome + "'"));
    for (std::size_t k = 0; k < p; ++k)
      pc.x.push_back(parse_number(row[c_x[k]], where + " column '" + roles.covariates[k] + "'"));
  }

  TrialData data;
  for (auto& pc : clusters) {
    auto& rec = pc.rec;
    rec.size = rec.outcomes.size();
    rec.covariates = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        pc.x.data(), static_cast<Eigen::Index>(rec.size), static_cast<Eigen::Index>(p));
    data.clusters.push_back(std::move(rec));
  }
  return data;
}

/// R x m matrix of 0/1 assignments, one scheme per row, columns in the
/// clusters' data order.
inline ConstrainedDesign load_schemes(const CsvTable& t) {
  ConstrainedDesign d;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    std::vector<std::uint8_t> scheme;
    for (const auto& f : t.rows[r]) {
      const std::string where = t.source + ":" + std::to_string(t.lines[r]);
      const double v = parse_number(f, where);
      if (v != 0.0 && v != 1.0) throw ValidationError(where + ": scheme entries must be 0 or 1");
      scheme.push_back(static_cast<std::uint8_t>(v));
    }
    d.schemes.push_back(std::move(scheme));
  }
  if (d.schemes.empty()) throw ValidationError(t.source + ": empty scheme matrix");
  return d;
}

}  // namespace mrstd::cli

#endif  // MRSTD_TOOLS_CSV_INPUT_HPP
