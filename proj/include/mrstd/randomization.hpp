#ifndef MRSTD_RANDOMIZATION_HPP
#define MRSTD_RANDOMIZATION_HPP

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "mrstd/core.hpp"

namespace mrstd {

/// Constant assignment probability for every cluster.
struct SimpleDesign {
  double probability = 0.5;
};

/// Per-stratum probabilities keyed by the clusters' stratum labels.
struct StratifiedDesign {
  std::map<std::string, double> probabilities;
};

/// One of each pair is treated, so every cluster has probability 1/2.
struct PairMatchedDesign {};

/// Constrained randomization space: R schemes (rows) over m clusters
/// (columns, in data order); entry 1 means treated under that scheme.
struct ConstrainedDesign {
  std::vector<std::vector<std::uint8_t>> schemes;

  std::size_t num_schemes() const { return schemes.size(); }
  std::size_t num_clusters() const { return schemes.empty() ? 0 : schemes.front().size(); }
};

using RandomizationDesign =
    std::variant<SimpleDesign, StratifiedDesign, PairMatchedDesign, ConstrainedDesign>;

/// Throws ValidationError when the design itself is malformed.
inline void validate_design(const RandomizationDesign& design) {
  auto in_open_unit = [](double p) { return p > 0.0 && p < 1.0; };
  if (const auto* s = std::get_if<SimpleDesign>(&design)) {
    if (!in_open_unit(s->probability))
      throw ValidationError("simple design probability must lie strictly in (0,1)");
  } else if (const auto* st = std::get_if<StratifiedDesign>(&design)) {
    if (st->probabilities.empty()) throw ValidationError("stratified design has no strata");
    for (const auto& [label, p] : st->probabilities)
      if (!in_open_unit(p))
        throw ValidationError("stratum '" + label + "' probability must lie strictly in (0,1)");
  } else if (const auto* c = std::get_if<ConstrainedDesign>(&design)) {
    if (c->schemes.empty()) throw ValidationError("constrained design has no schemes");
    const std::size_t m = c->num_clusters();
    std::set<std::vector<std::uint8_t>> distinct;
    for (std::size_t r = 0; r < c->schemes.size(); ++r) {
      const auto& row = c->schemes[r];
      if (row.size() != m || m == 0)
        throw ValidationError("scheme " + std::to_string(r + 1) + " has the wrong length");
      for (auto t : row)
        if (t > 1) throw ValidationError("scheme " + std::to_string(r + 1) + " is not binary");
      if (!distinct.insert(row).second)
        throw ValidationError("scheme " + std::to_string(r + 1) + " duplicates an earlier scheme");
    }
  }
}

namespace detail {

// R * pi_i as exact integers.
inline std::vector<std::uint64_t> scheme_column_counts(const ConstrainedDesign& design) {
  std::vector<std::uint64_t> counts(design.num_clusters(), 0);
  for (const auto& row : design.schemes)
    for (std::size_t i = 0; i < row.size(); ++i) counts[i] += row[i];
  return counts;
}

}  // namespace detail

/// pi(X_i, H_i, N_i) for every cluster, in data order.
inline Eigen::VectorXd assignment_probabilities(const RandomizationDesign& design,
                                                const TrialData& data) {
  validate_design(design);
  const auto m = static_cast<Eigen::Index>(data.num_clusters());
  Eigen::VectorXd pi(m);
  if (const auto* s = std::get_if<SimpleDesign>(&design)) {
    pi.setConstant(s->probability);
  } else if (const auto* st = std::get_if<StratifiedDesign>(&design)) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& c = data.clusters[static_cast<std::size_t>(i)];
      if (!c.stratum) throw ValidationError("cluster '" + c.id + "' has no stratum label");
      const auto it = st->probabilities.find(*c.stratum);
      if (it == st->probabilities.end())
        throw ValidationError("unknown stratum '" + *c.stratum + "' for cluster '" + c.id + "'");
      pi[i] = it->second;
    }
  } else if (std::holds_alternative<PairMatchedDesign>(design)) {
    pi.setConstant(0.5);
  } else {
    const auto& c = std::get<ConstrainedDesign>(design);
    if (static_cast<Eigen::Index>(c.num_clusters()) != m)
      throw ValidationError("scheme matrix has " + std::to_string(c.num_clusters()) +
                            " columns but the data have " + std::to_string(m) + " clusters");
    const auto counts = detail::scheme_column_counts(c);
    const double r = static_cast<double>(c.num_schemes());
    for (Eigen::Index i = 0; i < m; ++i)
      pi[i] = static_cast<double>(counts[static_cast<std::size_t>(i)]) / r;
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!(pi[i] > 0.0 && pi[i] < 1.0))
      throw ValidationError("positivity violation: cluster '" +
                            data.clusters[static_cast<std::size_t>(i)].id +
                            "' is deterministic under the design");
  }
  return pi;
}

/// True iff every column mean of the scheme matrix is exactly 1/2.
inline bool balanced_constrained_check(const RandomizationDesign& design) {
  const auto* c = std::get_if<ConstrainedDesign>(&design);
  if (!c) throw ValidationError("balance check requires a constrained design");
  validate_design(design);
  const auto counts = detail::scheme_column_counts(*c);
  for (auto k : counts)
    if (2 * k != c->num_schemes()) return false;
  return true;
}

}  // namespace mrstd

#endif  // MRSTD_RANDOMIZATION_HPP
