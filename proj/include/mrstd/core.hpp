#ifndef MRSTD_CORE_HPP
#define MRSTD_CORE_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mrstd/numeric.hpp"

namespace mrstd {

/// One randomized cluster: its individuals' outcomes and covariates plus
/// cluster-level covariates. `size` is the declared N_i; a well-formed record
/// has exactly that many outcome and covariate rows.
struct ClusterRecord {
  std::string id;
  int treatment = 0;
  std::size_t size = 0;
  std::vector<double> outcomes;
  Eigen::MatrixXd covariates;          // size x p
  Eigen::VectorXd cluster_covariates;  // q
  std::optional<std::string> stratum;
};

/// Clusters in canonical order. The order is preserved by every operation
/// and defines the jackknife deletion order.
struct TrialData {
  std::vector<ClusterRecord> clusters;

  std::size_t num_clusters() const { return clusters.size(); }

  Eigen::Index individual_dim() const {
    return clusters.empty() ? 0 : clusters.front().covariates.cols();
  }

  Eigen::Index cluster_dim() const {
    return clusters.empty() ? 0 : clusters.front().cluster_covariates.size();
  }

  std::size_t total_individuals() const {
    std::size_t n = 0;
    for (const auto& c : clusters) n += c.outcomes.size();
    return n;
  }
};

struct Violation {
  std::string cluster_id;
  std::string message;
};

/// Every invariant violation in `data`; empty when the data are well formed.
inline std::vector<Violation> validate(const TrialData& data) {
  std::vector<Violation> out;
  if (data.clusters.empty()) {
    out.push_back({"", "no clusters"});
    return out;
  }
  const Eigen::Index p = data.individual_dim();
  const Eigen::Index q = data.cluster_dim();
  std::size_t treated = 0, control = 0;
  std::set<std::string> seen;
  for (const auto& c : data.clusters) {
    if (!seen.insert(c.id).second) out.push_back({c.id, "duplicate cluster id"});
    if (c.treatment == 1) {
      ++treated;
    } else if (c.treatment == 0) {
      ++control;
    } else {
      out.push_back({c.id, "treatment must be 0 or 1"});
    }
    if (c.size < 1) out.push_back({c.id, "empty cluster"});
    if (c.outcomes.size() != c.size)
      out.push_back({c.id, "row count mismatch: declared size " + std::to_string(c.size) +
                               " but " + std::to_string(c.outcomes.size()) + " outcome rows"});
    if (static_cast<std::size_t>(c.covariates.rows()) != c.outcomes.size())
      out.push_back({c.id, "covariate row count mismatch"});
    if (c.covariates.cols() != p) out.push_back({c.id, "individual covariate dimension mismatch"});
    if (c.cluster_covariates.size() != q)
      out.push_back({c.id, "cluster covariate dimension mismatch"});
    bool missing = false;
    for (double y : c.outcomes) missing |= !std::isfinite(y);
    missing |= !c.covariates.allFinite() || !c.cluster_covariates.allFinite();
    if (missing) out.push_back({c.id, "missing or non-finite value"});
  }
  if (treated == 0) out.push_back({"", "no treated clusters"});
  if (control == 0) out.push_back({"", "no control clusters"});
  return out;
}

/// Throws ValidationError listing every violation.
inline void require_valid(const TrialData& data) {
  const auto violations = validate(data);
  if (violations.empty()) return;
  std::string msg = "invalid trial data:";
  for (const auto& v : violations) {
    msg += "\n  ";
    if (!v.cluster_id.empty()) msg += "cluster '" + v.cluster_id + "': ";
    msg += v.message;
  }
  throw ValidationError(msg);
}

struct ClusterSummary {
  double ybar = 0.0;
  Eigen::VectorXd xbar;
  std::size_t n = 0;
  int a = 0;
  Eigen::VectorXd h;
};

inline ClusterSummary summarize(const ClusterRecord& c) {
  if (c.outcomes.empty()) throw ValidationError("cluster '" + c.id + "' is empty");
  ClusterSummary s;
  const double n = static_cast<double>(c.outcomes.size());
  double sum = 0.0;
  for (double y : c.outcomes) sum += y;
  s.ybar = sum / n;
  s.xbar = c.covariates.colwise().sum().transpose() / n;
  s.n = c.outcomes.size();
  s.a = c.treatment;
  s.h = c.cluster_covariates;
  return s;
}

inline std::vector<ClusterSummary> summarize(const TrialData& data) {
  std::vector<ClusterSummary> out;
  out.reserve(data.clusters.size());
  for (const auto& c : data.clusters) out.push_back(summarize(c));
  return out;
}

enum class WeightScheme { Cluster, Individual, Custom, Subgroup };

enum class Contrast { Difference, Ratio, LogRatio, LogOddsRatio };

inline std::string_view to_string(WeightScheme w) {
  switch (w) {
    case WeightScheme::Cluster: return "cluster";
    case WeightScheme::Individual: return "individual";
    case WeightScheme::Custom: return "custom";
    case WeightScheme::Subgroup: return "subgroup";
  }
  return "?";
}

inline std::string_view to_string(Contrast c) {
  switch (c) {
    case Contrast::Difference: return "difference";
    case Contrast::Ratio: return "ratio";
    case Contrast::LogRatio: return "log-ratio";
    case Contrast::LogOddsRatio: return "log-odds-ratio";
  }
  return "?";
}

/// Weight scheme plus contrast function defining the target estimand.
struct EstimandSpec {
  using CustomWeight = std::function<double(std::size_t n, const Eigen::VectorXd& h)>;

  WeightScheme scheme = WeightScheme::Cluster;
  Contrast contrast = Contrast::Difference;
  CustomWeight custom;               // Custom only
  Eigen::Index subgroup_index = 0;   // Subgroup only: component of H_i

  static EstimandSpec cluster_average(Contrast c = Contrast::Difference) {
    return {WeightScheme::Cluster, c, {}, 0};
  }
  static EstimandSpec individual_average(Contrast c = Contrast::Difference) {
    return {WeightScheme::Individual, c, {}, 0};
  }
  static EstimandSpec subgroup(Eigen::Index h_index, Contrast c = Contrast::Difference) {
    return {WeightScheme::Subgroup, c, {}, h_index};
  }
  static EstimandSpec custom_weights(CustomWeight fn, Contrast c = Contrast::Difference) {
    return {WeightScheme::Custom, c, std::move(fn), 0};
  }
};

/// omega_i for one cluster.
inline double cluster_weight(const ClusterRecord& c, const EstimandSpec& spec) {
  switch (spec.scheme) {
    case WeightScheme::Cluster: return 1.0;
    case WeightScheme::Individual: return static_cast<double>(c.size);
    case WeightScheme::Subgroup: {
      if (spec.subgroup_index < 0 || spec.subgroup_index >= c.cluster_covariates.size())
        throw ValidationError("subgroup covariate index out of range");
      const double h = c.cluster_covariates[spec.subgroup_index];
      if (h != 0.0 && h != 1.0)
        throw ValidationError("subgroup covariate of cluster '" + c.id + "' is not binary");
      return h;
    }
    case WeightScheme::Custom: {
      if (!spec.custom) throw ValidationError("custom weight scheme without a weight function");
      const double w = spec.custom(c.size, c.cluster_covariates);
      if (!std::isfinite(w) || w < 0.0)
        throw ValidationError("custom weight for cluster '" + c.id + "' is negative or not finite");
      return w;
    }
  }
  return 1.0;
}

struct Weights {
  Eigen::VectorXd values;
  double total = 0.0;
};

inline Weights weights(const TrialData& data, const EstimandSpec& spec) {
  Weights w;
  w.values.resize(static_cast<Eigen::Index>(data.clusters.size()));
  for (std::size_t i = 0; i < data.clusters.size(); ++i)
    w.values[static_cast<Eigen::Index>(i)] = cluster_weight(data.clusters[i], spec);
  w.total = w.values.sum();
  if (!(w.total > 0.0)) throw ValidationError("empty weighted population: weights sum to zero");
  return w;
}

struct ContrastValue {
  double estimate = 0.0;
  Contrast scale = Contrast::Difference;
};

/// f(mu1, mu0) for the requested contrast.
inline ContrastValue contrast(Contrast f, double mu1, double mu0) {
  auto require_positive = [&](const char* name) {
    if (!(mu1 > 0.0) || !(mu0 > 0.0))
      throw DomainError(std::string(name) + " contrast requires positive means");
  };
  switch (f) {
    case Contrast::Difference: return {mu1 - mu0, f};
    case Contrast::Ratio:
      if (mu0 == 0.0) throw DomainError("ratio contrast with a zero control mean");
      return {mu1 / mu0, f};
    case Contrast::LogRatio:
      require_positive("log-ratio");
      return {std::log(mu1) - std::log(mu0), f};
    case Contrast::LogOddsRatio:
      if (!(mu1 > 0.0 && mu1 < 1.0 && mu0 > 0.0 && mu0 < 1.0))
        throw DomainError("log-odds-ratio contrast requires means in (0,1)");
      return {std::log(mu1 * (1.0 - mu0) / (mu0 * (1.0 - mu1))), f};
  }
  return {mu1 - mu0, f};
}

}  // namespace mrstd

#endif  // MRSTD_CORE_HPP
