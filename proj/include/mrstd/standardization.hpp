#ifndef MRSTD_STANDARDIZATION_HPP
#define MRSTD_STANDARDIZATION_HPP

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mrstd/core.hpp"
#include "mrstd/models/design.hpp"
#include "mrstd/randomization.hpp"
#include "mrstd/working_models.hpp"

namespace mrstd {

/// mu_omega(1), mu_omega(0) and the per-cluster terms they average.
/// contribution_a[i] = m_i(a) + I(A_i = a)(Ybar_i - m_i(a)) / P(A_i = a),
/// weight[i] = omega_i / max omega, and mu_a = sum weight*contribution_a / sum weight.
struct StandardizedMeans {
  double mu1 = 0.0;
  double mu0 = 0.0;
  Eigen::VectorXd contribution1;
  Eigen::VectorXd contribution0;
  Eigen::VectorXd weight;
};

/// Predicted cluster means m_i(1), m_i(0), indexed like the active set.
struct ArmPredictions {
  Eigen::VectorXd m1;
  Eigen::VectorXd m0;
};

/// A dataset with everything the estimators reuse across refits: the
/// working-model design blocks, cluster means and assignment probabilities.
struct PreparedTrial {
  const TrialData* data = nullptr;
  ModelDesign design;
  Eigen::VectorXd pi;
  Eigen::VectorXd ybar;

  std::size_t num_clusters() const { return data->num_clusters(); }

  static PreparedTrial make(const TrialData& data, const RandomizationDesign& rand,
                            const ModelSpec& spec) {
    require_valid(data);
    PreparedTrial t;
    t.data = &data;
    t.pi = assignment_probabilities(rand, data);
    t.ybar.resize(static_cast<Eigen::Index>(data.num_clusters()));
    for (std::size_t i = 0; i < data.num_clusters(); ++i)
      t.ybar[static_cast<Eigen::Index>(i)] = summarize(data.clusters[i]).ybar;
    t.design = ModelDesign::build(spec, data);
    return t;
  }
};

namespace detail {

inline StandardizedMeans combine(std::span<const std::size_t> active, const TrialData& data,
                                 const Eigen::VectorXd& ybar, const Eigen::VectorXd& omega,
                                 const Eigen::VectorXd& pi, const ArmPredictions& pred) {
  const auto n = static_cast<Eigen::Index>(active.size());
  StandardizedMeans out;
  out.contribution1.resize(n);
  out.contribution0.resize(n);
  out.weight.resize(n);
  double max_w = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double w = omega[static_cast<Eigen::Index>(active[static_cast<std::size_t>(k)])];
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("weights must be finite and non-negative");
    max_w = std::max(max_w, w);
  }
  if (!(max_w > 0.0)) throw ValidationError("empty weighted population: weights sum to zero");
  double total = 0.0, s1 = 0.0, s0 = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto i = static_cast<Eigen::Index>(active[static_cast<std::size_t>(k)]);
    const auto& c = data.clusters[static_cast<std::size_t>(i)];
    const double p = pi[i];
    if (!(p > 0.0 && p < 1.0))
      throw ValidationError("assignment probability of cluster '" + c.id + "' is not in (0,1)");
    double c1 = pred.m1[k], c0 = pred.m0[k];
    if (c.treatment == 1) {
      c1 += (ybar[i] - pred.m1[k]) / p;
    } else {
      c0 += (ybar[i] - pred.m0[k]) / (1.0 - p);
    }
    if (!std::isfinite(c1) || !std::isfinite(c0))
      throw EstimationError("non-finite standardization contribution for cluster '" + c.id + "'");
    const double w = omega[i] / max_w;
    out.contribution1[k] = c1;
    out.contribution0[k] = c0;
    out.weight[k] = w;
    total += w;
    s1 += w * c1;
    s0 += w * c0;
  }
  out.mu1 = s1 / total;
  out.mu0 = s0 / total;
  return out;
}

}  // namespace detail

inline ArmPredictions predict_arms(const FittedWorkingModel& model, const ModelDesign& design,
                                   std::span<const std::size_t> active) {
  const auto n = static_cast<Eigen::Index>(active.size());
  ArmPredictions p{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
  if (model.spec.family == ModelFamily::Null) return p;
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& b = design.blocks[active[static_cast<std::size_t>(k)]];
    p.m1[k] = predict_cluster_mean(model, b, 1);
    p.m0[k] = predict_cluster_mean(model, b, 0);
  }
  return p;
}

inline StandardizedMeans standardized_means(const PreparedTrial& trial,
                                            std::span<const std::size_t> active,
                                            const Eigen::VectorXd& omega,
                                            const ArmPredictions& pred) {
  return detail::combine(active, *trial.data, trial.ybar, omega, trial.pi, pred);
}

/// Model-robust standardized means for weights omega and probabilities pi,
/// all aligned with data.clusters.
inline StandardizedMeans standardized_means(const TrialData& data, const Weights& w,
                                            const Eigen::VectorXd& pi,
                                            const FittedWorkingModel& model) {
  const auto m = data.num_clusters();
  if (static_cast<std::size_t>(w.values.size()) != m || static_cast<std::size_t>(pi.size()) != m)
    throw ValidationError("weights and probabilities must have one entry per cluster");
  Eigen::VectorXd ybar(static_cast<Eigen::Index>(m));
  ArmPredictions pred{Eigen::VectorXd::Zero(ybar.size()), Eigen::VectorXd::Zero(ybar.size())};
  for (std::size_t i = 0; i < m; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    ybar[k] = summarize(data.clusters[i]).ybar;
    if (model.spec.family != ModelFamily::Null) {
      const auto block = make_block(model.spec, data.clusters[i]);
      pred.m1[k] = predict_cluster_mean(model, block, 1);
      pred.m0[k] = predict_cluster_mean(model, block, 0);
    }
  }
  const auto active = all_clusters(m);
  return detail::combine(active, data, ybar, w.values, pi, pred);
}

inline ContrastValue contrast(const StandardizedMeans& means, const EstimandSpec& spec) {
  return contrast(spec.contrast, means.mu1, means.mu0);
}

}  // namespace mrstd

#endif  // MRSTD_STANDARDIZATION_HPP
