#ifndef MRSTD_WORKING_MODELS_HPP
#define MRSTD_WORKING_MODELS_HPP

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <variant>

#include <Eigen/Dense>

#include "mrstd/core.hpp"
#include "mrstd/models/design.hpp"
#include "mrstd/models/gee.hpp"
#include "mrstd/models/glmm.hpp"
#include "mrstd/models/linear.hpp"
#include "mrstd/models/model_spec.hpp"
#include "mrstd/numeric.hpp"

namespace mrstd {

/// Fits the design's working model on the clusters listed in `active`.
inline FittedWorkingModel fit(const ModelDesign& design, std::span<const std::size_t> active,
                              const FitOptions& opts = {}) {
  switch (design.spec.family) {
    case ModelFamily::Null: {
      FittedWorkingModel m;
      m.spec = design.spec;
      return m;
    }
    case ModelFamily::ClusterLm: return models::fit_cluster_lm(design, active, opts);
    case ModelFamily::ClusterGlmLogit: return models::fit_cluster_glm_logit(design, active, opts);
    case ModelFamily::Lmm: return models::fit_lmm(design, active, opts);
    case ModelFamily::GlmmLogit:
    case ModelFamily::GlmmLog: return models::fit_glmm(design, active, opts);
    case ModelFamily::Gee: return models::fit_gee(design, active, opts);
  }
  throw ValidationError("unknown model family");
}

inline FittedWorkingModel fit(const ModelSpec& spec, const TrialData& data,
                              const FitOptions& opts = {}) {
  require_valid(data);
  const auto design = ModelDesign::build(spec, data);
  const auto active = all_clusters(data.num_clusters());
  return fit(design, active, opts);
}

namespace detail {

inline double glmm_logit_marginal_mean(double eta, double sigma2, Marginalization how, int nodes) {
  if (sigma2 <= 0.0) return numeric::expit(eta);
  if (how == Marginalization::Hedeker) {
    const double latent = std::numbers::pi * std::numbers::pi / 3.0;
    return numeric::expit(eta / std::sqrt((sigma2 + latent) / latent));
  }
  return numeric::normal_expectation([](double e) { return numeric::expit(e); }, eta,
                                     std::sqrt(sigma2), nodes);
}

}  // namespace detail

/// E(Y_i-bar | A_i = arm, X_i, H_i, N_i) under the fitted working model:
/// the cluster average of the individual marginal means.
inline double predict_cluster_mean(const FittedWorkingModel& m, const ClusterBlock& b, int arm) {
  const auto& spec = m.spec;
  if (spec.family == ModelFamily::Null) return 0.0;
  const auto& beta = m.coefficients;
  const bool linear = spec.family == ModelFamily::ClusterLm || spec.family == ModelFamily::Lmm ||
                      (spec.family == ModelFamily::Gee && spec.link == Link::Identity);
  if (linear) return b.mean_row(arm).dot(beta);
  if (spec.family == ModelFamily::ClusterGlmLogit) return numeric::expit(b.mean_row(arm).dot(beta));

  const Eigen::VectorXd eta = b.x * beta;
  const double shift = (arm - b.a) * beta[1];
  const double sigma2 = m.variance.random_intercept;
  double acc = 0.0;
  for (Eigen::Index j = 0; j < eta.size(); ++j) {
    const double e = eta[j] + shift;
    switch (spec.family) {
      case ModelFamily::GlmmLogit:
        acc += detail::glmm_logit_marginal_mean(e, sigma2, spec.marginalization,
                                                spec.prediction_nodes);
        break;
      case ModelFamily::GlmmLog: acc += std::exp(numeric::clamp_eta(e + 0.5 * sigma2)); break;
      default: acc += models::detail::inverse_link(spec.link, e); break;
    }
  }
  return acc / static_cast<double>(eta.size());
}

inline double predict_cluster_mean(const FittedWorkingModel& m, const ClusterRecord& c, int arm) {
  if (m.spec.family == ModelFamily::Null) return 0.0;
  return predict_cluster_mean(m, make_block(m.spec, c), arm);
}

using IccValue = std::variant<double, std::array<double, 2>>;

/// Estimated ICC: LMM variance ratio, exchangeable GEE moment estimate,
/// per-arm pair for arm-exchangeable GEE, latent-scale ratio for the
/// logistic mixed model. Throws DomainError where the family has none.
inline IccValue icc(const FittedWorkingModel& m) {
  if (m.arm_icc) return *m.arm_icc;
  if (m.icc) return *m.icc;
  throw DomainError("ICC is not defined for working model '" + std::string(to_string(m.spec.family)) +
                    (m.spec.family == ModelFamily::Gee
                         ? "' with " + std::string(to_string(m.spec.correlation)) + " correlation"
                         : "'"));
}

}  // namespace mrstd

#endif  // MRSTD_WORKING_MODELS_HPP
