#ifndef MRSTD_ESTIMATE_HPP
#define MRSTD_ESTIMATE_HPP

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mrstd/core.hpp"
#include "mrstd/inference.hpp"
#include "mrstd/randomization.hpp"
#include "mrstd/standardization.hpp"
#include "mrstd/working_models.hpp"

namespace mrstd {

struct EstimationResult {
  EstimandSpec estimand;
  StandardizedMeans means;
  ContrastValue estimate;
  double se = 0.0;        // direct jackknife of the contrast
  double se_delta = 0.0;  // delta method on the jackknife pair covariance
  std::pair<double, double> ci;
  double level = 0.95;
  JackknifeResult jackknife;
};

struct AnalysisResult {
  FittedWorkingModel model;
  std::optional<IccValue> icc;
  std::vector<EstimationResult> estimates;  // one per requested estimand
  Eigen::VectorXd loo_coefficient;
};

namespace detail {

template <class F>
auto run_stage(const char* stage, F&& f) -> decltype(f()) {
  const std::string prefix = std::string(stage) + ": ";
  try {
    return f();
  } catch (const ValidationError& e) {
    throw ValidationError(prefix + e.what());
  } catch (const DomainError& e) {
    throw DomainError(prefix + e.what());
  } catch (const EstimationError& e) {
    throw EstimationError(prefix + e.what());
  }
}

}  // namespace detail

/// validate -> probabilities -> fit -> standardize -> contrast -> jackknife,
/// for several estimands sharing one fit and one set of deletions.
inline AnalysisResult analyze(const TrialData& data, const RandomizationDesign& design,
                              const ModelSpec& model, const std::vector<EstimandSpec>& estimands,
                              double level = 0.95, const JackknifeOptions& opts = {}) {
  detail::run_stage("validate", [&] {
    require_valid(data);
    validate_design(design);
    return 0;
  });
  const auto trial = detail::run_stage("randomization", [&] {
    return PreparedTrial::make(data, design, model);
  });
  const auto active = all_clusters(data.num_clusters());
  AnalysisResult out;
  out.model = detail::run_stage("fit", [&] { return fit(trial.design, active); });
  if (out.model.icc || out.model.arm_icc) out.icc = icc(out.model);
  const auto pred = detail::run_stage("standardize", [&] {
    return predict_arms(out.model, trial.design, active);
  });
  const auto bundle = detail::run_stage("jackknife", [&] {
    return jackknife(trial, estimands, opts, &out.model);
  });
  out.loo_coefficient = bundle.loo_coefficient;
  for (std::size_t e = 0; e < estimands.size(); ++e) {
    EstimationResult r;
    r.estimand = estimands[e];
    r.level = level;
    r.means = detail::run_stage("standardize", [&] {
      return standardized_means(trial, active, weights(data, estimands[e]).values, pred);
    });
    r.estimate = detail::run_stage("contrast", [&] { return contrast(r.means, estimands[e]); });
    r.jackknife = bundle.estimands[e];
    r.se = r.jackknife.se_contrast;
    r.se_delta = detail::run_stage("inference", [&] {
      return delta_method_se(r.jackknife.sigma_hat, r.means.mu1, r.means.mu0, estimands[e].contrast);
    });
    r.ci = t_interval(r.estimate.estimate, r.se, data.num_clusters(), level);
    out.estimates.push_back(std::move(r));
  }
  return out;
}

inline EstimationResult estimate(const TrialData& data, const RandomizationDesign& design,
                                 const ModelSpec& model, const EstimandSpec& estimand,
                                 double level = 0.95, const JackknifeOptions& opts = {}) {
  return std::move(analyze(data, design, model, {estimand}, level, opts).estimates.front());
}

}  // namespace mrstd

#endif  // MRSTD_ESTIMATE_HPP
