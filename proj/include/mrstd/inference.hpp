#ifndef MRSTD_INFERENCE_HPP
#define MRSTD_INFERENCE_HPP

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mrstd/core.hpp"
#include "mrstd/numeric.hpp"
#include "mrstd/randomization.hpp"
#include "mrstd/standardization.hpp"
#include "mrstd/working_models.hpp"

namespace mrstd {

enum class RefitFailurePolicy { Error, SubstituteNull };

struct JackknifeOptions {
  RefitFailurePolicy on_failure = RefitFailurePolicy::Error;
  unsigned threads = 1;
};

struct JackknifeResult {
  Eigen::MatrixXd loo_estimates;  // m x 2: (mu^{-g}(1), mu^{-g}(0))
  Eigen::Matrix2d sigma_hat = Eigen::Matrix2d::Zero();
  Eigen::VectorXd contrast_loo;
  double se_contrast = 0.0;
  int df = 0;
  std::vector<std::string> refit_failures;
};

/// Leave-one-cluster-out refits shared by several estimands.
struct JackknifeBundle {
  std::vector<JackknifeResult> estimands;
  Eigen::VectorXd loo_coefficient;  // treatment coefficient of each refit (NaN if none)
  std::vector<std::string> refit_failures;
};

namespace detail {

inline double jackknife_spread(const Eigen::VectorXd& v) {
  const double m = static_cast<double>(v.size());
  const double mean = v.mean();
  return (m - 1.0) / m * (v.array() - mean).square().sum();
}

}  // namespace detail

/// sqrt((m-1)/m sum_g (theta^{-g} - mean)^2) over leave-one-out values.
inline double jackknife_se(const Eigen::VectorXd& loo) {
  return std::sqrt(detail::jackknife_spread(loo));
}

/// Runs the m deletions once and evaluates every estimand on each refit.
/// `full_fit`, when given, warm-starts iterative refits.
inline JackknifeBundle jackknife(const PreparedTrial& trial, std::span<const EstimandSpec> estimands,
                                 const JackknifeOptions& opts = {},
                                 const FittedWorkingModel* full_fit = nullptr) {
  const std::size_t m = trial.num_clusters();
  if (m < 3) throw ValidationError("jackknife requires at least 3 clusters");
  const auto& data = *trial.data;
  std::vector<Eigen::VectorXd> omegas;
  for (const auto& e : estimands) omegas.push_back(weights(data, e).values);

  struct Slot {
    std::vector<StandardizedMeans> means;
    double coefficient = std::numeric_limits<double>::quiet_NaN();
    bool failed = false;
    std::string reason;
  };
  std::vector<Slot> slots(m);
  FitOptions fit_opts;
  fit_opts.coefficient_covariance = false;
  fit_opts.warm_start = full_fit;

  numeric::parallel_for(m, opts.threads, [&](std::size_t g) {
    const auto active = all_but(m, g);
    auto& slot = slots[g];
    ArmPredictions pred;
    bool treated = false, control = false;
    for (auto i : active) (data.clusters[i].treatment == 1 ? treated : control) = true;
    try {
      if ((!treated || !control) && trial.design.spec.family != ModelFamily::Null)
        throw EstimationError("deletion leaves a single arm");
      const auto model = fit(trial.design, active, fit_opts);
      slot.coefficient = model.treatment_coefficient();
      pred = predict_arms(model, trial.design, active);
    } catch (const Error& e) {
      if (opts.on_failure == RefitFailurePolicy::Error)
        throw EstimationError("jackknife refit without cluster '" + data.clusters[g].id +
                              "' failed: " + e.what());
      slot.failed = true;
      slot.reason = e.what();
      const auto n = static_cast<Eigen::Index>(active.size());
      pred = {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
    }
    for (const auto& omega : omegas) slot.means.push_back(standardized_means(trial, active, omega, pred));
  });

  JackknifeBundle out;
  out.loo_coefficient.resize(static_cast<Eigen::Index>(m));
  for (std::size_t g = 0; g < m; ++g) {
    out.loo_coefficient[static_cast<Eigen::Index>(g)] = slots[g].coefficient;
    if (slots[g].failed) out.refit_failures.push_back(data.clusters[g].id);
  }
  for (std::size_t e = 0; e < estimands.size(); ++e) {
    JackknifeResult r;
    r.df = static_cast<int>(m) - 1;
    r.refit_failures = out.refit_failures;
    r.loo_estimates.resize(static_cast<Eigen::Index>(m), 2);
    r.contrast_loo.resize(static_cast<Eigen::Index>(m));
    for (std::size_t g = 0; g < m; ++g) {
      const auto k = static_cast<Eigen::Index>(g);
      const auto& mu = slots[g].means[e];
      r.loo_estimates(k, 0) = mu.mu1;
      r.loo_estimates(k, 1) = mu.mu0;
      r.contrast_loo[k] = contrast(estimands[e].contrast, mu.mu1, mu.mu0).estimate;
    }
    const Eigen::MatrixXd centered = r.loo_estimates.rowwise() - r.loo_estimates.colwise().mean();
    const double md = static_cast<double>(m);
    r.sigma_hat = (md - 1.0) / md * (centered.transpose() * centered);
    r.se_contrast = std::sqrt(detail::jackknife_spread(r.contrast_loo));
    out.estimands.push_back(std::move(r));
  }
  return out;
}

inline JackknifeResult jackknife(const TrialData& data, const RandomizationDesign& design,
                                 const ModelSpec& model, const EstimandSpec& estimand,
                                 const JackknifeOptions& opts = {}) {
  const auto trial = PreparedTrial::make(data, design, model);
  const EstimandSpec one[] = {estimand};
  return std::move(jackknife(trial, one, opts).estimands.front());
}

/// estimate -/+ t_{1-(1-level)/2, m-1} se.
inline std::pair<double, double> t_interval(double estimate, double se, std::size_t m,
                                            double level = 0.95) {
  if (!(se >= 0.0)) throw ValidationError("standard error must be non-negative");
  if (m < 2) throw ValidationError("t interval requires at least 2 clusters");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("confidence level must lie in (0,1)");
  const double half =
      numeric::t_quantile(1.0 - (1.0 - level) / 2.0, static_cast<double>(m - 1)) * se;
  return {estimate - half, estimate + half};
}

/// sqrt(grad' Sigma grad) for the contrast's analytic gradient at (mu1, mu0).
inline double delta_method_se(const Eigen::Matrix2d& sigma_hat, double mu1, double mu0,
                              Contrast f) {
  contrast(f, mu1, mu0);  // domain check
  Eigen::Vector2d grad;
  switch (f) {
    case Contrast::Difference: grad << 1.0, -1.0; break;
    case Contrast::Ratio: grad << 1.0 / mu0, -mu1 / (mu0 * mu0); break;
    case Contrast::LogRatio: grad << 1.0 / mu1, -1.0 / mu0; break;
    case Contrast::LogOddsRatio:
      grad << 1.0 / (mu1 * (1.0 - mu1)), -1.0 / (mu0 * (1.0 - mu0));
      break;
  }
  return std::sqrt(std::max(grad.dot(sigma_hat * grad), 0.0));
}

}  // namespace mrstd

#endif  // MRSTD_INFERENCE_HPP
