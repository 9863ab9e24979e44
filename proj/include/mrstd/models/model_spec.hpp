#ifndef MRSTD_MODELS_MODEL_SPEC_HPP
#define MRSTD_MODELS_MODEL_SPEC_HPP

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace mrstd {

enum class ModelFamily { Null, ClusterLm, ClusterGlmLogit, Lmm, GlmmLogit, GlmmLog, Gee };

enum class Link { Identity, Logit, Log };

enum class WorkingCorrelation { Independence, Exchangeable, ArmExchangeable };

/// How a logistic random-intercept model is averaged over the random effect
/// when predicting cluster means.
enum class Marginalization { Quadrature, Hedeker };

inline std::string_view to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::Null: return "null";
    case ModelFamily::ClusterLm: return "cluster-lm";
    case ModelFamily::ClusterGlmLogit: return "cluster-glm-logit";
    case ModelFamily::Lmm: return "lmm";
    case ModelFamily::GlmmLogit: return "glmm-logit";
    case ModelFamily::GlmmLog: return "glmm-log";
    case ModelFamily::Gee: return "gee";
  }
  return "?";
}

inline std::string_view to_string(Link l) {
  switch (l) {
    case Link::Identity: return "identity";
    case Link::Logit: return "logit";
    case Link::Log: return "log";
  }
  return "?";
}

inline std::string_view to_string(WorkingCorrelation c) {
  switch (c) {
    case WorkingCorrelation::Independence: return "independence";
    case WorkingCorrelation::Exchangeable: return "exchangeable";
    case WorkingCorrelation::ArmExchangeable: return "arm-exchangeable";
  }
  return "?";
}

/// Working outcome regression. Covariates enter as linear main effects:
/// cluster-level families use (A, mean X, H, N); individual-level families
/// use (A, X - mean X, mean X, H, N). Unadjusted models use A only.
struct ModelSpec {
  ModelFamily family = ModelFamily::Null;
  bool adjusted = false;
  bool adjust_for_size = true;
  Link link = Link::Identity;                                          // Gee
  WorkingCorrelation correlation = WorkingCorrelation::Independence;  // Gee
  Marginalization marginalization = Marginalization::Quadrature;      // GlmmLogit
  int prediction_nodes = 64;
  int likelihood_nodes = 25;
  bool reml = false;  // Lmm
  int max_iterations = 100;
  double tolerance = 1e-8;

  static ModelSpec null() { return {}; }
  static ModelSpec cluster_lm(bool adjusted) {
    ModelSpec s;
    s.family = ModelFamily::ClusterLm;
    s.adjusted = adjusted;
    return s;
  }
  static ModelSpec cluster_glm_logit(bool adjusted) {
    ModelSpec s;
    s.family = ModelFamily::ClusterGlmLogit;
    s.adjusted = adjusted;
    return s;
  }
  static ModelSpec lmm(bool adjusted, bool reml = false) {
    ModelSpec s;
    s.family = ModelFamily::Lmm;
    s.adjusted = adjusted;
    s.reml = reml;
    return s;
  }
  static ModelSpec glmm_logit(bool adjusted, Marginalization how = Marginalization::Quadrature) {
    ModelSpec s;
    s.family = ModelFamily::GlmmLogit;
    s.adjusted = adjusted;
    s.marginalization = how;
    return s;
  }
  static ModelSpec glmm_log(bool adjusted) {
    ModelSpec s;
    s.family = ModelFamily::GlmmLog;
    s.adjusted = adjusted;
    return s;
  }
  static ModelSpec gee(Link link, WorkingCorrelation corr, bool adjusted) {
    ModelSpec s;
    s.family = ModelFamily::Gee;
    s.link = link;
    s.correlation = corr;
    s.adjusted = adjusted;
    return s;
  }

  bool cluster_level() const {
    return family == ModelFamily::ClusterLm || family == ModelFamily::ClusterGlmLogit;
  }
};

/// Variance components of the fitted model; zero where not applicable.
/// `random_intercept` is sigma_b^2 (Lmm), sigma_c^2 (GlmmLogit) or
/// sigma_d^2 (GlmmLog); `residual` is sigma_eps^2 or the GEE/GLM dispersion.
struct VarianceComponents {
  double random_intercept = 0.0;
  double residual = 0.0;
};

struct FitDiagnostics {
  int iterations = 0;
  double gradient_norm = 0.0;
  bool converged = true;
  bool boundary = false;             // variance component clamped to zero
  bool correlation_clamped = false;  // GEE moment ICC outside its admissible range
};

struct FittedWorkingModel {
  ModelSpec spec;
  Eigen::VectorXd coefficients;  // treatment coefficient at index 1
  std::vector<std::string> coefficient_names;
  VarianceComponents variance;
  std::optional<double> icc;
  std::optional<std::array<double, 2>> arm_icc;  // (rho_0, rho_1)
  // Covariance of the coefficients under the model's own variance policy:
  // HC0 sandwich (cluster LM), model-based (cluster GLM, LMM, GLMM),
  // Mancl-DeRouen bias-corrected sandwich (GEE). Empty when not requested.
  Eigen::MatrixXd coefficient_covariance;
  std::string covariance_kind;
  FitDiagnostics diagnostics;

  double treatment_coefficient() const {
    return coefficients.size() > 1 ? coefficients[1] : 0.0;
  }
  double treatment_se() const {
    if (coefficient_covariance.rows() < 2) return std::numeric_limits<double>::quiet_NaN();
    return std::sqrt(coefficient_covariance(1, 1));
  }
};

}  // namespace mrstd

#endif  // MRSTD_MODELS_MODEL_SPEC_HPP
