#ifndef MRSTD_MODELS_GLMM_HPP
#define MRSTD_MODELS_GLMM_HPP

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mrstd/models/design.hpp"
#include "mrstd/models/gee.hpp"
#include "mrstd/models/linear.hpp"
#include "mrstd/numeric.hpp"

namespace mrstd::models {

namespace detail {

inline Link glmm_link(const ModelSpec& spec) {
  return spec.family == ModelFamily::GlmmLog ? Link::Log : Link::Logit;
}

// Conditional log density of one observation given its linear predictor:
// Bernoulli for the logit link, Poisson for the log link.
inline double conditional_loglik(Link link, double y, double eta) {
  eta = numeric::clamp_eta(eta);
  if (link == Link::Logit) return y * eta - numeric::log1pexp(eta);
  return y * eta - std::exp(eta) - std::lgamma(y + 1.0);
}

inline void mean_and_variance(Link link, double eta, double& mu, double& v) {
  mu = inverse_link(link, eta);
  v = link == Link::Logit ? mu * (1.0 - mu) : mu;
}

// log of \int prod_j f(y_j | eta_j + sigma z) phi(z) dz by adaptive
// Gauss-Hermite quadrature centred at the mode of the integrand. When `grad`
// is given, adds d/d(beta, log sigma) of the exact log integral, i.e. the
// posterior-weighted score, evaluated on the same nodes.
inline double cluster_marginal_loglik(const ClusterBlock& b, Link link,
                                      const Eigen::VectorXd& beta, double sigma,
                                      const numeric::GaussHermiteRule& rule,
                                      Eigen::VectorXd* grad) {
  const Eigen::VectorXd eta0 = b.x * beta;
  const Eigen::Index n = eta0.size();
  double mu = 0.0, v = 0.0;

  double z = 0.0, info = 1.0;
  for (int it = 0; it < 100; ++it) {
    double s = 0.0, vs = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      mean_and_variance(link, eta0[j] + sigma * z, mu, v);
      s += b.y[j] - mu;
      vs += v;
    }
    info = sigma * sigma * vs + 1.0;
    const double step = (sigma * s - z) / info;
    z += step;
    if (std::abs(step) < 1e-10 * (1.0 + std::abs(z))) break;
  }
  {
    double vs = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      mean_and_variance(link, eta0[j] + sigma * z, mu, v);
      vs += v;
    }
    info = sigma * sigma * vs + 1.0;
  }
  const double scale = std::numbers::sqrt2 / std::sqrt(info);

  const std::size_t nodes = rule.size();
  std::vector<double> log_terms(nodes), zk(nodes);
  for (std::size_t k = 0; k < nodes; ++k) {
    zk[k] = z + scale * rule.nodes[k];
    double h = -0.5 * zk[k] * zk[k];
    for (Eigen::Index j = 0; j < n; ++j)
      h += conditional_loglik(link, b.y[j], eta0[j] + sigma * zk[k]);
    log_terms[k] = std::log(rule.weights[k]) + rule.nodes[k] * rule.nodes[k] + h;
  }
  const double lse = numeric::log_sum_exp(log_terms);
  const double value = std::log(scale) + lse - 0.5 * std::log(2.0 * std::numbers::pi);

  if (grad) {
    const Eigen::Index p = beta.size();
    Eigen::VectorXd rbar = Eigen::VectorXd::Zero(n);
    double g_sigma = 0.0;
    for (std::size_t k = 0; k < nodes; ++k) {
      const double w = std::exp(log_terms[k] - lse);
      double s = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        mu = inverse_link(link, eta0[j] + sigma * zk[k]);
        rbar[j] += w * (b.y[j] - mu);
        s += b.y[j] - mu;
      }
      g_sigma += w * zk[k] * s;
    }
    grad->head(p) += b.x.transpose() * rbar;
    (*grad)[p] += sigma * g_sigma;
  }
  return value;
}

}  // namespace detail

/// Random-intercept GLM (logit/Bernoulli or log/Poisson) by maximum
/// likelihood with adaptive Gauss-Hermite quadrature
/// (`likelihood_nodes`, 1 node = Laplace). Parameters are (beta, log sigma);
/// optimization is BFGS started from the fixed-effects GLM. When the GLM
/// likelihood is not exceeded the variance is set to the zero boundary.
inline FittedWorkingModel fit_glmm(const ModelDesign& d, std::span<const std::size_t> active,
                                   const FitOptions& opts = {}) {
  const auto& spec = d.spec;
  const Link link = detail::glmm_link(spec);
  const Eigen::Index k = d.num_coefficients();
  for (auto i : active) {
    const auto& y = d.blocks[i].y;
    const bool ok = link == Link::Logit ? ((y.array() >= 0.0) && (y.array() <= 1.0)).all()
                                        : (y.array() >= 0.0).all();
    if (!ok)
      throw EstimationError(link == Link::Logit
                                ? "logistic mixed model requires outcomes in [0,1]"
                                : "log-link mixed model requires non-negative outcomes");
  }

  auto glm_spec = ModelSpec::gee(link, WorkingCorrelation::Independence, spec.adjusted);
  glm_spec.max_iterations = spec.max_iterations;
  FitOptions glm_opts;
  glm_opts.coefficient_covariance = false;
  const auto glm = fit_gee(d, glm_spec, active, glm_opts);

  Eigen::MatrixXd xwx = Eigen::MatrixXd::Zero(k, k);
  double glm_loglik = 0.0;
  for (auto i : active) {
    const auto& b = d.blocks[i];
    const auto t = detail::gee_terms_rows(b, link, glm.coefficients);
    xwx += t.wzz + t.z1 * t.z1.transpose() / b.n;
    const Eigen::VectorXd eta = b.x * glm.coefficients;
    for (Eigen::Index j = 0; j < eta.size(); ++j)
      glm_loglik += detail::conditional_loglik(link, b.y[j], eta[j]);
  }
  const Eigen::MatrixXd xwx_inv = xwx.ldlt().solve(Eigen::MatrixXd::Identity(k, k));

  const auto& rule = numeric::gauss_hermite(spec.likelihood_nodes);
  const bool analytic_gradient = rule.size() >= 5;
  auto objective = [&](const Eigen::VectorXd& theta, Eigen::VectorXd* grad) {
    const Eigen::VectorXd beta = theta.head(k);
    const double sigma = std::exp(theta[k]);
    if (grad) grad->setZero(k + 1);
    double ll = 0.0;
    for (auto i : active)
      ll += detail::cluster_marginal_loglik(d.blocks[i], link, beta, sigma, rule,
                                            analytic_gradient ? grad : nullptr);
    if (grad) *grad = -*grad;
    return -ll;
  };
  auto value_and_gradient = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    if (analytic_gradient) return objective(theta, &grad);
    const double f = objective(theta, nullptr);
    grad.resize(k + 1);
    for (Eigen::Index j = 0; j <= k; ++j) {
      const double h = 1e-5 * std::max(1.0, std::abs(theta[j]));
      Eigen::VectorXd tp = theta, tm = theta;
      tp[j] += h;
      tm[j] -= h;
      grad[j] = (objective(tp, nullptr) - objective(tm, nullptr)) / (2.0 * h);
    }
    return f;
  };

  Eigen::VectorXd theta(k + 1);
  if (opts.warm_start && opts.warm_start->coefficients.size() == k &&
      opts.warm_start->variance.random_intercept > 0.0) {
    theta.head(k) = opts.warm_start->coefficients;
    theta[k] = 0.5 * std::log(opts.warm_start->variance.random_intercept);
  } else {
    theta.head(k) = glm.coefficients;
    theta[k] = std::log(0.5);
  }
  Eigen::MatrixXd h0 = Eigen::MatrixXd::Zero(k + 1, k + 1);
  h0.topLeftCorner(k, k) = xwx_inv;
  h0(k, k) = 2.0 / static_cast<double>(active.size());
  const auto res = numeric::minimize_bfgs(value_and_gradient, theta, 4 * spec.max_iterations,
                                          1e-6, h0);
  if (!res.converged) throw EstimationError("mixed model likelihood maximization did not converge");

  auto m = detail::start_model(d);
  m.diagnostics.iterations = res.iterations;
  m.diagnostics.gradient_norm = res.gradient_norm;
  const double sigma = std::exp(res.x[k]);
  if (glm_loglik >= -res.value || sigma < 1e-5) {
    m.coefficients = glm.coefficients;
    m.variance.random_intercept = 0.0;
    m.diagnostics.boundary = true;
    if (opts.coefficient_covariance) m.coefficient_covariance = xwx_inv;
  } else {
    m.coefficients = res.x.head(k);
    m.variance.random_intercept = sigma * sigma;
    if (opts.coefficient_covariance) {
      Eigen::MatrixXd hess(k + 1, k + 1);
      Eigen::VectorXd gp(k + 1), gm(k + 1);
      for (Eigen::Index j = 0; j <= k; ++j) {
        const double h = 1e-4 * std::max(1.0, std::abs(res.x[j]));
        Eigen::VectorXd tp = res.x, tm = res.x;
        tp[j] += h;
        tm[j] -= h;
        value_and_gradient(tp, gp);
        value_and_gradient(tm, gm);
        hess.col(j) = (gp - gm) / (2.0 * h);
      }
      hess = 0.5 * (hess + hess.transpose()).eval();
      const Eigen::MatrixXd cov = hess.ldlt().solve(Eigen::MatrixXd::Identity(k + 1, k + 1));
      if (!cov.allFinite() || (cov.diagonal().array() <= 0.0).any())
        throw EstimationError("mixed model observed information is not positive definite");
      m.coefficient_covariance = cov.topLeftCorner(k, k);
    }
  }
  if (opts.coefficient_covariance) m.covariance_kind = "model-based";
  if (link == Link::Logit) {
    const double latent = std::numbers::pi * std::numbers::pi / 3.0;
    m.variance.residual = latent;
    m.icc = m.variance.random_intercept / (m.variance.random_intercept + latent);
  }
  return m;
}

}  // namespace mrstd::models

#endif  // MRSTD_MODELS_GLMM_HPP
