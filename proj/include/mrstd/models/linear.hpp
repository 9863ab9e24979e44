#ifndef MRSTD_MODELS_LINEAR_HPP
#define MRSTD_MODELS_LINEAR_HPP

#include <cmath>
#include <numbers>
#include <span>

#include <Eigen/Dense>

#include "mrstd/models/design.hpp"
#include "mrstd/numeric.hpp"

namespace mrstd {

struct FitOptions {
  bool coefficient_covariance = true;
  // Warm start for iterative fits (GEE, GLMM); ignored when sizes differ.
  const FittedWorkingModel* warm_start = nullptr;
  // Identity-link GEE evaluates its equations from per-cluster sufficient
  // statistics; false forces the row-by-row path.
  bool sufficient_statistics = true;
};

namespace models {

namespace detail {

inline void stack_rows(const ModelDesign& d, std::span<const std::size_t> active,
                       Eigen::MatrixXd& x, Eigen::VectorXd& y) {
  Eigen::Index rows = 0;
  for (auto i : active) rows += d.blocks[i].x.rows();
  x.resize(rows, d.num_coefficients());
  y.resize(rows);
  Eigen::Index at = 0;
  for (auto i : active) {
    const auto& b = d.blocks[i];
    x.middleRows(at, b.x.rows()) = b.x;
    y.segment(at, b.y.size()) = b.y;
    at += b.x.rows();
  }
}

inline FittedWorkingModel start_model(const ModelDesign& d) {
  FittedWorkingModel m;
  m.spec = d.spec;
  m.coefficient_names = d.names;
  return m;
}

}  // namespace detail

/// Ordinary least squares on cluster means with an HC0 sandwich covariance.
inline FittedWorkingModel fit_cluster_lm(const ModelDesign& d, std::span<const std::size_t> active,
                                         const FitOptions& opts = {}) {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  detail::stack_rows(d, active, x, y);
  const Eigen::Index k = x.cols();
  if (x.rows() <= k) throw EstimationError("cluster-level regression needs more clusters than coefficients");
  const Eigen::MatrixXd xtx = x.transpose() * x;
  mrstd::detail::require_full_rank(xtx, d.names);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
  auto m = detail::start_model(d);
  m.coefficients = qr.solve(y);
  const Eigen::VectorXd resid = y - x * m.coefficients;
  m.variance.residual = resid.squaredNorm() / static_cast<double>(x.rows() - k);
  if (opts.coefficient_covariance) {
    const Eigen::MatrixXd bread = xtx.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
    const Eigen::MatrixXd meat = x.transpose() * resid.array().square().matrix().asDiagonal() * x;
    m.coefficient_covariance = bread * meat * bread;
    m.covariance_kind = "HC0 sandwich";
  }
  return m;
}

/// Logit-mean regression of cluster proportions with a constant (Gaussian)
/// working variance, solved by Gauss-Newton with step halving.
inline FittedWorkingModel fit_cluster_glm_logit(const ModelDesign& d,
                                                std::span<const std::size_t> active,
                                                const FitOptions& opts = {}) {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  detail::stack_rows(d, active, x, y);
  const Eigen::Index k = x.cols();
  if (x.rows() <= k) throw EstimationError("cluster-level regression needs more clusters than coefficients");
  if ((y.array() < 0.0).any() || (y.array() > 1.0).any())
    throw EstimationError("logit working model requires cluster means in [0,1]");
  mrstd::detail::require_full_rank(x.transpose() * x, d.names);

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  if (opts.warm_start && opts.warm_start->coefficients.size() == k) {
    beta = opts.warm_start->coefficients;
  } else {
    const double ybar = std::clamp(y.mean(), 1e-3, 1.0 - 1e-3);
    beta[0] = numeric::logit(ybar);
  }
  auto rss_at = [&](const Eigen::VectorXd& b, Eigen::VectorXd& mu) {
    mu = (x * b).unaryExpr([](double e) { return numeric::expit(e); });
    return (y - mu).squaredNorm();
  };
  Eigen::VectorXd mu;
  double rss = rss_at(beta, mu);
  auto m = detail::start_model(d);
  bool converged = false;
  int it = 0;
  Eigen::MatrixXd jtj;
  for (; it < d.spec.max_iterations; ++it) {
    const Eigen::ArrayXd deriv = mu.array() * (1.0 - mu.array());
    const Eigen::MatrixXd jac = deriv.matrix().asDiagonal() * x;
    jtj = jac.transpose() * jac;
    const Eigen::VectorXd step = jtj.ldlt().solve(jac.transpose() * (y - mu));
    double scale = 1.0;
    Eigen::VectorXd trial = beta + step, mu_trial;
    double rss_trial = rss_at(trial, mu_trial);
    while (rss_trial > rss && scale > 1e-10) {
      scale *= 0.5;
      trial = beta + scale * step;
      rss_trial = rss_at(trial, mu_trial);
    }
    const double change = (scale * step).lpNorm<Eigen::Infinity>() /
                          (beta.lpNorm<Eigen::Infinity>() + 1e-10);
    beta = trial;
    mu = mu_trial;
    rss = rss_trial;
    if (change < d.spec.tolerance) {
      converged = true;
      ++it;
      break;
    }
  }
  if (!converged) throw EstimationError("cluster-level logit regression did not converge");
  m.coefficients = beta;
  m.diagnostics.iterations = it;
  m.variance.residual = rss / static_cast<double>(x.rows() - k);
  const Eigen::ArrayXd deriv = mu.array() * (1.0 - mu.array());
  const Eigen::MatrixXd jac = deriv.matrix().asDiagonal() * x;
  jtj = jac.transpose() * jac;
  m.diagnostics.gradient_norm = (jac.transpose() * (y - mu)).lpNorm<Eigen::Infinity>();
  if (opts.coefficient_covariance) {
    m.coefficient_covariance =
        m.variance.residual * jtj.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
    m.covariance_kind = "model-based";
  }
  return m;
}

namespace detail {

// Random-intercept linear model, V_i = sigma^2 (I + lambda J). All quantities
// come from per-cluster sufficient statistics, using
// V_i^{-1} sigma^2 = I - c_i J with c_i = lambda / (1 + lambda N_i).
struct LmmProfile {
  const ModelDesign& design;
  std::span<const std::size_t> active;
  double n_total = 0.0;
  bool reml = false;

  struct Point {
    Eigen::VectorXd beta;
    Eigen::MatrixXd xwx;
    double quad = 0.0;  // r' (sigma^2 V^{-1}) r at the GLS solution
    double sigma2 = 0.0;
    double deviance = 0.0;
  };

  Point evaluate(double lambda) const {
    const Eigen::Index k = design.num_coefficients();
    Point pt;
    pt.xwx = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd xwy = Eigen::VectorXd::Zero(k);
    double ywy = 0.0, logdet_v = 0.0;
    for (auto i : active) {
      const auto& b = design.blocks[i];
      const double c = lambda / (1.0 + lambda * b.n);
      pt.xwx.noalias() += b.xtx - c * b.xt1 * b.xt1.transpose();
      xwy.noalias() += b.xty - c * b.sum_y * b.xt1;
      ywy += b.yty - c * b.sum_y * b.sum_y;
      logdet_v += std::log1p(lambda * b.n);
    }
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(pt.xwx);
    pt.beta = ldlt.solve(xwy);
    pt.quad = std::max(ywy - xwy.dot(pt.beta), 0.0);
    const double log2pi = std::log(2.0 * std::numbers::pi);
    if (reml) {
      const double dof = n_total - static_cast<double>(k);
      pt.sigma2 = pt.quad / dof;
      const double logdet_xwx = ldlt.vectorD().array().log().sum();
      pt.deviance = dof * (log2pi + std::log(pt.sigma2)) + logdet_v + logdet_xwx + dof;
    } else {
      pt.sigma2 = pt.quad / n_total;
      pt.deviance = n_total * (log2pi + std::log(pt.sigma2)) + logdet_v + n_total;
    }
    return pt;
  }
};

}  // namespace detail

/// Random-intercept linear mixed model by (restricted) maximum likelihood.
/// The deviance is profiled over beta and sigma^2 and minimized in
/// log(sigma_b^2 / sigma_eps^2) by Brent's method; the zero boundary is
/// checked explicitly.
inline FittedWorkingModel fit_lmm(const ModelDesign& d, std::span<const std::size_t> active,
                                  const FitOptions& opts = {}) {
  const Eigen::Index k = d.num_coefficients();
  double n_total = 0.0;
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(k, k);
  for (auto i : active) {
    n_total += d.blocks[i].n;
    xtx += d.blocks[i].xtx;
  }
  if (n_total <= static_cast<double>(k) + 1.0)
    throw EstimationError("linear mixed model needs more observations than coefficients");
  mrstd::detail::require_full_rank(xtx, d.names);

  const detail::LmmProfile profile{d, active, n_total, d.spec.reml};
  auto objective = [&](double log_lambda) { return profile.evaluate(std::exp(log_lambda)).deviance; };
  const auto best = numeric::minimize_scalar(objective, -15.0, 15.0, 50, 300);
  double lambda = std::exp(best.argmin);
  auto pt = profile.evaluate(lambda);
  const auto at_zero = profile.evaluate(0.0);

  auto m = detail::start_model(d);
  m.diagnostics.iterations = static_cast<int>(best.iterations);
  if (at_zero.deviance <= pt.deviance || lambda * pt.sigma2 < 1e-10) {
    lambda = 0.0;
    pt = at_zero;
    m.diagnostics.boundary = true;
  } else {
    const double h = 1e-4;
    m.diagnostics.gradient_norm =
        std::abs(objective(best.argmin + h) - objective(best.argmin - h)) / (2.0 * h);
  }
  m.coefficients = pt.beta;
  m.variance.residual = pt.sigma2;
  m.variance.random_intercept = lambda * pt.sigma2;
  m.icc = lambda / (1.0 + lambda);
  if (opts.coefficient_covariance) {
    m.coefficient_covariance = pt.sigma2 * pt.xwx.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
    m.covariance_kind = "model-based";
  }
  return m;
}

}  // namespace models
}  // namespace mrstd

#endif  // MRSTD_MODELS_LINEAR_HPP
