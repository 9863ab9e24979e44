#ifndef MRSTD_MODELS_GEE_HPP
#define MRSTD_MODELS_GEE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mrstd/models/design.hpp"
#include "mrstd/models/linear.hpp"
#include "mrstd/numeric.hpp"

namespace mrstd::models {

namespace detail {

inline double inverse_link(Link link, double eta) {
  switch (link) {
    case Link::Identity: return eta;
    case Link::Logit: return numeric::expit(eta);
    case Link::Log: return std::exp(numeric::clamp_eta(eta));
  }
  return eta;
}

inline double link_function(Link link, double mu) {
  switch (link) {
    case Link::Identity: return mu;
    case Link::Logit: return numeric::logit(mu);
    case Link::Log: return std::log(mu);
  }
  return mu;
}

// Per-cluster pieces of the estimating equations at a given beta, in the
// standardized scale Z = diag(mu' / sqrt(v)) X, e = (y - mu) / sqrt(v):
// within-cluster scatter Zc'Zc and Zc'ec of the mean-centred Z and e, plus
// Z'1, 1'e and e'e.
struct GeeTerms {
  Eigen::MatrixXd wzz;
  Eigen::VectorXd wze;
  Eigen::VectorXd z1;
  double sum_e = 0.0;
  double sum_e2 = 0.0;
};

inline GeeTerms gee_terms_rows(const ClusterBlock& b, Link link, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = b.x * beta;
  const Eigen::Index n = eta.size();
  Eigen::VectorXd scale(n), e(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double mu = inverse_link(link, eta[j]);
    double sd = 1.0, deriv = 1.0;
    if (link == Link::Logit) {
      const double v = std::max(mu * (1.0 - mu), 1e-300);
      sd = std::sqrt(v);
      deriv = v;
    } else if (link == Link::Log) {
      const double v = std::max(mu, 1e-300);
      sd = std::sqrt(v);
      deriv = v;
    }
    scale[j] = deriv / sd;
    e[j] = (b.y[j] - mu) / sd;
  }
  const Eigen::MatrixXd z = scale.asDiagonal() * b.x;
  const Eigen::MatrixXd zc = z.rowwise() - z.colwise().mean();
  const Eigen::VectorXd ec = e.array() - e.mean();
  GeeTerms t;
  t.wzz = zc.transpose() * zc;
  t.wze = zc.transpose() * ec;
  t.z1 = z.colwise().sum().transpose();
  t.sum_e = e.sum();
  t.sum_e2 = e.squaredNorm();
  return t;
}

// Identity link: every term is a function of the block's sufficient statistics.
inline GeeTerms gee_terms_stats(const ClusterBlock& b, const Eigen::VectorXd& beta) {
  GeeTerms t;
  t.wzz = b.wxx;
  t.z1 = b.xt1;
  const Eigen::VectorXd wxx_beta = b.wxx * beta;
  t.wze = b.wxy - wxx_beta;
  t.sum_e = b.sum_y - b.xt1.dot(beta);
  const double within_ss = std::max(b.wyy - 2.0 * b.wxy.dot(beta) + beta.dot(wxx_beta), 0.0);
  t.sum_e2 = within_ss + t.sum_e * t.sum_e / b.n;
  return t;
}

// B_i = Z'R^{-1}Z and g_i = Z'R^{-1}e for exchangeable R(rho). With
// R^{-1} = (I - c 11') / (1 - rho), c = rho / (1 + (N - 1) rho), these split
// into a within-cluster part scaled by 1 / (1 - rho) and a cluster-total part
// scaled by 1 / (N (1 + (N - 1) rho)), which stays accurate as rho nears 1.
inline void exchangeable_products(const GeeTerms& t, double n, double rho, Eigen::MatrixXd& bi,
                                  Eigen::VectorXd& gi) {
  const double within = 1.0 / (1.0 - rho);
  const double between = 1.0 / (n * (1.0 + (n - 1.0) * rho));
  bi = within * t.wzz + between * t.z1 * t.z1.transpose();
  gi = within * t.wze + between * t.sum_e * t.z1;
}

struct MomentEstimates {
  double phi = 1.0;
  std::array<double, 2> rho{0.0, 0.0};
  bool clamped = false;
};

inline MomentEstimates gee_moments(const std::vector<GeeTerms>& terms,
                                   const std::vector<const ClusterBlock*>& blocks,
                                   WorkingCorrelation corr, double num_coef) {
  MomentEstimates out;
  double n_total = 0.0, sse = 0.0, max_n = 1.0;
  std::array<double, 2> cross{0.0, 0.0}, pairs{0.0, 0.0};
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const double n = blocks[i]->n;
    const int arm = corr == WorkingCorrelation::ArmExchangeable ? blocks[i]->a : 0;
    n_total += n;
    sse += terms[i].sum_e2;
    max_n = std::max(max_n, n);
    cross[arm] += 0.5 * (terms[i].sum_e * terms[i].sum_e - terms[i].sum_e2);
    pairs[arm] += 0.5 * n * (n - 1.0);
  }
  if (n_total <= num_coef) throw EstimationError("GEE needs more observations than coefficients");
  out.phi = sse / (n_total - num_coef);
  if (corr == WorkingCorrelation::Independence) return out;
  if (!(out.phi > 0.0)) return out;
  const double lo = max_n > 1.0 ? -1.0 / (max_n - 1.0) : -1.0;
  const double margin = 1e-6;
  const int arms = corr == WorkingCorrelation::ArmExchangeable ? 2 : 1;
  for (int a = 0; a < arms; ++a) {
    double r = pairs[a] > 0.0 ? cross[a] / (out.phi * pairs[a]) : 0.0;
    if (r <= lo + margin || r >= 1.0 - margin) {
      r = std::clamp(r, lo + margin, 1.0 - margin);
      out.clamped = true;
    }
    out.rho[a] = r;
  }
  if (arms == 1) out.rho[1] = out.rho[0];
  return out;
}

}  // namespace detail

/// Mancl-DeRouen bias-corrected sandwich from per-cluster B_i and g_i.
/// With H_ii the cluster's leverage block, D_i'V_i^{-1}(I - H_ii)^{-1} r_i
/// reduces to (I - B_i B^{-1})^{-1} g_i, so no N_i x N_i matrix is formed.
inline Eigen::MatrixXd mancl_derouen_covariance(const std::vector<Eigen::MatrixXd>& bi,
                                                const std::vector<Eigen::VectorXd>& gi) {
  const Eigen::Index k = bi.front().rows();
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(k, k);
  for (const auto& m : bi) b += m;
  const Eigen::MatrixXd b_inv = b.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(k, k);
  for (std::size_t i = 0; i < bi.size(); ++i) {
    const Eigen::VectorXd u = (eye - bi[i] * b_inv).partialPivLu().solve(gi[i]);
    meat.noalias() += u * u.transpose();
  }
  return b_inv * meat * b_inv;
}

/// Marginal mean regression by generalized estimating equations with
/// independence, exchangeable or arm-specific exchangeable working
/// correlation. Variance families follow the link: Gaussian (identity),
/// Bernoulli (logit), Poisson (log). Dispersion and correlation are moment
/// estimates recomputed at every Fisher-scoring step.
/// `spec` supplies link, correlation and iteration control; it may differ from
/// the spec the design was built for as long as the design columns agree.
inline FittedWorkingModel fit_gee(const ModelDesign& d, const ModelSpec& spec,
                                  std::span<const std::size_t> active,
                                  const FitOptions& opts = {}) {
  const Eigen::Index k = d.num_coefficients();
  std::vector<const ClusterBlock*> blocks;
  blocks.reserve(active.size());
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd xty = Eigen::VectorXd::Zero(k);
  double sum_y = 0.0, n_total = 0.0;
  for (auto i : active) {
    const auto& b = d.blocks[i];
    blocks.push_back(&b);
    xtx += b.xtx;
    xty += b.xty;
    sum_y += b.sum_y;
    n_total += b.n;
  }
  mrstd::detail::require_full_rank(xtx, d.names);

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  if (opts.warm_start && opts.warm_start->coefficients.size() == k) {
    beta = opts.warm_start->coefficients;
  } else if (spec.link == Link::Identity) {
    beta = xtx.ldlt().solve(xty);
  } else {
    const double ybar = sum_y / n_total;
    if (spec.link == Link::Logit) {
      if (!(ybar > 0.0 && ybar < 1.0))
        throw EstimationError("logit GEE: outcome is constant across all individuals");
      beta[0] = numeric::logit(ybar);
    } else {
      if (!(ybar > 0.0)) throw EstimationError("log-link GEE: outcome mean is not positive");
      beta[0] = std::log(ybar);
    }
  }

  auto compute_terms = [&](const Eigen::VectorXd& b, std::vector<detail::GeeTerms>& out) {
    const bool from_stats = spec.link == Link::Identity && opts.sufficient_statistics;
    out.resize(blocks.size());
    for (std::size_t i = 0; i < blocks.size(); ++i)
      out[i] = from_stats ? detail::gee_terms_stats(*blocks[i], b)
                          : detail::gee_terms_rows(*blocks[i], spec.link, b);
  };

  std::vector<detail::GeeTerms> terms;
  detail::MomentEstimates mom;
  Eigen::MatrixXd bi;
  Eigen::VectorXd gi;
  bool converged = false;
  int it = 0;
  for (; it < spec.max_iterations; ++it) {
    compute_terms(beta, terms);
    mom = detail::gee_moments(terms, blocks, spec.correlation, static_cast<double>(k));
    Eigen::MatrixXd b_sum = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd g_sum = Eigen::VectorXd::Zero(k);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      detail::exchangeable_products(terms[i], blocks[i]->n, mom.rho[blocks[i]->a], bi, gi);
      b_sum += bi;
      g_sum += gi;
    }
    const Eigen::VectorXd delta = b_sum.ldlt().solve(g_sum);
    if (!delta.allFinite()) throw EstimationError("GEE Fisher scoring produced a non-finite step");
    beta += delta;
    if (delta.lpNorm<Eigen::Infinity>() / (beta.lpNorm<Eigen::Infinity>() + 1e-10) <
        spec.tolerance) {
      converged = true;
      ++it;
      break;
    }
  }
  if (!converged) throw EstimationError("GEE did not converge");

  compute_terms(beta, terms);
  mom = detail::gee_moments(terms, blocks, spec.correlation, static_cast<double>(k));
  std::vector<Eigen::MatrixXd> b_list(blocks.size());
  std::vector<Eigen::VectorXd> g_list(blocks.size());
  Eigen::VectorXd g_sum = Eigen::VectorXd::Zero(k);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    detail::exchangeable_products(terms[i], blocks[i]->n, mom.rho[blocks[i]->a], b_list[i],
                                  g_list[i]);
    g_sum += g_list[i];
  }

  auto m = detail::start_model(d);
  m.spec = spec;
  m.coefficients = beta;
  m.variance.residual = mom.phi;
  m.diagnostics.iterations = it;
  m.diagnostics.gradient_norm = g_sum.lpNorm<Eigen::Infinity>();
  m.diagnostics.correlation_clamped = mom.clamped;
  if (spec.correlation == WorkingCorrelation::Exchangeable) m.icc = mom.rho[0];
  if (spec.correlation == WorkingCorrelation::ArmExchangeable) m.arm_icc = mom.rho;
  if (opts.coefficient_covariance) {
    m.coefficient_covariance = mancl_derouen_covariance(b_list, g_list);
    m.covariance_kind = "Mancl-DeRouen sandwich";
  }
  return m;
}

inline FittedWorkingModel fit_gee(const ModelDesign& d, std::span<const std::size_t> active,
                                  const FitOptions& opts = {}) {
  return fit_gee(d, d.spec, active, opts);
}

}  // namespace mrstd::models

#endif  // MRSTD_MODELS_GEE_HPP
