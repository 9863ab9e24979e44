#ifndef MRSTD_MODELS_DESIGN_HPP
#define MRSTD_MODELS_DESIGN_HPP

#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mrstd/core.hpp"
#include "mrstd/models/model_spec.hpp"

namespace mrstd {

/// Design rows of one cluster for a given ModelSpec. Cluster-level families
/// have a single row (response = cluster mean); individual-level families
/// have one row per individual. Column 1 is always the treatment indicator.
struct ClusterBlock {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  int a = 0;
  double n = 0.0;
  // sufficient statistics for linear individual-level fits
  Eigen::MatrixXd xtx;
  Eigen::VectorXd xt1;
  Eigen::VectorXd xty;
  double sum_y = 0.0;
  double yty = 0.0;
  // within-cluster (mean-centred) cross-products
  Eigen::MatrixXd wxx;
  Eigen::VectorXd wxy;
  double wyy = 0.0;

  /// Column means of x with the treatment column set to `arm`.
  Eigen::VectorXd mean_row(int arm) const {
    Eigen::VectorXd r = xt1 / n;
    r[1] = arm;
    return r;
  }
};

namespace detail {

inline std::vector<std::string> design_names(const ModelSpec& spec, Eigen::Index p,
                                             Eigen::Index q) {
  std::vector<std::string> names{"(Intercept)", "A"};
  if (spec.family == ModelFamily::Null || !spec.adjusted) return names;
  if (spec.cluster_level()) {
    for (Eigen::Index k = 0; k < p; ++k) names.push_back("xbar" + std::to_string(k + 1));
  } else {
    for (Eigen::Index k = 0; k < p; ++k) names.push_back("xwithin" + std::to_string(k + 1));
    for (Eigen::Index k = 0; k < p; ++k) names.push_back("xbar" + std::to_string(k + 1));
  }
  for (Eigen::Index k = 0; k < q; ++k) names.push_back("h" + std::to_string(k + 1));
  if (spec.adjust_for_size) names.push_back("N");
  return names;
}

}  // namespace detail

inline ClusterBlock make_block(const ModelSpec& spec, const ClusterRecord& c) {
  ClusterBlock b;
  const auto n = static_cast<Eigen::Index>(c.outcomes.size());
  const Eigen::Index p = c.covariates.cols();
  const Eigen::Index q = c.cluster_covariates.size();
  const auto names = detail::design_names(spec, p, q);
  const auto cols = static_cast<Eigen::Index>(names.size());
  b.a = c.treatment;
  b.n = static_cast<double>(n);
  const Eigen::Map<const Eigen::VectorXd> y(c.outcomes.data(), n);
  const Eigen::VectorXd xbar = c.covariates.colwise().mean().transpose();

  auto fill_common = [&](auto&& row, Eigen::Index at) {
    row.segment(at, q) = c.cluster_covariates.transpose();
    if (spec.adjust_for_size) row[at + q] = static_cast<double>(n);
  };

  if (spec.cluster_level()) {
    b.x.resize(1, cols);
    b.x(0, 0) = 1.0;
    b.x(0, 1) = c.treatment;
    if (spec.adjusted) {
      b.x.row(0).segment(2, p) = xbar.transpose();
      fill_common(b.x.row(0), 2 + p);
    }
    b.y.resize(1);
    b.y[0] = y.mean();
  } else {
    b.x.resize(n, cols);
    b.x.col(0).setOnes();
    b.x.col(1).setConstant(c.treatment);
    if (spec.adjusted) {
      b.x.middleCols(2, p) = c.covariates.rowwise() - xbar.transpose();
      b.x.middleCols(2 + p, p) = xbar.transpose().replicate(n, 1);
      for (Eigen::Index j = 0; j < n; ++j) fill_common(b.x.row(j), 2 + 2 * p);
    }
    b.y = y;
  }
  b.xtx = b.x.transpose() * b.x;
  b.xt1 = b.x.colwise().sum().transpose();
  b.xty = b.x.transpose() * b.y;
  b.sum_y = b.y.sum();
  b.yty = b.y.squaredNorm();
  {
    const Eigen::MatrixXd xc = b.x.rowwise() - b.x.colwise().mean();
    const Eigen::VectorXd yc = b.y.array() - b.y.mean();
    b.wxx = xc.transpose() * xc;
    b.wxy = xc.transpose() * yc;
    b.wyy = yc.squaredNorm();
  }
  if (spec.cluster_level()) b.n = 1.0;  // one pseudo-observation per cluster
  return b;
}

/// Design blocks for every cluster of a dataset, built once and reused by
/// the jackknife, which refits on subsets of clusters.
struct ModelDesign {
  ModelSpec spec;
  std::vector<ClusterBlock> blocks;
  std::vector<std::string> names;
  std::size_t max_cluster_size = 0;

  Eigen::Index num_coefficients() const { return static_cast<Eigen::Index>(names.size()); }

  static ModelDesign build(const ModelSpec& spec, const TrialData& data) {
    ModelDesign d;
    d.spec = spec;
    // With equal sizes the size column is a multiple of the intercept.
    if (spec.adjust_for_size && !data.clusters.empty()) {
      const auto n0 = data.clusters.front().outcomes.size();
      bool equal = true;
      for (const auto& c : data.clusters) equal &= c.outcomes.size() == n0;
      if (equal) d.spec.adjust_for_size = false;
    }
    d.names = detail::design_names(d.spec, data.individual_dim(), data.cluster_dim());
    d.blocks.reserve(data.num_clusters());
    for (const auto& c : data.clusters) {
      d.blocks.push_back(make_block(d.spec, c));
      d.max_cluster_size = std::max(d.max_cluster_size, c.outcomes.size());
    }
    return d;
  }
};

inline std::vector<std::size_t> all_clusters(std::size_t m) {
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

inline std::vector<std::size_t> all_but(std::size_t m, std::size_t excluded) {
  std::vector<std::size_t> idx;
  idx.reserve(m - 1);
  for (std::size_t i = 0; i < m; ++i)
    if (i != excluded) idx.push_back(i);
  return idx;
}

namespace detail {

/// Throws EstimationError unless the symmetric cross-product matrix has full
/// rank after scaling its columns to unit diagonal.
inline void require_full_rank(const Eigen::MatrixXd& xtx, const std::vector<std::string>& names) {
  const Eigen::Index k = xtx.rows();
  Eigen::VectorXd d = xtx.diagonal();
  for (Eigen::Index j = 0; j < k; ++j) {
    if (!(d[j] > 0.0))
      throw EstimationError("rank-deficient design: column '" + names[j] + "' is identically zero");
    d[j] = 1.0 / std::sqrt(d[j]);
  }
  const Eigen::MatrixXd scaled = d.asDiagonal() * xtx * d.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(scaled, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < 1e-11 * es.eigenvalues().maxCoeff())
    throw EstimationError("rank-deficient design matrix");
}

}  // namespace detail

}  // namespace mrstd

#endif  // MRSTD_MODELS_DESIGN_HPP
