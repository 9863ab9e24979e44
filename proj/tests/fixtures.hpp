#ifndef MRSTD_TESTS_FIXTURES_HPP
#define MRSTD_TESTS_FIXTURES_HPP

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mrstd/core.hpp"

namespace fixtures {

inline mrstd::ClusterRecord cluster(std::string id, int a, std::vector<double> y,
                                    Eigen::MatrixXd x = {}, Eigen::VectorXd h = {}) {
  mrstd::ClusterRecord c;
  c.id = std::move(id);
  c.treatment = a;
  c.size = y.size();
  c.outcomes = std::move(y);
  c.covariates = x.size() ? x : Eigen::MatrixXd(static_cast<Eigen::Index>(c.size), 0);
  c.cluster_covariates = h.size() ? h : Eigen::VectorXd(0);
  return c;
}

struct RandomTrialSpec {
  int m = 12;
  int p = 1;
  int q = 1;
  int n_min = 2;
  int n_max = 12;
  bool binary = false;
  bool equal_sizes = false;
};

/// Small synthetic trial with half the clusters treated (in shuffled order),
/// a size-dependent effect and a cluster random intercept.
inline mrstd::TrialData random_trial(std::uint64_t seed, const RandomTrialSpec& s = {}) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> size(s.n_min, s.n_max);
  const int fixed = size(rng);
  std::vector<int> arms(static_cast<std::size_t>(s.m));
  for (int i = 0; i < s.m; ++i) arms[static_cast<std::size_t>(i)] = i % 2;
  std::shuffle(arms.begin(), arms.end(), rng);
  mrstd::TrialData d;
  for (int i = 0; i < s.m; ++i) {
    const int n = s.equal_sizes ? fixed : size(rng);
    const int a = arms[static_cast<std::size_t>(i)];
    Eigen::MatrixXd x(n, s.p);
    Eigen::VectorXd h(s.q);
    for (int k = 0; k < s.q; ++k) h[k] = z(rng);
    const double b = 0.5 * z(rng);
    std::vector<double> y(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
      double eta = 0.3 + 0.5 * a + 0.04 * n * a + b;
      for (int k = 0; k < s.p; ++k) {
        x(j, k) = z(rng);
        eta += 0.4 * x(j, k);
      }
      for (int k = 0; k < s.q; ++k) eta += 0.2 * h[k];
      y[static_cast<std::size_t>(j)] =
          s.binary ? (u(rng) < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0) : eta + z(rng);
    }
    d.clusters.push_back(cluster("c" + std::to_string(i + 1), a, std::move(y), x, h));
  }
  return d;
}

}  // namespace fixtures

#endif  // MRSTD_TESTS_FIXTURES_HPP
