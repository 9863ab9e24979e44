#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "mrstd/mrstd.hpp"

using namespace mrstd;
using fixtures::cluster;

namespace {

TrialData four_clusters() {
  TrialData d;
  d.clusters.push_back(cluster("t1", 1, {2.0, 4.0}));
  d.clusters.push_back(cluster("t2", 1, {5.0}));
  d.clusters.push_back(cluster("c1", 0, {1.0, 1.0, 1.0}));
  d.clusters.push_back(cluster("c2", 0, {3.0}));
  return d;
}

StandardizedMeans null_means(const TrialData& d, const EstimandSpec& e, const Eigen::VectorXd& pi) {
  FittedWorkingModel null_model;
  null_model.spec = ModelSpec::null();
  return standardized_means(d, weights(d, e), pi, null_model);
}

}  // namespace

TEST(Standardization, NullModelHandExample) {
  const auto d = four_clusters();
  const Eigen::VectorXd pi = Eigen::VectorXd::Constant(4, 0.5);
  const auto mu = null_means(d, EstimandSpec::cluster_average(), pi);
  EXPECT_DOUBLE_EQ(mu.mu1, 4.0);
  EXPECT_DOUBLE_EQ(mu.mu0, 2.0);
  EXPECT_DOUBLE_EQ(contrast(mu, EstimandSpec::cluster_average()).estimate, 2.0);
}

TEST(Standardization, NullModelIsInverseProbabilityWeighting) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto d = fixtures::random_trial(seed);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.2, 0.8);
    Eigen::VectorXd pi(static_cast<Eigen::Index>(d.num_clusters()));
    for (auto& p : pi) p = u(rng);
    for (const auto& e : {EstimandSpec::cluster_average(), EstimandSpec::individual_average()}) {
      const auto w = weights(d, e);
      double s1 = 0.0, s0 = 0.0;
      for (std::size_t i = 0; i < d.num_clusters(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        const double ybar = summarize(d.clusters[i]).ybar;
        if (d.clusters[i].treatment == 1) s1 += w.values[k] * ybar / pi[k];
        else s0 += w.values[k] * ybar / (1.0 - pi[k]);
      }
      const auto mu = null_means(d, e, pi);
      EXPECT_NEAR(mu.mu1, s1 / w.total, 1e-12 * (1.0 + std::abs(mu.mu1)));
      EXPECT_NEAR(mu.mu0, s0 / w.total, 1e-12 * (1.0 + std::abs(mu.mu0)));
    }
  }
}

TEST(Standardization, MeansAreWeightedAveragesOfContributions) {
  const auto d = fixtures::random_trial(8);
  const auto model = fit(ModelSpec::lmm(true), d);
  const Eigen::VectorXd pi = assignment_probabilities(SimpleDesign{0.5}, d);
  const auto mu = standardized_means(d, weights(d, EstimandSpec::individual_average()), pi, model);
  EXPECT_NEAR(mu.mu1, mu.weight.dot(mu.contribution1) / mu.weight.sum(), 1e-12);
  EXPECT_NEAR(mu.mu0, mu.weight.dot(mu.contribution0) / mu.weight.sum(), 1e-12);
  EXPECT_EQ(mu.contribution1.size(), 12);
}

TEST(Standardization, UnadjustedClusterLmGivesArmMeansOfClusterMeans) {
  for (std::uint64_t seed = 11; seed <= 16; ++seed) {
    const auto d = fixtures::random_trial(seed, {.m = 9});
    const auto model = fit(ModelSpec::cluster_lm(false), d);
    for (double p : {0.3, 0.5, 0.65}) {
      const Eigen::VectorXd pi = Eigen::VectorXd::Constant(9, p);
      const auto mu = standardized_means(d, weights(d, EstimandSpec::cluster_average()), pi, model);
      double s[2] = {0.0, 0.0};
      int n[2] = {0, 0};
      for (const auto& c : d.clusters) {
        s[c.treatment] += summarize(c).ybar;
        ++n[c.treatment];
      }
      EXPECT_NEAR(mu.mu1, s[1] / n[1], 1e-10);
      EXPECT_NEAR(mu.mu0, s[0] / n[0], 1e-10);

      Eigen::VectorXd empirical(9);
      for (std::size_t i = 0; i < 9; ++i) empirical[static_cast<Eigen::Index>(i)] = n[1] / 9.0;
      const auto ipw = null_means(d, EstimandSpec::cluster_average(), empirical);
      EXPECT_NEAR(mu.mu1 - mu.mu0, ipw.mu1 - ipw.mu0, 1e-10);
    }
  }
}

TEST(Standardization, EqualSizesMakeClusterAndIndividualIdentical) {
  const auto d = fixtures::random_trial(5, {.m = 10, .equal_sizes = true});
  const Eigen::VectorXd pi = Eigen::VectorXd::Constant(10, 0.5);
  for (const auto& spec : {ModelSpec::null(), ModelSpec::cluster_lm(true), ModelSpec::lmm(true),
                           ModelSpec::gee(Link::Identity, WorkingCorrelation::Exchangeable, true)}) {
    const auto model = fit(spec, d);
    const auto c = standardized_means(d, weights(d, EstimandSpec::cluster_average()), pi, model);
    const auto i = standardized_means(d, weights(d, EstimandSpec::individual_average()), pi, model);
    EXPECT_EQ(c.mu1, i.mu1);
    EXPECT_EQ(c.mu0, i.mu0);
  }
}

TEST(Standardization, ScalingWeightsLeavesMeansUnchanged) {
  const auto d = fixtures::random_trial(21);
  const auto model = fit(ModelSpec::gee(Link::Identity, WorkingCorrelation::Independence, true), d);
  const Eigen::VectorXd pi = Eigen::VectorXd::Constant(12, 0.5);
  const auto base = standardized_means(d, weights(d, EstimandSpec::individual_average()), pi, model);
  const auto scaled_spec = EstimandSpec::custom_weights(
      [](std::size_t n, const Eigen::VectorXd&) { return 3.7 * static_cast<double>(n); });
  const auto scaled = standardized_means(d, weights(d, scaled_spec), pi, model);
  EXPECT_NEAR(scaled.mu1, base.mu1, 1e-12);
  EXPECT_NEAR(scaled.mu0, base.mu0, 1e-12);
}

TEST(Standardization, PreparedPathMatchesDirectPath) {
  const auto d = fixtures::random_trial(31);
  const auto spec = ModelSpec::lmm(true);
  const auto trial = PreparedTrial::make(d, SimpleDesign{0.5}, spec);
  const auto active = all_clusters(d.num_clusters());
  const auto model = fit(trial.design, active);
  const auto w = weights(d, EstimandSpec::cluster_average());
  const auto a = standardized_means(trial, active, w.values, predict_arms(model, trial.design, active));
  const auto b = standardized_means(d, w, trial.pi, model);
  EXPECT_NEAR(a.mu1, b.mu1, 1e-13);
  EXPECT_NEAR(a.mu0, b.mu0, 1e-13);
}

TEST(Standardization, SubgroupWeightsRestrictToTheSubgroup) {
  TrialData d;
  Eigen::VectorXd in(1), out(1);
  in << 1.0;
  out << 0.0;
  d.clusters.push_back(cluster("a", 1, {2.0}, {}, in));
  d.clusters.push_back(cluster("b", 1, {9.0}, {}, out));
  d.clusters.push_back(cluster("c", 0, {1.0}, {}, in));
  d.clusters.push_back(cluster("d", 0, {7.0}, {}, out));
  const Eigen::VectorXd pi = Eigen::VectorXd::Constant(4, 0.5);
  const auto mu = null_means(d, EstimandSpec::subgroup(0), pi);
  EXPECT_DOUBLE_EQ(mu.mu1, 2.0);
  EXPECT_DOUBLE_EQ(mu.mu0, 1.0);
}

TEST(Standardization, Errors) {
  const auto d = four_clusters();
  FittedWorkingModel null_model;
  null_model.spec = ModelSpec::null();
  Eigen::VectorXd pi = Eigen::VectorXd::Constant(4, 0.5);
  pi[2] = 1.0;
  EXPECT_THROW(standardized_means(d, weights(d, EstimandSpec::cluster_average()), pi, null_model),
               ValidationError);
  EXPECT_THROW(standardized_means(d, weights(d, EstimandSpec::cluster_average()),
                                  Eigen::VectorXd::Constant(3, 0.5), null_model),
               ValidationError);
  try {
    (void)estimate(d, StratifiedDesign{{{"s", 0.5}}}, ModelSpec::null(), EstimandSpec::cluster_average());
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("randomization: "), std::string::npos);
  }
}

TEST(Standardization, ContrastsOfMeans) {
  StandardizedMeans mu;
  mu.mu1 = 4.0;
  mu.mu0 = 2.0;
  EXPECT_DOUBLE_EQ(contrast(mu, EstimandSpec::cluster_average()).estimate, 2.0);
  mu.mu1 = mu.mu0 = 0.5;
  EXPECT_DOUBLE_EQ(contrast(mu, EstimandSpec::cluster_average(Contrast::LogOddsRatio)).estimate, 0.0);
  mu.mu1 = 1.2;
  EXPECT_THROW(contrast(mu, EstimandSpec::cluster_average(Contrast::LogOddsRatio)), DomainError);
}
