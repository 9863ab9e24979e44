#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "mrstd/mrstd.hpp"
#include "mrstd/simulation/dgp.hpp"
#include "mrstd/simulation/experiment.hpp"

using namespace mrstd;
using namespace mrstd::sim;

TEST(Dgp, SizesStayOnTheSupport) {
  DgpSpec spec;
  spec.scenario = Scenario::ContInf;
  spec.m = 40;
  spec.expected_total = 4000.0;
  EXPECT_EQ(spec.lower(), 20);
  EXPECT_EQ(spec.upper(), 180);
  const auto d = generate_trial(spec, 17);
  ASSERT_EQ(d.num_clusters(), 40u);
  for (const auto& c : d.clusters) {
    EXPECT_GE(c.size, 20u);
    EXPECT_LE(c.size, 180u);
    EXPECT_EQ(c.covariates.cols(), 2);
    EXPECT_EQ(c.cluster_covariates.size(), 2);
  }
}

TEST(Dgp, BinaryScenariosProduceZeroOne) {
  for (auto s : {Scenario::BinNonInf, Scenario::BinInf, Scenario::BinIcs}) {
    DgpSpec spec;
    spec.scenario = s;
    spec.m = 10;
    spec.expected_total = 300.0;
    const auto d = generate_trial(spec, 5);
    for (const auto& c : d.clusters)
      for (double y : c.outcomes) EXPECT_TRUE(y == 0.0 || y == 1.0);
  }
}

TEST(Dgp, SeedDeterminesTheTrial) {
  DgpSpec spec;
  spec.m = 12;
  spec.expected_total = 600.0;
  const auto a = generate_trial(spec, 3), b = generate_trial(spec, 3), c = generate_trial(spec, 4);
  bool same = true, differs = false;
  for (std::size_t i = 0; i < 12; ++i) {
    same &= a.clusters[i].outcomes == b.clusters[i].outcomes;
    differs |= a.clusters[i].outcomes != c.clusters[i].outcomes;
  }
  EXPECT_TRUE(same);
  EXPECT_TRUE(differs);
}

TEST(Dgp, InvalidSpecs) {
  DgpSpec spec;
  spec.m = 2;
  EXPECT_THROW(generate_trial(spec, 1), ValidationError);
  spec.m = 30;
  spec.treatment_probability = 1.0;
  EXPECT_THROW(generate_trial(spec, 1), ValidationError);
  EXPECT_THROW(parse_scenario("nope"), ValidationError);
}

TEST(Truth, IndependentOfThreadCount) {
  DgpSpec spec;
  spec.scenario = Scenario::BinInf;
  const auto a = true_estimands(spec, 30000, 11, 1);
  const auto b = true_estimands(spec, 30000, 11, 3);
  EXPECT_EQ(a.delta_c.value, b.delta_c.value);
  EXPECT_EQ(a.delta_i.value, b.delta_i.value);
  EXPECT_EQ(a.contrast, Contrast::LogOddsRatio);
  EXPECT_GT(a.delta_c.mc_se, 0.0);
  EXPECT_THROW(true_estimands(spec, 100, 11), ValidationError);
}

TEST(Truth, NonInformativeSizesGiveEqualTargets) {
  DgpSpec spec;
  spec.scenario = Scenario::ContNonInf;
  const auto t = true_estimands(spec, 50000, 2);
  EXPECT_NEAR(t.delta_c.value, t.delta_i.value, 4.0 * (t.delta_c.mc_se + t.delta_i.mc_se));
}

TEST(Experiment, SmallRunIsThreadInvariant) {
  ExperimentConfig cfg;
  cfg.dgp.scenario = Scenario::ContInf;
  cfg.dgp.m = 20;
  cfg.dgp.expected_total = 600.0;
  cfg.n_sim = 12;
  cfg.models = continuous_models(true);
  const auto truth = true_estimands(cfg.dgp, 20000, 9);
  const auto one = run_experiment(cfg, truth);
  cfg.threads = 3;
  const auto three = run_experiment(cfg, truth);
  ASSERT_EQ(one.rows.size(), 16u);
  ASSERT_EQ(three.rows.size(), 16u);
  for (std::size_t k = 0; k < one.rows.size(); ++k) {
    EXPECT_EQ(one.rows[k].bias_pct, three.rows[k].bias_pct);
    EXPECT_EQ(one.rows[k].aese, three.rows[k].aese);
    EXPECT_EQ(one.rows[k].coverage, three.rows[k].coverage);
    EXPECT_GE(one.rows[k].coverage_lo, 0.0);
    EXPECT_LE(one.rows[k].coverage_hi, 100.0);
  }
  EXPECT_EQ(one.rows.front().estimator, "Coef");
  EXPECT_EQ(one.rows.front().se_policy, "HC0 sandwich");
}

TEST(Experiment, AbortsWhenTooManyReplicatesFail) {
  ExperimentConfig cfg;
  cfg.dgp.scenario = Scenario::ContNonInf;
  cfg.dgp.m = 10;
  cfg.dgp.expected_total = 200.0;
  cfg.n_sim = 4;
  cfg.models = {{"W6", ModelSpec::glmm_logit(false)}};
  const auto truth = true_estimands(cfg.dgp, 10000, 1);
  EXPECT_THROW(run_experiment(cfg, truth), SimulationAbort);
}

TEST(IcsPower, SmallRun) {
  IcsPowerConfig cfg;
  cfg.dgp.scenario = Scenario::ContIcs;
  cfg.dgp.m = 20;
  cfg.dgp.expected_total = 800.0;
  cfg.deltas = {0.0, 0.5};
  cfg.n_sim = 8;
  cfg.models = {continuous_models(true).front()};
  const auto rows = run_ics_power(cfg);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_GE(r.rejection_rate, 0.0);
    EXPECT_LE(r.rejection_rate, 100.0);
    EXPECT_EQ(r.n_valid + r.n_failed, 8);
  }
  cfg.dgp.scenario = Scenario::ContInf;
  EXPECT_THROW(run_ics_power(cfg), ValidationError);
}

TEST(Constrained, SchemesAreBalancedSubsets) {
  DgpSpec spec;
  spec.m = 12;
  spec.expected_total = 360.0;
  const auto t = generate_constrained_trial(spec, 5, 0.1);
  EXPECT_EQ(t.design.num_schemes(), 93u);  // ceil(0.1 * C(12, 6))
  EXPECT_NO_THROW(validate_design(t.design));
  for (const auto& row : t.design.schemes) EXPECT_EQ(std::count(row.begin(), row.end(), 1), 6);
  bool observed = false;
  for (const auto& row : t.design.schemes) {
    bool same = true;
    for (std::size_t i = 0; i < 12; ++i) same &= row[i] == t.data.clusters[i].treatment;
    observed |= same;
  }
  EXPECT_TRUE(observed);
  spec.m = 21;
  EXPECT_THROW(generate_constrained_trial(spec, 5), ValidationError);
}

TEST(Constrained, StandardizationStaysUnbiased) {
  DgpSpec spec;
  spec.scenario = Scenario::ContNonInf;
  spec.m = 12;
  spec.expected_total = 300.0;
  const auto truth = true_estimands(spec, 100000, 3);
  const int reps = 300;
  for (const auto& model : {ModelSpec::null(), ModelSpec::cluster_lm(true)}) {
    std::vector<double> est;
    for (int r = 0; r < reps; ++r) {
      const auto t = generate_constrained_trial(spec, 500 + static_cast<std::uint64_t>(r), 0.2);
      try {
        const auto e = estimate(t.data, t.design, model, EstimandSpec::cluster_average());
        est.push_back(e.estimate.estimate);
      } catch (const Error&) {
      }
    }
    ASSERT_GT(est.size(), 280u);
    const Eigen::Map<Eigen::ArrayXd> e(est.data(), static_cast<Eigen::Index>(est.size()));
    const double sd = std::sqrt((e - e.mean()).square().sum() / (e.size() - 1.0));
    EXPECT_NEAR(e.mean(), truth.delta_c.value, 4.0 * sd / std::sqrt(static_cast<double>(e.size())));
  }
}
