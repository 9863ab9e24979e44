#ifndef MRSTD_SIMULATION_EXPERIMENT_HPP
#define MRSTD_SIMULATION_EXPERIMENT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mrstd/estimate.hpp"
#include "mrstd/ics_test.hpp"
#include "mrstd/simulation/dgp.hpp"

namespace mrstd::sim {

class SimulationAbort : public Error {
 public:
  using Error::Error;
};

struct WorkingModelEntry {
  std::string label;  // W1..W8
  ModelSpec spec;
};

/// W1 cluster LM, W2 LMM, W3 GEE exchangeable, W4 GEE independence.
inline std::vector<WorkingModelEntry> continuous_models(bool adjusted) {
  return {{"W1", ModelSpec::cluster_lm(adjusted)},
          {"W2", ModelSpec::lmm(adjusted)},
          {"W3", ModelSpec::gee(Link::Identity, WorkingCorrelation::Exchangeable, adjusted)},
          {"W4", ModelSpec::gee(Link::Identity, WorkingCorrelation::Independence, adjusted)}};
}

/// W5 cluster logit GLM, W6 logistic GLMM, W7/W8 logit GEE exchangeable/independence.
inline std::vector<WorkingModelEntry> binary_models(bool adjusted) {
  return {{"W5", ModelSpec::cluster_glm_logit(adjusted)},
          {"W6", ModelSpec::glmm_logit(adjusted)},
          {"W7", ModelSpec::gee(Link::Logit, WorkingCorrelation::Exchangeable, adjusted)},
          {"W8", ModelSpec::gee(Link::Logit, WorkingCorrelation::Independence, adjusted)}};
}

inline std::vector<WorkingModelEntry> scenario_models(Scenario s, bool adjusted) {
  return is_binary(s) ? binary_models(adjusted) : continuous_models(adjusted);
}

/// Standard error policy of the treatment coefficient for a working model.
inline std::string coefficient_se_policy(const ModelSpec& spec) {
  switch (spec.family) {
    case ModelFamily::ClusterLm: return "HC0 sandwich";
    case ModelFamily::Lmm: return "cluster jackknife";
    case ModelFamily::Gee: return "Mancl-DeRouen sandwich";
    case ModelFamily::Null: return "none";
    default: return "model-based";
  }
}

struct ExperimentConfig {
  DgpSpec dgp;
  int n_sim = 500;
  std::uint64_t seed = 1;
  std::vector<WorkingModelEntry> models;
  bool coef = true;
  bool mrs = true;
  double level = 0.95;
  double max_failure_rate = 0.02;
  unsigned threads = 1;
};

struct MetricsRow {
  std::string estimator;  // Coef | MRS
  std::string model;      // W1..W8
  bool adjusted = false;
  std::string target;     // Delta_C | Delta_I
  double truth = 0.0;
  double bias_pct = 0.0;
  double mcsd = 0.0;
  double aese = 0.0;
  double coverage = 0.0;
  double coverage_lo = 0.0;
  double coverage_hi = 0.0;
  int n_valid = 0;
  int n_failed = 0;
  std::string se_policy;
};

struct ExperimentResult {
  std::vector<MetricsRow> rows;
  TrueEstimands truth;
};

namespace detail {

struct ReplicateModelOutput {
  bool failed = false;
  double coef = 0.0, coef_se = 0.0;
  double mrs[2] = {0.0, 0.0};
  double mrs_se[2] = {0.0, 0.0};
};

struct Accumulator {
  std::vector<double> est, se;

  MetricsRow finish(double truth, double tcrit) const {
    MetricsRow r;
    const double n = static_cast<double>(est.size());
    r.n_valid = static_cast<int>(est.size());
    if (est.empty()) {
      r.bias_pct = r.mcsd = r.aese = r.coverage = std::numeric_limits<double>::quiet_NaN();
      return r;
    }
    double mean = 0.0, mse = 0.0, cover = 0.0;
    for (std::size_t k = 0; k < est.size(); ++k) {
      mean += est[k];
      r.aese += se[k];
      cover += std::abs(est[k] - truth) <= tcrit * se[k] ? 1.0 : 0.0;
    }
    mean /= n;
    r.aese /= n;
    for (double e : est) mse += (e - mean) * (e - mean);
    r.mcsd = n > 1 ? std::sqrt(mse / (n - 1.0)) : 0.0;
    r.bias_pct = 100.0 * (mean - truth) / truth;
    r.coverage = 100.0 * cover / n;
    const double half = 1.96 * std::sqrt(r.coverage * (100.0 - r.coverage) / n);
    r.coverage_lo = std::max(0.0, r.coverage - half);
    r.coverage_hi = std::min(100.0, r.coverage + half);
    return r;
  }
};

}  // namespace detail

/// Replicates generate -> fit -> Coef and MRS for every working model, and
/// aggregates bias, MCSD, AESE and t(m-1) coverage against `truth`.
/// Replicate r uses seed + r; results are reduced in replicate order.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const TrueEstimands& truth) {
  cfg.dgp.validate();
  if (cfg.n_sim < 1) throw ValidationError("n_sim must be positive");
  if (cfg.models.empty()) throw ValidationError("empty model grid");
  const Contrast f = scenario_contrast(cfg.dgp.scenario);
  const std::vector<EstimandSpec> estimands{EstimandSpec::cluster_average(f),
                                            EstimandSpec::individual_average(f)};
  const auto nm = cfg.models.size();
  const auto reps = static_cast<std::size_t>(cfg.n_sim);
  std::vector<std::vector<detail::ReplicateModelOutput>> slots(
      reps, std::vector<detail::ReplicateModelOutput>(nm));

  numeric::parallel_for(reps, cfg.threads, [&](std::size_t r) {
    const auto data = generate_trial(cfg.dgp, cfg.seed + r);
    for (std::size_t k = 0; k < nm; ++k) {
      auto& out = slots[r][k];
      const auto& spec = cfg.models[k].spec;
      try {
        if (cfg.mrs || spec.family == ModelFamily::Lmm) {
          const auto res = analyze(data, SimpleDesign{cfg.dgp.treatment_probability}, spec,
                                   estimands, cfg.level);
          for (int e = 0; e < 2; ++e) {
            out.mrs[e] = res.estimates[static_cast<std::size_t>(e)].estimate.estimate;
            out.mrs_se[e] = res.estimates[static_cast<std::size_t>(e)].se;
          }
          out.coef = res.model.treatment_coefficient();
          out.coef_se = spec.family == ModelFamily::Lmm ? jackknife_se(res.loo_coefficient)
                                                        : res.model.treatment_se();
        } else {
          const auto model = fit(spec, data);
          out.coef = model.treatment_coefficient();
          out.coef_se = model.treatment_se();
        }
        if (!std::isfinite(out.coef) || !std::isfinite(out.mrs[0]) || !std::isfinite(out.mrs[1]))
          throw EstimationError("non-finite estimate");
      } catch (const Error&) {
        out.failed = true;
      }
    }
  });

  ExperimentResult res;
  res.truth = truth;
  const double tcrit =
      numeric::t_quantile(1.0 - (1.0 - cfg.level) / 2.0, static_cast<double>(cfg.dgp.m - 1));
  const double truths[2] = {truth.delta_c.value, truth.delta_i.value};
  const char* targets[2] = {"Delta_C", "Delta_I"};
  for (std::size_t k = 0; k < nm; ++k) {
    int failed = 0;
    detail::Accumulator coef, mrs[2];
    for (std::size_t r = 0; r < reps; ++r) {
      const auto& o = slots[r][k];
      if (o.failed) {
        ++failed;
        continue;
      }
      coef.est.push_back(o.coef);
      coef.se.push_back(o.coef_se);
      for (int e = 0; e < 2; ++e) {
        mrs[e].est.push_back(o.mrs[e]);
        mrs[e].se.push_back(o.mrs_se[e]);
      }
    }
    if (failed > cfg.max_failure_rate * cfg.n_sim)
      throw SimulationAbort("model " + cfg.models[k].label + ": " + std::to_string(failed) +
                            " of " + std::to_string(cfg.n_sim) +
                            " replicates failed, above the abort threshold");
    auto label = [&](MetricsRow row, const char* estimator, int e) {
      row.estimator = estimator;
      row.model = cfg.models[k].label;
      row.adjusted = cfg.models[k].spec.adjusted;
      row.target = targets[e];
      row.truth = truths[e];
      row.n_failed = failed;
      row.se_policy = std::string(estimator) == "MRS" ? "cluster jackknife"
                                                      : coefficient_se_policy(cfg.models[k].spec);
      return row;
    };
    for (int e = 0; e < 2; ++e) {
      if (cfg.coef) res.rows.push_back(label(coef.finish(truths[e], tcrit), "Coef", e));
      if (cfg.mrs) res.rows.push_back(label(mrs[e].finish(truths[e], tcrit), "MRS", e));
    }
  }
  return res;
}

struct IcsPowerRow {
  double delta = 0.0;
  std::string model;
  double rejection_rate = 0.0;  // percent
  int n_valid = 0;
  int n_failed = 0;
};

struct IcsPowerConfig {
  DgpSpec dgp;  // scenario ContIcs or BinIcs; delta overridden by the grid
  std::vector<double> deltas;
  int n_sim = 500;
  std::uint64_t seed = 1;
  std::vector<WorkingModelEntry> models;
  double alpha = 0.05;
  double max_failure_rate = 0.02;
  unsigned threads = 1;
};

/// Rejection rate (%) of the two-sided level-alpha test for each (delta, model).
inline std::vector<IcsPowerRow> run_ics_power(const IcsPowerConfig& cfg) {
  if (cfg.dgp.scenario != Scenario::ContIcs && cfg.dgp.scenario != Scenario::BinIcs)
    throw ValidationError("ICS power study requires an ICS scenario");
  if (cfg.n_sim < 1) throw ValidationError("n_sim must be positive");
  const IcsScale scale = is_binary(cfg.dgp.scenario) ? IcsScale::Logit : IcsScale::Difference;
  const auto nm = cfg.models.size();
  const auto reps = static_cast<std::size_t>(cfg.n_sim);
  std::vector<IcsPowerRow> rows;
  for (double delta : cfg.deltas) {
    auto dgp = cfg.dgp;
    dgp.delta = delta;
    dgp.validate();
    // 0 = reject, 1 = accept, 2 = failed
    std::vector<std::vector<int>> slots(reps, std::vector<int>(nm, 2));
    numeric::parallel_for(reps, cfg.threads, [&](std::size_t r) {
      const auto data = generate_trial(dgp, cfg.seed + r);
      for (std::size_t k = 0; k < nm; ++k) {
        try {
          const auto t = ics_test(data, SimpleDesign{dgp.treatment_probability},
                                  cfg.models[k].spec, scale);
          slots[r][k] = t.p_value < cfg.alpha ? 0 : 1;
        } catch (const Error&) {
          slots[r][k] = 2;
        }
      }
    });
    for (std::size_t k = 0; k < nm; ++k) {
      IcsPowerRow row;
      row.delta = delta;
      row.model = cfg.models[k].label;
      int rejected = 0;
      for (std::size_t r = 0; r < reps; ++r) {
        if (slots[r][k] == 2) ++row.n_failed;
        else {
          ++row.n_valid;
          rejected += slots[r][k] == 0;
        }
      }
      if (row.n_failed > cfg.max_failure_rate * cfg.n_sim)
        throw SimulationAbort("model " + row.model + ": too many failed replicates");
      row.rejection_rate = row.n_valid ? 100.0 * rejected / row.n_valid : 0.0;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace mrstd::sim

#endif  // MRSTD_SIMULATION_EXPERIMENT_HPP
