#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "csv_input.hpp"
#include "mrstd/mrstd.hpp"
#include "mrstd/simulation/experiment.hpp"
#include "report.hpp"

#ifndef MRSTD_CLI_VERSION
#define MRSTD_CLI_VERSION "0.0.0"
#endif

namespace {

using namespace mrstd;
using namespace mrstd::cli;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitEstimation = 3;
constexpr int kExitAbort = 4;

struct CommonOptions {
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string output;
  std::string format = "table";
  bool validate_only = false;
};

struct DataOptions {
  std::string input;
  ColumnRoles roles;
  std::string design = "simple";
  double probability = 0.5;
  std::vector<std::string> strata;  // name=probability
  std::string schemes;
  bool schemes_header = false;
};

struct ModelOptions {
  std::vector<std::string> models{"cluster-lm"};
  std::string adjustment = "adjusted";
  std::string on_failure = "error";
  int likelihood_nodes = 25;
  int prediction_nodes = 64;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->fallthrough();
  app->add_option("--seed", o.seed, "Random seed")->capture_default_str();
  app->add_option("--threads", o.threads, "Worker threads (results do not depend on it)")
      ->capture_default_str()
      ->check(CLI::Range(1u, 1024u));
  app->add_option("--output", o.output, "Write the report to this path instead of stdout");
  app->add_option("--format", o.format, "Output format")
      ->capture_default_str()
      ->check(CLI::IsMember({"table", "csv", "record"}));
  app->add_flag("--validate-config", o.validate_only, "Check the configuration and exit");
}

void add_data(CLI::App* app, DataOptions& o) {
  app->add_option("--input", o.input, "Long-format CSV, one row per individual")->required();
  app->add_option("--cluster-col", o.roles.cluster, "Cluster id column")->capture_default_str();
  app->add_option("--treatment-col", o.roles.treatment, "0/1 treatment column")->capture_default_str();
  app->add_option("--outcome-col", o.roles.outcome, "Outcome column")->capture_default_str();
  app->add_option("--covariates", o.roles.covariates, "Individual-level covariate columns")
      ->delimiter(',');
  app->add_option("--cluster-covariates", o.roles.cluster_covariates, "Cluster-level covariate columns")
      ->delimiter(',');
  app->add_option("--stratum-col", o.roles.stratum, "Stratum label column");
  app->add_option("--design", o.design, "Randomization design")
      ->capture_default_str()
      ->check(CLI::IsMember({"simple", "stratified", "pair", "constrained"}));
  app->add_option("--probability", o.probability, "Assignment probability (simple design)")
      ->capture_default_str();
  app->add_option("--stratum-probability", o.strata, "NAME=P per stratum (stratified design)")
      ->delimiter(',');
  app->add_option("--schemes", o.schemes, "Scheme matrix CSV (constrained design)");
  app->add_flag("--schemes-header", o.schemes_header, "Scheme matrix has a header row");
}

void add_models(CLI::App* app, ModelOptions& o) {
  app->add_option("--model", o.models,
                  "Working models: W1..W8, null, cluster-lm, cluster-logit, lmm, lmm-reml, "
                  "glmm-logit, glmm-logit-hedeker, glmm-log, gee-{identity,logit,log}-{ind,exch,arm-exch}")
      ->delimiter(',')
      ->capture_default_str();
  app->add_option("--adjustment", o.adjustment, "Covariate adjustment")
      ->capture_default_str()
      ->check(CLI::IsMember({"adjusted", "unadjusted", "both"}));
  app->add_option("--on-refit-failure", o.on_failure, "Jackknife refit failure policy")
      ->capture_default_str()
      ->check(CLI::IsMember({"error", "substitute-null"}));
  app->add_option("--likelihood-nodes", o.likelihood_nodes, "Quadrature nodes for mixed-model likelihoods")
      ->capture_default_str()
      ->check(CLI::Range(1, 200));
  app->add_option("--prediction-nodes", o.prediction_nodes, "Quadrature nodes for marginal predictions")
      ->capture_default_str()
      ->check(CLI::Range(1, 200));
}

std::vector<bool> adjustment_grid(const std::string& a) {
  if (a == "both") return {false, true};
  return {a == "adjusted"};
}

sim::WorkingModelEntry parse_model(const std::string& token, bool adjusted, const ModelOptions& o) {
  sim::WorkingModelEntry e;
  e.label = token;
  if (token.size() == 2 && token[0] == 'W' && token[1] >= '1' && token[1] <= '8') {
    const int k = token[1] - '1';
    e.spec = (k < 4 ? sim::continuous_models(adjusted) : sim::binary_models(adjusted))[k % 4].spec;
  } else if (token == "null") {
    e.spec = ModelSpec::null();
  } else if (token == "cluster-lm") {
    e.spec = ModelSpec::cluster_lm(adjusted);
  } else if (token == "cluster-logit") {
    e.spec = ModelSpec::cluster_glm_logit(adjusted);
  } else if (token == "lmm" || token == "lmm-reml") {
    e.spec = ModelSpec::lmm(adjusted, token == "lmm-reml");
  } else if (token == "glmm-logit") {
    e.spec = ModelSpec::glmm_logit(adjusted);
  } else if (token == "glmm-logit-hedeker") {
    e.spec = ModelSpec::glmm_logit(adjusted, Marginalization::Hedeker);
  } else if (token == "glmm-log") {
    e.spec = ModelSpec::glmm_log(adjusted);
  } else if (token.rfind("gee-", 0) == 0) {
    const auto rest = token.substr(4);
    const auto dash = rest.find('-');
    if (dash == std::string::npos) throw ValidationError("malformed GEE model '" + token + "'");
    const auto link = rest.substr(0, dash);
    const auto corr = rest.substr(dash + 1);
    Link l;
    if (link == "identity") l = Link::Identity;
    else if (link == "logit") l = Link::Logit;
    else if (link == "log") l = Link::Log;
    else throw ValidationError("unknown GEE link '" + link + "'");
    WorkingCorrelation c;
    if (corr == "ind") c = WorkingCorrelation::Independence;
    else if (corr == "exch") c = WorkingCorrelation::Exchangeable;
    else if (corr == "arm-exch") c = WorkingCorrelation::ArmExchangeable;
    else throw ValidationError("unknown GEE working correlation '" + corr + "'");
    e.spec = ModelSpec::gee(l, c, adjusted);
  } else {
    throw ValidationError("unknown working model '" + token + "'");
  }
  e.spec.adjusted = e.spec.family == ModelFamily::Null ? false : adjusted;
  e.spec.likelihood_nodes = o.likelihood_nodes;
  e.spec.prediction_nodes = o.prediction_nodes;
  return e;
}

std::vector<sim::WorkingModelEntry> model_grid(const ModelOptions& o) {
  std::vector<sim::WorkingModelEntry> out;
  if (o.models.empty()) throw ValidationError("no working model requested");
  for (const auto& token : o.models)
    for (bool adj : adjustment_grid(o.adjustment)) {
      auto e = parse_model(token, adj, o);
      if (e.spec.family == ModelFamily::Null && adj && o.adjustment == "both") continue;
      out.push_back(std::move(e));
    }
  return out;
}

Contrast parse_contrast(const std::string& s) {
  if (s == "difference") return Contrast::Difference;
  if (s == "ratio") return Contrast::Ratio;
  if (s == "log-ratio") return Contrast::LogRatio;
  if (s == "log-odds-ratio") return Contrast::LogOddsRatio;
  throw ValidationError("unknown contrast '" + s + "'");
}

IcsScale parse_scale(const std::string& s) {
  if (s == "difference") return IcsScale::Difference;
  if (s == "log") return IcsScale::Log;
  if (s == "logit") return IcsScale::Logit;
  throw ValidationError("unknown ICS scale '" + s + "'");
}

struct NamedEstimand {
  std::string name;
  EstimandSpec spec;
};

std::vector<NamedEstimand> parse_estimands(const std::vector<std::string>& tokens, Contrast f) {
  std::vector<NamedEstimand> out;
  for (const auto& t : tokens) {
    if (t == "cluster") out.push_back({"Delta_C", EstimandSpec::cluster_average(f)});
    else if (t == "individual") out.push_back({"Delta_I", EstimandSpec::individual_average(f)});
    else if (t.rfind("subgroup:", 0) == 0) {
      const auto idx = static_cast<Eigen::Index>(parse_number(t.substr(9), "estimand '" + t + "'"));
      out.push_back({"subgroup:" + std::to_string(idx), EstimandSpec::subgroup(idx, f)});
    } else {
      throw ValidationError("unknown estimand '" + t + "'");
    }
  }
  if (out.empty()) throw ValidationError("no estimand requested");
  return out;
}

RandomizationDesign build_design(const DataOptions& o) {
  if (o.design == "simple") return SimpleDesign{o.probability};
  if (o.design == "pair") return PairMatchedDesign{};
  if (o.design == "stratified") {
    StratifiedDesign d;
    for (const auto& s : o.strata) {
      const auto eq = s.rfind('=');
      if (eq == std::string::npos) throw ValidationError("stratum probability '" + s + "' is not NAME=P");
      d.probabilities[s.substr(0, eq)] = parse_number(s.substr(eq + 1), "stratum probability '" + s + "'");
    }
    if (d.probabilities.empty()) throw ValidationError("stratified design needs --stratum-probability");
    return d;
  }
  if (o.schemes.empty()) throw ValidationError("constrained design needs --schemes");
  return load_schemes(read_csv_file(o.schemes, o.schemes_header));
}

struct LoadedTrial {
  TrialData data;
  RandomizationDesign design;
};

LoadedTrial load(const DataOptions& o, bool for_jackknife) {
  LoadedTrial t;
  t.data = load_trial(read_csv_file(o.input), o.roles);
  require_valid(t.data);
  t.design = build_design(o);
  assignment_probabilities(t.design, t.data);
  if (for_jackknife) {
    std::size_t treated = 0;
    for (const auto& c : t.data.clusters) treated += c.treatment == 1;
    const std::size_t control = t.data.num_clusters() - treated;
    if (treated < 2 || control < 2)
      throw ValidationError("each arm needs at least two clusters for leave-one-cluster-out "
                            "variance estimation (treated " + std::to_string(treated) +
                            ", control " + std::to_string(control) + ")");
  }
  return t;
}

JackknifeOptions jackknife_options(const ModelOptions& m, const CommonOptions& c) {
  JackknifeOptions j;
  j.threads = c.threads;
  j.on_failure = m.on_failure == "substitute-null" ? RefitFailurePolicy::SubstituteNull
                                                   : RefitFailurePolicy::Error;
  return j;
}

/// Canonical text of every option that defines the computation; threads,
/// output destination and presentation are excluded.
std::string config_hash(const CLI::App* app) {
  std::string s = app->get_name();
  for (const CLI::Option* opt : app->get_options()) {
    const auto& name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config" || name == "threads" ||
        name == "output" || name == "format" || name == "validate-config")
      continue;
    s += '\x1e';
    s += name;
    s += '=';
    if (opt->count() > 0) {
      for (const auto& r : opt->results()) (s += r) += '\x1f';
    } else {
      s += opt->get_default_str();
    }
  }
  return hex64(fnv1a(s));
}

void add_provenance(Report& r, const CommonOptions& c, const std::string& hash) {
  r.columns.insert(r.columns.end(), {"seed", "config_hash", "version"});
  for (auto& row : r.rows) {
    row.emplace_back(static_cast<std::int64_t>(c.seed));
    row.emplace_back(hash);
    row.emplace_back(std::string(MRSTD_CLI_VERSION));
  }
}

void emit(Report r, const CommonOptions& c, const CLI::App* app) {
  add_provenance(r, c, config_hash(app));
  const Format f = parse_format(c.format);
  if (c.output.empty()) {
    write(r, f, std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out(c.output, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + c.output + "'");
  write(r, f, out);
}

Cell opt_cell(double v) { return std::isfinite(v) ? Cell{v} : Cell{}; }

int cmd_analyze(const CLI::App* app, const CommonOptions& c, const DataOptions& d,
                const ModelOptions& mo, const std::vector<std::string>& estimand_tokens,
                const std::string& contrast_name, double level) {
  const auto grid = model_grid(mo);
  const auto estimands = parse_estimands(estimand_tokens, parse_contrast(contrast_name));
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("confidence level must lie in (0,1)");
  const auto trial = load(d, true);
  if (c.validate_only) {
    std::cerr << "configuration ok: " << trial.data.num_clusters() << " clusters, "
              << grid.size() << " model(s), " << estimands.size() << " estimand(s)\n";
    return kExitOk;
  }
  std::vector<EstimandSpec> specs;
  for (const auto& e : estimands) specs.push_back(e.spec);
  Report r;
  r.columns = {"model", "adjusted", "estimand", "contrast", "mu1", "mu0", "estimate", "se",
               "se_delta", "ci_lower", "ci_upper", "level", "df", "icc", "icc_control",
               "icc_treated", "refit_failures"};
  for (const auto& m : grid) {
    const auto res = analyze(trial.data, trial.design, m.spec, specs, level, jackknife_options(mo, c));
    Cell icc_all, icc0, icc1;
    if (res.icc) {
      if (const auto* v = std::get_if<double>(&*res.icc)) icc_all = *v;
      else {
        const auto& arm = std::get<std::array<double, 2>>(*res.icc);
        icc0 = arm[0];
        icc1 = arm[1];
      }
    }
    for (std::size_t e = 0; e < res.estimates.size(); ++e) {
      const auto& x = res.estimates[e];
      r.add({m.label, m.spec.adjusted, estimands[e].name, std::string(to_string(x.estimate.scale)),
             x.means.mu1, x.means.mu0, x.estimate.estimate, x.se, opt_cell(x.se_delta), x.ci.first,
             x.ci.second, x.level, static_cast<std::int64_t>(x.jackknife.df), icc_all, icc0, icc1,
             static_cast<std::int64_t>(x.jackknife.refit_failures.size())});
    }
  }
  emit(std::move(r), c, app);
  return kExitOk;
}

int cmd_ics(const CLI::App* app, const CommonOptions& c, const DataOptions& d, const ModelOptions& mo,
            const std::string& scale_name) {
  const auto grid = model_grid(mo);
  const IcsScale scale = parse_scale(scale_name);
  const auto trial = load(d, true);
  if (c.validate_only) {
    std::cerr << "configuration ok: " << trial.data.num_clusters() << " clusters, "
              << grid.size() << " model(s)\n";
    return kExitOk;
  }
  const double size_cov = ics_covariance_diagnostic(trial.data, trial.design);
  Report r;
  r.columns = {"model", "adjusted", "scale", "delta_c", "delta_i", "d_hat", "se", "statistic",
               "df", "p_value", "size_covariance"};
  for (const auto& m : grid) {
    const auto t = ics_test(trial.data, trial.design, m.spec, scale, jackknife_options(mo, c));
    r.add({m.label, m.spec.adjusted, std::string(to_string(scale)), t.delta_c, t.delta_i, t.d_hat,
           std::sqrt(t.v_hat), t.statistic, static_cast<std::int64_t>(t.df), t.p_value,
           scale == IcsScale::Difference ? Cell{size_cov} : Cell{}});
  }
  emit(std::move(r), c, app);
  return kExitOk;
}

struct SimOptions {
  std::string scenario = "cont-noninf";
  int m = 30;
  int n_sim = 500;
  double expected_total = 3000.0;
  double gamma_variance = 0.2;
  std::vector<double> deltas{0.0};
  double treatment_probability = 0.5;
  std::vector<std::string> models;  // empty: scenario default grid
  std::string adjustment = "both";
  std::string estimators = "both";
  double population = 1e6;
  std::uint64_t truth_seed = 0;  // 0: use --seed
  double max_failure_rate = 0.02;
  double level = 0.95;
};

sim::DgpSpec dgp_from(const SimOptions& s) {
  sim::DgpSpec d;
  d.scenario = sim::parse_scenario(s.scenario);
  d.m = s.m;
  d.expected_total = s.expected_total;
  d.gamma_variance = s.gamma_variance;
  d.treatment_probability = s.treatment_probability;
  d.delta = s.deltas.empty() ? 0.0 : s.deltas.front();
  return d;
}

std::vector<sim::WorkingModelEntry> sim_models(const SimOptions& s, const ModelOptions& mo) {
  if (!s.models.empty()) {
    ModelOptions o = mo;
    o.models = s.models;
    o.adjustment = s.adjustment;
    return model_grid(o);
  }
  std::vector<sim::WorkingModelEntry> out;
  for (bool adj : adjustment_grid(s.adjustment))
    for (auto& e : sim::scenario_models(sim::parse_scenario(s.scenario), adj)) {
      e.spec.likelihood_nodes = mo.likelihood_nodes;
      out.push_back(e);
    }
  return out;
}

std::size_t population_size(double p) {
  if (!(p >= 1e4) || p > 1e9 || p != std::floor(p))
    throw ValidationError("super-population size must be an integer in [1e4, 1e9]");
  return static_cast<std::size_t>(p);
}

int cmd_simulate(const CLI::App* app, const CommonOptions& c, const SimOptions& s,
                 const ModelOptions& mo) {
  auto dgp = dgp_from(s);
  const bool ics = dgp.scenario == sim::Scenario::ContIcs || dgp.scenario == sim::Scenario::BinIcs;
  if (!ics && (s.deltas.size() != 1 || s.deltas.front() != 0.0))
    throw ValidationError("--delta applies to the ICS scenarios only");
  if (s.n_sim < 1) throw ValidationError("n_sim must be positive");
  if (!(s.max_failure_rate >= 0.0 && s.max_failure_rate < 1.0))
    throw ValidationError("max failure rate must lie in [0,1)");
  const auto models = sim_models(s, mo);
  for (double delta : s.deltas) {
    auto dd = dgp;
    dd.delta = delta;
    dd.validate();
  }
  const auto pop = population_size(s.population);
  if (c.validate_only) {
    std::cerr << "configuration ok: " << models.size() << " model(s), " << s.n_sim << " replicates\n";
    return kExitOk;
  }
  Report r;
  if (ics) {
    sim::IcsPowerConfig cfg;
    cfg.dgp = dgp;
    cfg.deltas = s.deltas;
    cfg.n_sim = s.n_sim;
    cfg.seed = c.seed;
    cfg.models = models;
    cfg.alpha = 1.0 - s.level;
    cfg.max_failure_rate = s.max_failure_rate;
    cfg.threads = c.threads;
    const auto rows = sim::run_ics_power(cfg);
    r.columns = {"scenario", "m", "n_sim", "delta", "model", "adjusted", "rejection_rate",
                 "n_valid", "n_failed"};
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto& x = rows[k];
      const bool adj = models[k % models.size()].spec.adjusted;
      r.add({s.scenario, static_cast<std::int64_t>(s.m), static_cast<std::int64_t>(s.n_sim), x.delta,
             x.model, adj, x.rejection_rate, static_cast<std::int64_t>(x.n_valid),
             static_cast<std::int64_t>(x.n_failed)});
    }
  } else {
    const auto truth = sim::true_estimands(dgp, pop, s.truth_seed ? s.truth_seed : c.seed, c.threads);
    sim::ExperimentConfig cfg;
    cfg.dgp = dgp;
    cfg.n_sim = s.n_sim;
    cfg.seed = c.seed;
    cfg.models = models;
    cfg.coef = s.estimators != "mrs";
    cfg.mrs = s.estimators != "coef";
    cfg.level = s.level;
    cfg.max_failure_rate = s.max_failure_rate;
    cfg.threads = c.threads;
    const auto res = sim::run_experiment(cfg, truth);
    r.columns = {"scenario", "m", "n_sim", "estimator", "model", "adjusted", "target", "truth",
                 "truth_mc_se", "bias_pct", "mcsd", "aese", "coverage", "coverage_lo",
                 "coverage_hi", "n_valid", "n_failed", "se_policy"};
    for (const auto& x : res.rows) {
      const double mc_se = x.target == "Delta_C" ? truth.delta_c.mc_se : truth.delta_i.mc_se;
      r.add({s.scenario, static_cast<std::int64_t>(s.m), static_cast<std::int64_t>(s.n_sim),
             x.estimator, x.model, x.adjusted, x.target, x.truth, mc_se, opt_cell(x.bias_pct),
             opt_cell(x.mcsd), opt_cell(x.aese), opt_cell(x.coverage), opt_cell(x.coverage_lo),
             opt_cell(x.coverage_hi), static_cast<std::int64_t>(x.n_valid),
             static_cast<std::int64_t>(x.n_failed), x.se_policy});
    }
  }
  emit(std::move(r), c, app);
  return kExitOk;
}

int cmd_truth(const CLI::App* app, const CommonOptions& c, const SimOptions& s) {
  const auto dgp = dgp_from(s);
  dgp.validate();
  if (s.deltas.size() != 1) throw ValidationError("truth takes a single --delta");
  const auto pop = population_size(s.population);
  if (c.validate_only) {
    std::cerr << "configuration ok\n";
    return kExitOk;
  }
  const auto t = sim::true_estimands(dgp, pop, c.seed, c.threads);
  Report r;
  r.columns = {"scenario", "m", "target", "contrast", "value", "mc_se", "population"};
  const auto contrast_name = std::string(to_string(t.contrast));
  r.add({s.scenario, static_cast<std::int64_t>(s.m), std::string("Delta_C"), contrast_name,
         t.delta_c.value, t.delta_c.mc_se, static_cast<std::int64_t>(t.population)});
  r.add({s.scenario, static_cast<std::int64_t>(s.m), std::string("Delta_I"), contrast_name,
         t.delta_i.value, t.delta_i.mc_se, static_cast<std::int64_t>(t.population)});
  emit(std::move(r), c, app);
  return kExitOk;
}

int cmd_validate(const CLI::App* app, const CommonOptions& c, const DataOptions& d) {
  const auto table = read_csv_file(d.input);
  const auto data = load_trial(table, d.roles);
  const auto violations = validate(data);
  Report r;
  r.columns = {"cluster", "message"};
  for (const auto& v : violations) r.add({v.cluster_id, v.message});
  if (violations.empty()) {
    const auto design = build_design(d);
    assignment_probabilities(design, data);
    std::size_t treated = 0;
    for (const auto& cl : data.clusters) treated += cl.treatment == 1;
    std::cerr << "valid: " << data.num_clusters() << " clusters (" << treated << " treated), "
              << data.total_individuals() << " individuals\n";
  }
  if (!c.validate_only) emit(std::move(r), c, app);
  return violations.empty() ? kExitOk : kExitValidation;
}

void add_sim(CLI::App* app, SimOptions& s, bool full) {
  app->add_option("--scenario", s.scenario, "cont-noninf, cont-inf, bin-noninf, bin-inf, cont-ics, bin-ics")
      ->capture_default_str();
  app->add_option("--m", s.m, "Clusters per trial")->capture_default_str();
  app->add_option("--expected-total", s.expected_total, "Expected individuals per trial")
      ->capture_default_str();
  app->add_option("--gamma-variance", s.gamma_variance, "Random-intercept variance")
      ->capture_default_str();
  app->add_option("--treatment-probability", s.treatment_probability, "Assignment probability")
      ->capture_default_str();
  app->add_option("--population", s.population, "Super-population size for the truth")
      ->capture_default_str();
  if (!full) {
    app->add_option("--delta", s.deltas, "ICS effect size")->capture_default_str()->expected(1);
    return;
  }
  app->add_option("--delta", s.deltas, "ICS effect sizes")->delimiter(',')->capture_default_str();
  app->add_option("--n-sim", s.n_sim, "Replicates")->capture_default_str();
  app->add_option("--models", s.models, "Working models (default: scenario grid)")->delimiter(',');
  app->add_option("--adjustment", s.adjustment, "Covariate adjustment")
      ->capture_default_str()
      ->check(CLI::IsMember({"adjusted", "unadjusted", "both"}));
  app->add_option("--estimators", s.estimators, "Coef, MRS or both")
      ->capture_default_str()
      ->check(CLI::IsMember({"coef", "mrs", "both"}));
  app->add_option("--truth-seed", s.truth_seed, "Seed of the truth population (0: --seed)")
      ->capture_default_str();
  app->add_option("--max-failure-rate", s.max_failure_rate, "Abort above this failure fraction")
      ->capture_default_str();
  app->add_option("--level", s.level, "Confidence level; 1 - level is the ICS test size")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Model-robust standardization for cluster-randomized trials"};
  app.require_subcommand(1);
  app.set_version_flag("--version", MRSTD_CLI_VERSION);
  app.set_config("--config", "", "INI/TOML file; options go under a [subcommand] section");
  app.allow_config_extras(CLI::config_extras_mode::error);

  CommonOptions common;
  DataOptions data;
  ModelOptions models;
  SimOptions sim_opts;
  std::vector<std::string> estimands{"cluster", "individual"};
  std::string contrast_name = "difference";
  std::string scale_name = "difference";
  double level = 0.95;

  auto* analyze_cmd = app.add_subcommand("analyze", "MRS estimates of the cluster- and individual-average effects");
  add_common(analyze_cmd, common);
  add_data(analyze_cmd, data);
  add_models(analyze_cmd, models);
  analyze_cmd->add_option("--estimand", estimands, "cluster, individual, subgroup:K")
      ->delimiter(',')
      ->capture_default_str();
  analyze_cmd->add_option("--contrast", contrast_name, "difference, ratio, log-ratio, log-odds-ratio")
      ->capture_default_str();
  analyze_cmd->add_option("--level", level, "Confidence level")->capture_default_str();

  auto* ics_cmd = app.add_subcommand("ics-test", "Test for informative cluster size");
  add_common(ics_cmd, common);
  add_data(ics_cmd, data);
  add_models(ics_cmd, models);
  ics_cmd->add_option("--scale", scale_name, "difference, log, logit")->capture_default_str();

  auto* sim_cmd = app.add_subcommand("simulate", "Simulation study of the estimators");
  add_common(sim_cmd, common);
  add_sim(sim_cmd, sim_opts, true);
  sim_cmd->add_option("--likelihood-nodes", models.likelihood_nodes, "Quadrature nodes for mixed-model likelihoods")
      ->capture_default_str();

  auto* truth_cmd = app.add_subcommand("truth", "Super-population values of the estimands");
  add_common(truth_cmd, common);
  add_sim(truth_cmd, sim_opts, false);

  auto* validate_cmd = app.add_subcommand("validate", "Check an input file");
  add_common(validate_cmd, common);
  add_data(validate_cmd, data);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*analyze_cmd) return cmd_analyze(analyze_cmd, common, data, models, estimands, contrast_name, level);
    if (*ics_cmd) return cmd_ics(ics_cmd, common, data, models, scale_name);
    if (*sim_cmd) return cmd_simulate(sim_cmd, common, sim_opts, models);
    if (*truth_cmd) return cmd_truth(truth_cmd, common, sim_opts);
    if (*validate_cmd) return cmd_validate(validate_cmd, common, data);
  } catch (const sim::SimulationAbort& e) {
    std::cerr << "simulation aborted: " << e.what() << '\n';
    return kExitAbort;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const Error& e) {
    std::cerr << "estimation failed: " << e.what() << '\n';
    return kExitEstimation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitEstimation;
  }
  return kExitOk;
}
