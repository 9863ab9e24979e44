#ifndef MRSTD_SIMULATION_DGP_HPP
#define MRSTD_SIMULATION_DGP_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mrstd/core.hpp"
#include "mrstd/numeric.hpp"
#include "mrstd/randomization.hpp"

namespace mrstd::sim {

enum class Scenario { ContNonInf, ContInf, BinNonInf, BinInf, ContIcs, BinIcs };

inline std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::ContNonInf: return "cont-noninf";
    case Scenario::ContInf: return "cont-inf";
    case Scenario::BinNonInf: return "bin-noninf";
    case Scenario::BinInf: return "bin-inf";
    case Scenario::ContIcs: return "cont-ics";
    case Scenario::BinIcs: return "bin-ics";
  }
  return "?";
}

inline Scenario parse_scenario(std::string_view s) {
  for (auto sc : {Scenario::ContNonInf, Scenario::ContInf, Scenario::BinNonInf, Scenario::BinInf,
                  Scenario::ContIcs, Scenario::BinIcs})
    if (to_string(sc) == s) return sc;
  throw ValidationError("unknown scenario '" + std::string(s) + "'");
}

inline bool is_binary(Scenario s) {
  return s == Scenario::BinNonInf || s == Scenario::BinInf || s == Scenario::BinIcs;
}

/// Contrast in which the scenario's estimands are expressed.
inline Contrast scenario_contrast(Scenario s) {
  return is_binary(s) ? Contrast::LogOddsRatio : Contrast::Difference;
}

struct DgpSpec {
  Scenario scenario = Scenario::ContNonInf;
  int m = 30;
  double expected_total = 3000.0;  // m * E(N_i)
  int size_min = 0;                // 0: round(0.2 E(N_i))
  int size_max = 0;                // 0: round(1.8 E(N_i))
  double gamma_variance = 0.2;
  double delta = 0.0;              // Ics scenarios only
  double treatment_probability = 0.5;

  double expected_size() const { return expected_total / m; }
  int lower() const { return size_min > 0 ? size_min : static_cast<int>(std::lround(0.2 * expected_size())); }
  int upper() const { return size_max > 0 ? size_max : static_cast<int>(std::lround(1.8 * expected_size())); }

  void validate() const {
    if (m < 3) throw ValidationError("simulation needs m >= 3 clusters");
    if (!(expected_total > 0.0)) throw ValidationError("expected total sample size must be positive");
    if (lower() < 1 || upper() < lower()) throw ValidationError("invalid cluster-size support");
    if (!(gamma_variance >= 0.0)) throw ValidationError("random-intercept variance must be >= 0");
    if (!(delta >= 0.0)) throw ValidationError("delta must be >= 0");
    if (!(treatment_probability > 0.0 && treatment_probability < 1.0))
      throw ValidationError("treatment probability must lie in (0,1)");
  }
};

/// Generator for replicate `stream` of a run seeded with `seed`.
inline std::mt19937_64 make_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    0x6d727374u};
  return std::mt19937_64(seq);
}

/// Covariates and random effect of one cluster, before treatment.
struct ClusterDraw {
  int n = 0;
  double h1 = 0.0;
  double h2 = 0.0;
  double gamma = 0.0;
  std::vector<double> x1;
  std::vector<double> x2;
};

namespace detail {

inline double bernoulli(std::mt19937_64& rng, double p) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p ? 1.0 : 0.0;
}

inline double normal(std::mt19937_64& rng, double mean, double variance) {
  return std::normal_distribution<double>(mean, std::sqrt(variance))(rng);
}

}  // namespace detail

inline ClusterDraw draw_cluster(const DgpSpec& spec, std::mt19937_64& rng) {
  using detail::bernoulli;
  using detail::normal;
  ClusterDraw c;
  const double e = spec.expected_size();
  c.n = std::uniform_int_distribution<int>(spec.lower(), spec.upper())(rng);
  const double n = c.n;
  c.x1.resize(static_cast<std::size_t>(c.n));
  c.x2.resize(static_cast<std::size_t>(c.n));
  switch (spec.scenario) {
    case Scenario::ContNonInf:
    case Scenario::ContIcs:
    case Scenario::ContInf: {
      const double s = spec.scenario == Scenario::ContInf ? n : e;
      c.h1 = bernoulli(rng, numeric::normal_cdf(std::sin(s)));
      c.h2 = normal(rng, 2.0 + c.h1 * s / 10.0, 9.0);
      for (std::size_t j = 0; j < c.x1.size(); ++j) {
        c.x1[j] = normal(rng, c.h1 * c.h2 + s / 100.0, 16.0);
        c.x2[j] = bernoulli(rng, numeric::expit(std::log(s) * c.x1[j] * c.h1 + c.h2));
      }
      break;
    }
    case Scenario::BinNonInf:
    case Scenario::BinIcs: {
      c.h1 = bernoulli(rng, 0.5);
      c.h2 = normal(rng, 3.0 + c.h1, 1.0);
      for (std::size_t j = 0; j < c.x1.size(); ++j) {
        c.x1[j] = normal(rng, c.h1 + c.h2 / 20.0 + 1.0, 16.0);
        c.x2[j] = bernoulli(rng, numeric::expit(4.0 * c.h1 * c.x1[j] + c.h2));
      }
      break;
    }
    case Scenario::BinInf: {
      c.h1 = bernoulli(rng, 0.5);
      c.h2 = normal(rng, 2.0 + c.h1 + n / e, 1.0);
      for (std::size_t j = 0; j < c.x1.size(); ++j) {
        c.x1[j] = normal(rng, c.h1 + c.h2 / 20.0 + n / 100.0, 16.0);
        c.x2[j] = bernoulli(rng, numeric::expit(std::log(n) * c.h1 * c.x1[j] + c.h2));
      }
      break;
    }
  }
  c.gamma = normal(rng, 0.0, spec.gamma_variance);
  return c;
}

/// E[Y_ij(a) | covariates, N_i, gamma_i].
inline double conditional_mean(const DgpSpec& spec, const ClusterDraw& c, std::size_t j, int a) {
  const double e = spec.expected_size();
  const double n = c.n;
  const double x1 = c.x1[j], x2 = c.x2[j];
  const double ga = c.gamma * a;
  switch (spec.scenario) {
    case Scenario::ContNonInf:
      return 3.0 + c.h1 * x1 * x1 / (5.0 * e) + std::cos(c.h2) * x2 +
             std::abs(c.h2) * std::sin(x2) - 3.0 * a + ga;
    case Scenario::ContInf: {
      const double g = n * n * std::log(n) / (e * e);
      return c.h1 * x1 * x1 / (5.0 * n) - g + std::cos(c.h2) * x2 +
             std::abs(c.h2) * std::sin(x2) + g * a + ga;
    }
    case Scenario::ContIcs: {
      const double g = spec.delta * n * n * std::log(n) / (e * e) + 1.0;
      return c.h1 * x1 * x1 / (5.0 * e) + std::cos(c.h2) * x2 + std::abs(c.h2) * std::sin(x2) +
             g * a + ga;
    }
    case Scenario::BinNonInf:
      return numeric::expit(-0.8 + x1 * x1 / 100.0 + c.h1 + std::cos(c.h2) * x2 +
                            std::abs(c.h2) / 5.0 + 0.8 * a + ga);
    case Scenario::BinInf: {
      const double g = n * n * std::log(n) / (5.0 * e * e);
      return numeric::expit(-g + x1 * x1 / (2.0 * n) + c.h1 + std::cos(c.h2) * x2 +
                            std::abs(c.h2) / 5.0 + g * a + ga);
    }
    case Scenario::BinIcs: {
      const double g = spec.delta * n * n * std::log(n / e) / (5.0 * e * e) + 1.0;
      return numeric::expit(x1 * x1 / (2.0 * e) + c.h1 / 2.0 + std::cos(c.h2) * x2 +
                            std::abs(c.h2) / 10.0 + g * a + ga);
    }
  }
  return 0.0;
}

/// Both potential outcomes of every individual in one cluster.
struct PotentialOutcomes {
  ClusterDraw cluster;
  std::vector<double> y0;
  std::vector<double> y1;
};

inline PotentialOutcomes draw_potential_outcomes(const DgpSpec& spec, std::mt19937_64& rng) {
  PotentialOutcomes po;
  po.cluster = draw_cluster(spec, rng);
  const auto n = static_cast<std::size_t>(po.cluster.n);
  po.y0.resize(n);
  po.y1.resize(n);
  const bool binary = is_binary(spec.scenario);
  for (std::size_t j = 0; j < n; ++j) {
    for (int a = 0; a < 2; ++a) {
      const double mean = conditional_mean(spec, po.cluster, j, a);
      const double y = binary ? detail::bernoulli(rng, mean) : detail::normal(rng, mean, 1.0);
      (a == 0 ? po.y0 : po.y1)[j] = y;
    }
  }
  return po;
}

namespace detail {

inline ClusterRecord observed_record(const PotentialOutcomes& po, int index, int a) {
  ClusterRecord rec;
  rec.id = "c" + std::to_string(index + 1);
  rec.treatment = a;
  rec.size = static_cast<std::size_t>(po.cluster.n);
  rec.outcomes = a == 1 ? po.y1 : po.y0;
  rec.covariates.resize(po.cluster.n, 2);
  for (int j = 0; j < po.cluster.n; ++j) {
    rec.covariates(j, 0) = po.cluster.x1[static_cast<std::size_t>(j)];
    rec.covariates(j, 1) = po.cluster.x2[static_cast<std::size_t>(j)];
  }
  rec.cluster_covariates = Eigen::Vector2d(po.cluster.h1, po.cluster.h2);
  return rec;
}

}  // namespace detail

/// One simulated trial: cluster sizes, covariates, A_i ~ Bernoulli(p) and
/// observed outcomes Y = A Y(1) + (1 - A) Y(0). Deterministic given the seed.
/// Individual covariates are (X1, X2), cluster covariates (H1, H2).
inline TrialData generate_trial(const DgpSpec& spec, std::uint64_t replicate_seed) {
  spec.validate();
  auto rng = make_rng(replicate_seed);
  TrialData data;
  data.clusters.reserve(static_cast<std::size_t>(spec.m));
  for (int i = 0; i < spec.m; ++i) {
    const auto po = draw_potential_outcomes(spec, rng);
    const int a = static_cast<int>(detail::bernoulli(rng, spec.treatment_probability));
    data.clusters.push_back(detail::observed_record(po, i, a));
  }
  return data;
}

struct ConstrainedTrial {
  TrialData data;
  ConstrainedDesign design;
};

/// Covariate-constrained randomization: every assignment with floor(m/2)
/// treated clusters is scored by the standardized squared arm difference in
/// (H1, H2, N); the `keep` fraction with the best balance forms the scheme
/// matrix and one of its rows is drawn uniformly. Requires m <= 20.
inline ConstrainedTrial generate_constrained_trial(const DgpSpec& spec, std::uint64_t replicate_seed,
                                                   double keep = 0.1) {
  spec.validate();
  if (spec.m > 20) throw ValidationError("constrained randomization enumerates schemes; m must be <= 20");
  if (!(keep > 0.0 && keep <= 1.0)) throw ValidationError("kept fraction must lie in (0,1]");
  auto rng = make_rng(replicate_seed);
  const int m = spec.m;
  std::vector<PotentialOutcomes> draws;
  Eigen::MatrixXd z(m, 3);
  for (int i = 0; i < m; ++i) {
    draws.push_back(draw_potential_outcomes(spec, rng));
    const auto& c = draws.back().cluster;
    z.row(i) << c.h1, c.h2, static_cast<double>(c.n);
  }
  const Eigen::RowVectorXd mean = z.colwise().mean();
  const Eigen::RowVectorXd sd =
      ((z.rowwise() - mean).colwise().squaredNorm() / (m - 1.0)).cwiseSqrt().cwiseMax(1e-12);
  const Eigen::MatrixXd zs = (z.rowwise() - mean).array().rowwise() / sd.array();

  const int treated = m / 2;
  std::vector<std::pair<double, std::uint32_t>> scored;
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    if (std::popcount(mask) != treated) continue;
    Eigen::RowVectorXd diff = Eigen::RowVectorXd::Zero(3);
    for (int i = 0; i < m; ++i)
      diff += ((mask >> i) & 1u ? 1.0 / treated : -1.0 / (m - treated)) * zs.row(i);
    scored.emplace_back(diff.squaredNorm(), mask);
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  const auto kept = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::ceil(keep * static_cast<double>(scored.size()))));
  ConstrainedTrial out;
  for (std::size_t r = 0; r < kept; ++r) {
    std::vector<std::uint8_t> row(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) row[static_cast<std::size_t>(i)] = (scored[r].second >> i) & 1u;
    out.design.schemes.push_back(std::move(row));
  }
  const auto& chosen =
      out.design.schemes[std::uniform_int_distribution<std::size_t>(0, kept - 1)(rng)];
  for (int i = 0; i < m; ++i)
    out.data.clusters.push_back(
        detail::observed_record(draws[static_cast<std::size_t>(i)], i, chosen[static_cast<std::size_t>(i)]));
  return out;
}

struct TrueValue {
  double value = 0.0;
  double mc_se = 0.0;
};

struct TrueEstimands {
  TrueValue delta_c;
  TrueValue delta_i;
  Contrast contrast = Contrast::Difference;
  std::size_t population = 0;
};

/// Super-population truth. Each cluster contributes its conditional mean
/// potential outcomes given covariates, size and random effect, which has
/// the same expectation as averaging drawn outcomes and less noise.
/// Monte Carlo SEs come from the delta method. The population is generated
/// in fixed blocks of 10^4 clusters with block-specific seeds, so the result
/// does not depend on `threads`.
inline TrueEstimands true_estimands(const DgpSpec& spec, std::size_t population,
                                    std::uint64_t seed, unsigned threads = 1) {
  spec.validate();
  if (population < 10000) throw ValidationError("super-population size must be at least 10^4");
  constexpr std::size_t kBlock = 10000;
  const std::size_t blocks = (population + kBlock - 1) / kBlock;
  std::vector<double> mu1(population), mu0(population), sizes(population);
  numeric::parallel_for(blocks, threads, [&](std::size_t b) {
    auto rng = make_rng(seed ^ (0x9e3779b97f4a7c15ULL * (b + 1)));
    const std::size_t end = std::min(population, (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) {
      const auto c = draw_cluster(spec, rng);
      double s1 = 0.0, s0 = 0.0;
      for (std::size_t j = 0; j < static_cast<std::size_t>(c.n); ++j) {
        s1 += conditional_mean(spec, c, j, 1);
        s0 += conditional_mean(spec, c, j, 0);
      }
      mu1[i] = s1 / c.n;
      mu0[i] = s0 / c.n;
      sizes[i] = c.n;
    }
  });

  const Eigen::Map<const Eigen::ArrayXd> a1(mu1.data(), static_cast<Eigen::Index>(population));
  const Eigen::Map<const Eigen::ArrayXd> a0(mu0.data(), static_cast<Eigen::Index>(population));
  const Eigen::Map<const Eigen::ArrayXd> n(sizes.data(), static_cast<Eigen::Index>(population));
  const double pop = static_cast<double>(population);
  const Contrast f = scenario_contrast(spec.scenario);

  auto gradient = [&](double m1, double m0) {
    Eigen::Vector2d g;
    if (f == Contrast::Difference) g << 1.0, -1.0;
    else g << 1.0 / (m1 * (1.0 - m1)), -1.0 / (m0 * (1.0 - m0));
    return g;
  };
  // Mean of (u1, u0) estimated by the sample mean: SE of f via delta method.
  auto summarize_pair = [&](const Eigen::ArrayXd& u1, const Eigen::ArrayXd& u0, double m1,
                            double m0) {
    Eigen::Matrix2d cov;
    const Eigen::ArrayXd c1 = u1 - u1.mean(), c0 = u0 - u0.mean();
    cov(0, 0) = (c1 * c1).sum();
    cov(1, 1) = (c0 * c0).sum();
    cov(0, 1) = cov(1, 0) = (c1 * c0).sum();
    cov /= (pop - 1.0) * pop;
    const auto g = gradient(m1, m0);
    return TrueValue{contrast(f, m1, m0).estimate, std::sqrt(g.dot(cov * g))};
  };

  TrueEstimands out;
  out.contrast = f;
  out.population = population;
  out.delta_c = summarize_pair(a1, a0, a1.mean(), a0.mean());
  const double nbar = n.mean();
  const double i1 = (n * a1).sum() / n.sum();
  const double i0 = (n * a0).sum() / n.sum();
  // ratio-estimator linearization: N_i (mu_i(a) - mu_I(a)) / mean N
  out.delta_i = summarize_pair(n * (a1 - i1) / nbar, n * (a0 - i0) / nbar, i1, i0);
  return out;
}

}  // namespace mrstd::sim

#endif  // MRSTD_SIMULATION_DGP_HPP
