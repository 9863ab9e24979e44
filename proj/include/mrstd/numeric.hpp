#ifndef MRSTD_NUMERIC_HPP
#define MRSTD_NUMERIC_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/tools/minima.hpp>

namespace mrstd {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data or configuration violates a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A mean or contrast fell outside the domain of the requested function.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A working model could not be estimated (rank deficiency, non-convergence).
class EstimationError : public Error {
 public:
  using Error::Error;
};

namespace numeric {

// Linked predictors are clamped to this magnitude before exponentiation.
inline constexpr double kEtaClamp = 700.0;

inline double clamp_eta(double eta) { return std::clamp(eta, -kEtaClamp, kEtaClamp); }

inline double expit(double x) {
  x = clamp_eta(x);
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// log(1 + exp(x)) without overflow.
inline double log1pexp(double x) {
  if (x > 35.0) return x;
  if (x < -35.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Upper quantile t_{p, df} of Student's t distribution.
inline double t_quantile(double p, double df) {
  boost::math::students_t_distribution<double> dist(df);
  return boost::math::quantile(dist, p);
}

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
inline double t_two_sided_p(double statistic, double df) {
  if (!std::isfinite(statistic)) return 0.0;
  boost::math::students_t_distribution<double> dist(df);
  const double tail = boost::math::cdf(boost::math::complement(dist, std::abs(statistic)));
  return std::clamp(2.0 * tail, 0.0, 1.0);
}

struct ScalarMinimum {
  double argmin;
  double value;
  std::uintmax_t iterations;
};

/// Brent's method on [lo, hi].
template <class F>
ScalarMinimum minimize_scalar(F&& f, double lo, double hi, int bits = 40,
                              std::uintmax_t max_iter = 200) {
  std::uintmax_t it = max_iter;
  auto [x, fx] = boost::math::tools::brent_find_minima(f, lo, hi, bits, it);
  return {x, fx, it};
}

/// Gauss-Hermite rule for integrals of the form \int e^{-x^2} f(x) dx.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::size_t size() const { return nodes.size(); }
};

namespace detail {

// Nodes start from the Golub-Welsch eigenvalues and are polished by Newton
// steps on the orthonormal Hermite recurrence, which also yields the weights.
inline GaussHermiteRule build_gauss_hermite(int n) {
  if (n < 1) throw ValidationError("Gauss-Hermite rule needs at least one node");
  GaussHermiteRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  if (n == 1) {
    rule.nodes[0] = 0.0;
    rule.weights[0] = std::sqrt(std::numbers::pi);
    return rule;
  }
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(n - 1);
  for (int k = 1; k < n; ++k) sub[k - 1] = std::sqrt(0.5 * k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  const double pim4 = std::pow(std::numbers::pi, -0.25);
  for (int i = 0; i < n; ++i) {
    double x = es.eigenvalues()[i];
    double pp = 0.0;
    for (int iter = 0; iter < 20; ++iter) {
      double p1 = pim4, p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = x * std::sqrt(2.0 / j) * p2 - std::sqrt(static_cast<double>(j - 1) / j) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double step = p1 / pp;
      x -= step;
      if (std::abs(step) < 1e-15 * std::max(1.0, std::abs(x))) break;
    }
    rule.nodes[i] = x;
    rule.weights[i] = 2.0 / (pp * pp);
  }
  return rule;
}

}  // namespace detail

/// Cached, thread-safe access to the n-node rule.
inline const GaussHermiteRule& gauss_hermite(int n) {
  static std::mutex mutex;
  static std::map<int, GaussHermiteRule> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, detail::build_gauss_hermite(n)).first;
  return it->second;
}

/// E[f(mu + sigma Z)] for Z ~ N(0,1), by non-adaptive Gauss-Hermite quadrature.
template <class F>
double normal_expectation(F&& f, double mu, double sigma, int nodes) {
  const auto& rule = gauss_hermite(nodes);
  double acc = 0.0;
  for (std::size_t k = 0; k < rule.size(); ++k)
    acc += rule.weights[k] * f(mu + std::numbers::sqrt2 * sigma * rule.nodes[k]);
  return acc / std::sqrt(std::numbers::pi);
}

inline double log_sum_exp(const std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

struct BfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Quasi-Newton minimization with backtracking (Armijo) line search.
/// `fg(x, grad)` returns f(x) and writes the gradient into `grad`.
/// `h0` is the initial inverse-Hessian approximation (identity when empty).
template <class FG>
BfgsResult minimize_bfgs(FG&& fg, Eigen::VectorXd x, int max_iter = 200, double gtol = 1e-6,
                         const Eigen::MatrixXd& h0 = {}) {
  const Eigen::Index n = x.size();
  Eigen::VectorXd g(n), g_new(n);
  double f = fg(x, g);
  if (!std::isfinite(f)) throw EstimationError("objective is not finite at the starting point");
  Eigen::MatrixXd h = h0.rows() == n ? h0 : Eigen::MatrixXd::Identity(n, n);
  BfgsResult res;
  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it;
    if (g.lpNorm<Eigen::Infinity>() < gtol) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd dir = -h * g;
    double slope = g.dot(dir);
    if (slope >= 0.0) {
      h.setIdentity();
      dir = -g;
      slope = -g.squaredNorm();
    }
    double step = 1.0;
    Eigen::VectorXd x_new;
    double f_new = f;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = x + step * dir;
      f_new = fg(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // no further decrease is representable; accept the current point
      res.converged = g.lpNorm<Eigen::Infinity>() < std::sqrt(gtol);
      break;
    }
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd i_rsy = Eigen::MatrixXd::Identity(n, n) - rho * s * y.transpose();
      h = i_rsy * h * i_rsy.transpose() + rho * s * s.transpose();
    }
    x = x_new;
    const double f_old = f;
    f = f_new;
    g = g_new;
    res.iterations = it + 1;
    if (std::abs(f_old - f) < 1e-14 * (1.0 + std::abs(f)) &&
        g.lpNorm<Eigen::Infinity>() < std::sqrt(gtol)) {
      res.converged = true;
      break;
    }
  }
  if (g.lpNorm<Eigen::Infinity>() < gtol) res.converged = true;
  res.x = x;
  res.value = f;
  res.gradient_norm = g.lpNorm<Eigen::Infinity>();
  return res;
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// visited exactly once; callers write results into per-index slots.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  pool.clear();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace numeric
}  // namespace mrstd

#endif  // MRSTD_NUMERIC_HPP
