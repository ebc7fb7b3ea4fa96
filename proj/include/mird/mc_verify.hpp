#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mird/diffusion.hpp"

namespace mird {

/// One row of a verification report.
struct Check {
  std::string name;
  std::string statistic;
  double expected = 0.0;
  double observed = 0.0;
  double z = 0.0;  ///< NaN when the statistic is not a z-test
  bool pass = false;
};

struct VerifyReport {
  std::vector<Check> checks;
  bool all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }
  void append(const VerifyReport& o) { checks.insert(checks.end(), o.checks.begin(), o.checks.end()); }
};

inline void write_csv(std::ostream& os, const VerifyReport& r) {
  os << "check,statistic,expected,observed,z,verdict\n";
  os.precision(10);
  for (const Check& c : r.checks) {
    os << c.name << ',' << c.statistic << ',' << c.expected << ',' << c.observed << ',';
    if (std::isnan(c.z)) {
      os << "";
    } else {
      os << c.z;
    }
    os << ',' << (c.pass ? "pass" : "fail") << '\n';
  }
}

/// Scalar n-condition setup: every pixel of a 1 x N raster is an independent sample.
struct ScalarScenario {
  double i_tau = 0.3;
  std::vector<double> conditions{1.0, 0.0};
};

struct McOptions {
  std::size_t samples = 100000;
  std::uint64_t seed = 12345;
  double z_limit = 4.0;
  double variance_band = 0.03;           ///< composed-step variance ratio tolerance
  double posterior_variance_band = 0.05; ///< regression residual variance tolerance
};

inline constexpr std::size_t kMinVerifySamples = 10000;

namespace detail {

inline ConditionSet scalar_conditions(const ScalarScenario& sc, std::size_t n) {
  std::vector<Image> imgs;
  for (double j : sc.conditions) imgs.emplace_back(1, static_cast<int>(n), 1, j);
  return ConditionSet(std::move(imgs));
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;  ///< unbiased
};

inline Moments moments(std::span<const double> v) {
  Moments m;
  for (double d : v) m.mean += d;
  m.mean /= static_cast<double>(v.size());
  for (double d : v) m.var += (d - m.mean) * (d - m.mean);
  m.var /= static_cast<double>(v.size() - 1);
  return m;
}

inline std::vector<int> probe_steps(const NoiseSchedule& s) {
  std::vector<int> ts{2, std::max(2, s.steps() / 2), s.steps()};
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  return ts;
}

}  // namespace detail

/// Checks the ladder invariants and, when given, its configured endpoints.
inline VerifyReport verify_schedule(const NoiseSchedule& s, std::optional<double> eta_1 = std::nullopt,
                                    std::optional<double> eta_T = std::nullopt) {
  VerifyReport r;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  double min_step = std::numeric_limits<double>::infinity();
  for (int t = 1; t <= s.steps(); ++t) min_step = std::min(min_step, s.eta_sum(t) - s.eta_sum(t - 1));
  r.checks.push_back({"schedule_monotone", "min_increment", 0.0, min_step, nan, min_step > 0.0});
  r.checks.push_back({"schedule_origin", "eta_sum_0", 0.0, s.eta_sum(0), nan, s.eta_sum(0) == 0.0});
  if (eta_1) {
    const double o = s.eta_sum(1);
    r.checks.push_back({"schedule_endpoint_first", "eta_sum_1", *eta_1, o, nan, std::abs(o - *eta_1) <= 1e-12});
  }
  if (eta_T) {
    const double o = s.eta_sum(s.steps());
    r.checks.push_back({"schedule_endpoint_last", "eta_sum_T", *eta_T, o, nan, std::abs(o - *eta_T) <= 1e-12});
  }
  double worst = 0.0;
  for (int t = 1; t <= s.steps(); ++t) {
    for (std::size_t i = 0; i < s.conditions(); ++i) {
      double acc = 0.0;
      for (int k = 1; k <= t; ++k) acc += s.alpha(k, i);
      worst = std::max(worst, std::abs(acc - s.eta(t, i)));
    }
  }
  r.checks.push_back({"schedule_telescoping", "max_abs_error", 0.0, worst, nan, worst <= 1e-12});
  return r;
}

/// Composition of forward steps vs the closed-form marginal, and regression of
/// x_{t-1} on x_t vs the closed-form posterior.
inline VerifyReport mc_verify(const NoiseSchedule& sched, const ScalarScenario& sc, const McOptions& opt = {}) {
  if (opt.samples < kMinVerifySamples) {
    throw InvalidInput("mc_verify: at least " + std::to_string(kMinVerifySamples) + " samples required");
  }
  if (sc.conditions.size() != sched.conditions()) throw InvalidInput("mc_verify: scenario/schedule condition count mismatch");
  const std::size_t n = opt.samples;
  const ConditionSet conds = detail::scalar_conditions(sc, n);
  const Image clean(1, static_cast<int>(n), 1, sc.i_tau);
  VerifyReport r;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  for (int t : detail::probe_steps(sched)) {
    Rng rng(opt.seed, static_cast<std::uint64_t>(t));
    Image x = clean;
    for (int k = 1; k <= t; ++k) x = forward_step(x, clean, conds, sched, k, rng);
    const auto m = detail::moments(x.data());

    double drift = 0.0;
    for (std::size_t i = 0; i < sc.conditions.size(); ++i) drift += sched.eta(t, i) * (sc.conditions[i] - sc.i_tau);
    const double mean_cf = sc.i_tau + drift;
    const double var_cf = sched.kappa() * sched.kappa() * sched.eta_sum(t);
    const double z_mean = (m.mean - mean_cf) / std::sqrt(var_cf / static_cast<double>(n));
    const double ratio = m.var / var_cf;
    const double z_var = (ratio - 1.0) / std::sqrt(2.0 / static_cast<double>(n - 1));
    const std::string tag = "_t" + std::to_string(t);
    r.checks.push_back({"marginal_mean" + tag, "mean", mean_cf, m.mean, z_mean, std::abs(z_mean) <= opt.z_limit});
    r.checks.push_back({"marginal_variance" + tag, "variance_ratio", 1.0, ratio, z_var,
                        std::abs(ratio - 1.0) <= opt.variance_band});
  }

  for (int t : detail::probe_steps(sched)) {
    if (t < 2) continue;
    Rng rng(opt.seed ^ 0x5eedULL, static_cast<std::uint64_t>(t));
    const Image prev = forward_marginal(clean, conds, sched, t - 1, rng);
    const Image cur = forward_step(prev, clean, conds, sched, t, rng);
    const auto mx = detail::moments(cur.data());
    const auto my = detail::moments(prev.data());
    double cov = 0.0;
    for (std::size_t k = 0; k < n; ++k) cov += (cur.data()[k] - mx.mean) * (prev.data()[k] - my.mean);
    cov /= static_cast<double>(n - 1);
    const double slope = cov / mx.var;
    const double intercept = my.mean - slope * mx.mean;
    double rss = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double e = prev.data()[k] - intercept - slope * cur.data()[k];
      rss += e * e;
    }
    const double resid_var = rss / static_cast<double>(n - 2);

    // Closed-form line: mean(x_t) evaluated at x_t = 0 and x_t = 1.
    const Image zero(1, 1, 1, 0.0), one(1, 1, 1, 1.0), i_hat(1, 1, 1, sc.i_tau);
    const ConditionSet c1 = detail::scalar_conditions(sc, 1);
    const Posterior p0 = posterior_stats(zero, i_hat, c1, sched, t);
    const Posterior p1 = posterior_stats(one, i_hat, c1, sched, t);
    const double slope_cf = p1.mean.data()[0] - p0.mean.data()[0];
    const double intercept_cf = p0.mean.data()[0];
    const double sigma2 = p0.sigma2;

    const double se_slope = std::sqrt(sigma2 / (static_cast<double>(n) * mx.var));
    const double se_icpt = std::sqrt(sigma2 * (1.0 / n + mx.mean * mx.mean / (static_cast<double>(n) * mx.var)));
    const double z_slope = (slope - slope_cf) / se_slope;
    const double z_icpt = (intercept - intercept_cf) / se_icpt;
    const double vratio = resid_var / sigma2;
    const std::string tag = "_t" + std::to_string(t);
    r.checks.push_back({"posterior_slope" + tag, "slope", slope_cf, slope, z_slope, std::abs(z_slope) <= opt.z_limit});
    r.checks.push_back(
        {"posterior_intercept" + tag, "intercept", intercept_cf, intercept, z_icpt, std::abs(z_icpt) <= opt.z_limit});
    r.checks.push_back({"posterior_variance" + tag, "residual_variance_ratio", 1.0, vratio, nan,
                        std::abs(vratio - 1.0) <= opt.posterior_variance_band});
  }
  return r;
}

/// n = 1: the closed-form posterior must reduce to the single-condition
/// residual-shifting posterior over random ladders.
inline VerifyReport verify_single_condition_reduction(std::size_t trials, std::uint64_t seed, double tol = 1e-10) {
  Rng rng(seed, 0xd1ULL);
  double worst_mu = 0.0, worst_var = 0.0;
  for (std::size_t k = 0; k < trials; ++k) {
    const double eta_t = 0.01 + 0.98 * rng.uniform();
    const double eta_prev = eta_t * (0.001 + 0.998 * rng.uniform());
    const double kappa = 0.1 + 3.0 * rng.uniform();
    const double x_t = -3.0 + 6.0 * rng.uniform();
    const double x0 = rng.uniform();
    const double j = rng.uniform();
    const posterior_scalar::Ladders l{{eta_t}, {eta_prev}};
    const double mu = posterior_scalar::mean(l, x_t, x0, {j});
    const double alpha = eta_t - eta_prev;
    const double mu_ref = eta_prev / eta_t * x_t + alpha / eta_t * x0;
    const double var = posterior_scalar::variance(l, kappa);
    const double var_ref = kappa * kappa * eta_prev * alpha / eta_t;
    worst_mu = std::max(worst_mu, std::abs(mu - mu_ref));
    worst_var = std::max(worst_var, std::abs(var - var_ref));
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  VerifyReport r;
  r.checks.push_back({"single_condition_mean", "max_abs_error", 0.0, worst_mu, nan, worst_mu <= tol});
  r.checks.push_back({"single_condition_variance", "max_abs_error", 0.0, worst_var, nan, worst_var <= tol});
  return r;
}

}  // namespace mird
