#pragma once

#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mird/error.hpp"

namespace mird {

struct ScheduleConfig {
  int steps = 20;            ///< T
  double kappa = 2.0;
  double p = 0.3;            ///< growth exponent of the ladder
  double eta_T_sum = 0.99;   ///< terminal shift
  std::vector<double> weights{0.5, 0.5};
  /// Replaces min((0.04 / kappa)^2, 0.001) as the first rung when set.
  std::optional<double> eta_1_sum;
};

/// Default first rung of the ladder for a given kappa.
inline double first_rung(double kappa) {
  const double r = 0.04 / kappa;
  return std::min(r * r, 0.001);
}

/// Exponent of b_0 at step t: ((t - 1) / (T - 1))^p * (T - 1).
inline double ladder_exponent(int t, int steps, double p) {
  return std::pow(static_cast<double>(t - 1) / (steps - 1), p) * (steps - 1);
}

/// Geometric base so that the square-root ladder reaches eta_T from eta_1.
inline double ladder_base(double eta_1, double eta_T, int steps) {
  return std::exp(std::log(eta_T / eta_1) / (2.0 * (steps - 1)));
}

/// Partition (a_{I0}, a_{I1}) = (1 - tau, tau) for the two-frame case.
inline std::vector<double> partition_weights(double tau_hat) {
  if (!(tau_hat >= 0.0 && tau_hat <= 1.0)) throw InvalidInput("partition_weights: tau must lie in [0,1]");
  return {1.0 - tau_hat, tau_hat};
}

/// Shifting ladder for n conditions. Step 0 is the clean state (all eta zero);
/// steps 1..T follow the square-root geometric schedule, split across
/// conditions by a fixed weight partition.
class NoiseSchedule {
 public:
  /// Wraps an explicit total ladder (index 0..T). `validate = false` exists so
  /// verification tooling can be pointed at deliberately broken ladders.
  static NoiseSchedule from_ladder(std::vector<double> eta_sum, std::vector<double> weights, double kappa,
                                   bool validate = true) {
    NoiseSchedule s;
    s.eta_sum_ = std::move(eta_sum);
    s.weights_ = std::move(weights);
    s.kappa_ = kappa;
    if (validate) s.check();
    return s;
  }

  int steps() const noexcept { return static_cast<int>(eta_sum_.size()) - 1; }
  std::size_t conditions() const noexcept { return weights_.size(); }
  double kappa() const noexcept { return kappa_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::vector<double>& eta_sum() const noexcept { return eta_sum_; }

  double eta_sum(int t) const { return eta_sum_.at(t); }
  double eta(int t, std::size_t i) const { return weights_.at(i) * eta_sum_.at(t); }
  /// eta_i(t) - eta_i(t-1); alpha_i(1) = eta_i(1) because eta(0) = 0.
  double alpha(int t, std::size_t i) const { return eta(t, i) - eta(t - 1, i); }
  double alpha_sum(int t) const { return eta_sum_.at(t) - eta_sum_.at(t - 1); }

  /// Posterior variance kappa^2 * S(t-1) * A(t) / S(t); zero at t = 1.
  double sigma2(int t) const { return kappa_ * kappa_ * eta_sum(t - 1) * alpha_sum(t) / eta_sum(t); }

  NoiseSchedule with_kappa(double kappa) const {
    NoiseSchedule s = *this;
    s.kappa_ = kappa;
    return s;
  }

  /// Empty string when the ladder satisfies every invariant, otherwise the first violation.
  std::string violation() const {
    if (eta_sum_.size() < 3) return "ladder needs at least two steps";
    if (eta_sum_[0] != 0.0) return "eta_sum(0) must be 0";
    for (std::size_t t = 1; t < eta_sum_.size(); ++t) {
      if (!std::isfinite(eta_sum_[t])) return "non-finite eta_sum at t=" + std::to_string(t);
      if (!(eta_sum_[t] > eta_sum_[t - 1])) return "eta_sum not strictly increasing at t=" + std::to_string(t);
    }
    if (!(eta_sum_.back() < 1.0)) return "terminal eta_sum must be < 1";
    if (!(kappa_ >= 0.0) || !std::isfinite(kappa_)) return "kappa must be finite and non-negative";
    if (weights_.empty()) return "no conditions";
    double s = 0.0;
    for (double a : weights_) {
      if (!(a >= 0.0)) return "negative partition weight";
      s += a;
    }
    if (std::abs(s - 1.0) > 1e-12) return "partition weights must sum to 1";
    return {};
  }

 private:
  void check() const {
    if (auto v = violation(); !v.empty()) throw InvalidInput("NoiseSchedule: " + v);
  }

  std::vector<double> eta_sum_;
  std::vector<double> weights_;
  double kappa_ = 0.0;
};

inline NoiseSchedule build_schedule(const ScheduleConfig& cfg) {
  if (cfg.steps < 2) throw InvalidInput("ScheduleConfig: steps must be >= 2");
  if (!(cfg.kappa > 0.0)) throw InvalidInput("ScheduleConfig: kappa must be positive");
  if (!(cfg.p > 0.0)) throw InvalidInput("ScheduleConfig: p must be positive");
  if (!(cfg.eta_T_sum > 0.0 && cfg.eta_T_sum < 1.0)) throw InvalidInput("ScheduleConfig: eta_T_sum must lie in (0,1)");
  const double eta_1 = cfg.eta_1_sum.value_or(first_rung(cfg.kappa));
  if (!(eta_1 > 0.0 && eta_1 < cfg.eta_T_sum)) {
    throw InvalidInput("ScheduleConfig: first rung must lie in (0, eta_T_sum)");
  }
  const double sum = std::accumulate(cfg.weights.begin(), cfg.weights.end(), 0.0);
  for (double a : cfg.weights) {
    if (!(a >= 0.0)) throw InvalidInput("ScheduleConfig: weights must be non-negative");
  }
  if (cfg.weights.empty() || std::abs(sum - 1.0) > 1e-12) throw InvalidInput("ScheduleConfig: weights must sum to 1");

  const int T = cfg.steps;
  const double b0 = ladder_base(eta_1, cfg.eta_T_sum, T);
  const double root_1 = std::sqrt(eta_1);
  std::vector<double> ladder(T + 1, 0.0);
  ladder[1] = eta_1;
  for (int t = 2; t < T; ++t) {
    const double root = root_1 * std::pow(b0, ladder_exponent(t, T, cfg.p));
    ladder[t] = root * root;
  }
  ladder[T] = cfg.eta_T_sum;
  return NoiseSchedule::from_ladder(std::move(ladder), cfg.weights, cfg.kappa);
}

}  // namespace mird
