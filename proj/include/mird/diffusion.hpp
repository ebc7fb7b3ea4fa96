#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mird/image.hpp"
#include "mird/rng.hpp"
#include "mird/schedule.hpp"

namespace mird {

/// Ordered condition images J_1..J_n (for interpolation: I_0, I_1).
class ConditionSet {
 public:
  ConditionSet() = default;
  explicit ConditionSet(std::vector<Image> images) : images_(std::move(images)) {
    if (images_.empty()) throw InvalidInput("ConditionSet: at least one condition required");
    for (const Image& j : images_) require_same_shape(images_.front(), j, "ConditionSet");
  }

  std::size_t size() const noexcept { return images_.size(); }
  const Image& operator[](std::size_t i) const { return images_.at(i); }
  const std::vector<Image>& images() const noexcept { return images_; }

 private:
  std::vector<Image> images_;
};

namespace detail {

inline void require_matching(const Image& x, const ConditionSet& conds, const NoiseSchedule& sched, const char* where) {
  if (conds.size() == 0) throw InvalidInput(std::string(where) + ": empty condition set");
  require_same_shape(x, conds[0], where);
  if (conds.size() != sched.conditions()) {
    throw InvalidInput(std::string(where) + ": schedule has " + std::to_string(sched.conditions()) +
                       " conditions, got " + std::to_string(conds.size()));
  }
}

inline void require_step(int t, const NoiseSchedule& sched, const char* where) {
  if (t < 1 || t > sched.steps()) {
    throw InvalidInput(std::string(where) + ": step " + std::to_string(t) + " outside [1, " +
                       std::to_string(sched.steps()) + "]");
  }
}

// sum_i coef(i) * (J_i(k) - x(k)) at one sample index.
template <typename Coef>
double weighted_residual(const ConditionSet& conds, const Image& x, std::size_t k, Coef coef) {
  double acc = 0.0;
  for (std::size_t i = 0; i < conds.size(); ++i) acc += coef(i) * (conds[i].data()[k] - x.data()[k]);
  return acc;
}

}  // namespace detail

/// R_i = J_i - estimate, unclamped.
inline std::vector<Image> residuals(const Image& i_tau_est, const ConditionSet& conds) {
  std::vector<Image> out;
  out.reserve(conds.size());
  for (const Image& j : conds.images()) {
    require_same_shape(i_tau_est, j, "residuals");
    Image r(j.height(), j.width(), j.channels());
    for (std::size_t k = 0; k < r.size(); ++k) r.data()[k] = j.data()[k] - i_tau_est.data()[k];
    out.push_back(std::move(r));
  }
  return out;
}

/// Terminal mean sum_i eta_i(T) J_i.
inline Image terminal_mean(const ConditionSet& conds, const NoiseSchedule& sched) {
  const int T = sched.steps();
  Image m(conds[0].height(), conds[0].width(), conds[0].channels());
  for (std::size_t k = 0; k < m.size(); ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < conds.size(); ++i) acc += sched.eta(T, i) * conds[i].data()[k];
    m.data()[k] = acc;
  }
  return m;
}

/// One forward transition: x_prev + sum_i alpha_i(t) R_i + kappa sqrt(sum_i alpha_i(t)) eps.
inline Image forward_step(const Image& x_prev, const Image& i_tau, const ConditionSet& conds,
                          const NoiseSchedule& sched, int t, Rng& rng) {
  detail::require_step(t, sched, "forward_step");
  detail::require_matching(i_tau, conds, sched, "forward_step");
  require_same_shape(x_prev, i_tau, "forward_step");
  const double noise = sched.kappa() * std::sqrt(sched.alpha_sum(t));
  Image out(x_prev.height(), x_prev.width(), x_prev.channels());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double drift = detail::weighted_residual(conds, i_tau, k, [&](std::size_t i) { return sched.alpha(t, i); });
    out.data()[k] = x_prev.data()[k] + drift + noise * rng.normal();
  }
  return out;
}

/// Closed-form draw of x_t given the clean frame:
/// I + sum_i eta_i(t) R_i + kappa sqrt(sum_i eta_i(t)) eps.
inline Image forward_marginal(const Image& i_tau, const ConditionSet& conds, const NoiseSchedule& sched, int t,
                              Rng& rng) {
  detail::require_step(t, sched, "forward_marginal");
  detail::require_matching(i_tau, conds, sched, "forward_marginal");
  const double noise = sched.kappa() * std::sqrt(sched.eta_sum(t));
  Image out(i_tau.height(), i_tau.width(), i_tau.channels());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double drift = detail::weighted_residual(conds, i_tau, k, [&](std::size_t i) { return sched.eta(t, i); });
    out.data()[k] = i_tau.data()[k] + drift + noise * rng.normal();
  }
  return out;
}

struct Posterior {
  Image mean;
  double sigma2 = 0.0;
};

/// Gaussian posterior q(x_{t-1} | x_t, I, J) with the clean frame replaced by
/// an estimate:
///   sigma^2 = kappa^2 S(t-1) A(t) / S(t)
///   mu = S(t-1)/S(t) (x_t + sum_i eta_i(t) R_i) + A(t)/S(t) I_hat - sum_i eta_i(t-1) R_i
/// with S the summed ladder, A its increment and R_i = J_i - I_hat.
inline Posterior posterior_stats(const Image& x_t, const Image& i_tau_est, const ConditionSet& conds,
                                 const NoiseSchedule& sched, int t) {
  detail::require_step(t, sched, "posterior_stats");
  detail::require_matching(i_tau_est, conds, sched, "posterior_stats");
  require_same_shape(x_t, i_tau_est, "posterior_stats");
  const double s_t = sched.eta_sum(t), s_prev = sched.eta_sum(t - 1), a_t = sched.alpha_sum(t);
  const double keep = s_prev / s_t;
  const double pull = a_t / s_t;
  Posterior post{Image(x_t.height(), x_t.width(), x_t.channels()), sched.sigma2(t)};
  for (std::size_t k = 0; k < x_t.size(); ++k) {
    const double shift_t = detail::weighted_residual(conds, i_tau_est, k, [&](std::size_t i) { return sched.eta(t, i); });
    const double shift_prev =
        detail::weighted_residual(conds, i_tau_est, k, [&](std::size_t i) { return sched.eta(t - 1, i); });
    post.mean.data()[k] = keep * (x_t.data()[k] + shift_t) + pull * i_tau_est.data()[k] - shift_prev;
  }
  return post;
}

/// Scalar kernels of the posterior for arbitrary (not necessarily
/// proportional) per-condition ladders. Used to cross-check the closed form.
namespace posterior_scalar {

struct Ladders {
  std::vector<double> eta_t;
  std::vector<double> eta_prev;
};

inline double sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double d : v) s += d;
  return s;
}

inline double variance(const Ladders& l, double kappa) {
  const double s_t = sum(l.eta_t), s_prev = sum(l.eta_prev);
  return kappa * kappa * s_prev * (s_t - s_prev) / s_t;
}

/// Final closed form of the posterior mean.
inline double mean(const Ladders& l, double x_t, double i_hat, const std::vector<double>& j) {
  const double s_t = sum(l.eta_t), s_prev = sum(l.eta_prev);
  double shift_t = 0.0, shift_prev = 0.0;
  for (std::size_t i = 0; i < j.size(); ++i) {
    shift_t += l.eta_t[i] * (j[i] - i_hat);
    shift_prev += l.eta_prev[i] * (j[i] - i_hat);
  }
  return s_prev / s_t * (x_t + shift_t) + (s_t - s_prev) / s_t * i_hat - shift_prev;
}

/// Residual correction before simplification:
/// (A * sum eta_prev R - S_prev * sum alpha R) / S_t.
inline double delta_expanded(const Ladders& l, double i_hat, const std::vector<double>& j) {
  const double s_t = sum(l.eta_t), s_prev = sum(l.eta_prev);
  double prev_r = 0.0, alpha_r = 0.0;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const double r = j[i] - i_hat;
    prev_r += l.eta_prev[i] * r;
    alpha_r += (l.eta_t[i] - l.eta_prev[i]) * r;
  }
  return ((s_t - s_prev) * prev_r - s_prev * alpha_r) / s_t;
}

/// Same correction after substituting alpha = eta_t - eta_prev:
/// sum eta_prev R - S_prev * (sum eta_t R) / S_t.
inline double delta_simplified(const Ladders& l, double i_hat, const std::vector<double>& j) {
  const double s_t = sum(l.eta_t), s_prev = sum(l.eta_prev);
  double prev_r = 0.0, t_r = 0.0;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const double r = j[i] - i_hat;
    prev_r += l.eta_prev[i] * r;
    t_r += l.eta_t[i] * r;
  }
  return prev_r - s_prev * t_r / s_t;
}

/// Mean written as S_prev/S_t x_t + A/S_t I_hat - delta.
inline double mean_from_delta(const Ladders& l, double x_t, double i_hat, double delta) {
  const double s_t = sum(l.eta_t), s_prev = sum(l.eta_prev);
  return s_prev / s_t * x_t + (s_t - s_prev) / s_t * i_hat - delta;
}

}  // namespace posterior_scalar

/// Estimate of the clean frame from a noisy state.
using Denoiser = std::function<Image(const Image& x_t, const ConditionSet& conds, double tau_hat, int t,
                                     const NoiseSchedule& sched)>;

struct SamplerOptions {
  bool record_trajectory = false;
  std::uint64_t stream = 0;  ///< RNG stream index within the seed
};

struct SamplerRun {
  std::uint64_t seed = 0;
  std::vector<Image> trajectory;  ///< x_T, ..., x_1 when recorded
  Image final;
};

/// Ancestral sampling from x_T ~ N(sum_i eta_i(T) J_i, kappa^2 I) down to x_0,
/// which is clamped to [0,1] on exit only.
inline SamplerRun reverse_sample(const ConditionSet& conds, const NoiseSchedule& sched, const Denoiser& denoiser,
                                 double tau_hat, std::uint64_t seed, const SamplerOptions& options = {}) {
  if (!denoiser) throw ConfigError("reverse_sample: no denoiser");
  if (conds.size() != sched.conditions()) throw InvalidInput("reverse_sample: condition count mismatch");
  Rng rng(seed, options.stream);
  SamplerRun run;
  run.seed = seed;

  Image x = terminal_mean(conds, sched);
  for (double& v : x.data()) v += sched.kappa() * rng.normal();

  for (int t = sched.steps(); t >= 1; --t) {
    if (options.record_trajectory) run.trajectory.push_back(x);
    const Image estimate = denoiser(x, conds, tau_hat, t, sched);
    if (!estimate.same_shape(x) || !estimate.all_finite()) {
      throw NumericalError("reverse_sample: denoiser returned an invalid estimate at step " + std::to_string(t));
    }
    Posterior post = posterior_stats(x, estimate, conds, sched, t);
    if (post.sigma2 > 0.0) {
      const double sd = std::sqrt(post.sigma2);
      for (double& v : post.mean.data()) v += sd * rng.normal();
    }
    x = std::move(post.mean);
    if (!x.all_finite()) throw NumericalError("reverse_sample: non-finite state at step " + std::to_string(t));
  }
  run.final = clamp_unit(std::move(x));
  return run;
}

}  // namespace mird
