#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "mird/diffusion.hpp"

namespace mird {

// Stand-ins for a trained denoiser. None of them learns anything; they exist
// so the sampler can be exercised end to end.

enum class DenoiserKind { oracle, inversion, warp_blend, shrinkage };

inline std::string_view to_string(DenoiserKind k) {
  switch (k) {
    case DenoiserKind::oracle: return "oracle";
    case DenoiserKind::inversion: return "inversion";
    case DenoiserKind::warp_blend: return "warp_blend";
    case DenoiserKind::shrinkage: return "shrinkage";
  }
  return "?";
}

inline DenoiserKind parse_denoiser_kind(std::string_view s) {
  if (s == "oracle") return DenoiserKind::oracle;
  if (s == "inversion") return DenoiserKind::inversion;
  if (s == "warp_blend" || s == "warp-blend") return DenoiserKind::warp_blend;
  if (s == "shrinkage") return DenoiserKind::shrinkage;
  throw InvalidInput("unknown denoiser '" + std::string(s) + "'");
}

/// Weight given to the algebraic inversion by the shrinkage denoiser.
enum class ShrinkagePolicy {
  /// Precision weighting: prior N(warp estimate, prior_sd^2) combined with the
  /// inversion, whose noise variance is kappa^2 S(t) / (1 - S(t))^2.
  snr,
  /// lambda(t) = 1 - S(t).
  linear,
};

struct ShrinkageOptions {
  ShrinkagePolicy policy = ShrinkagePolicy::snr;
  double prior_sd = 0.02;
};

/// Weight on the inversion given the prior variance of the estimate.
inline double shrinkage_weight(const NoiseSchedule& sched, int t, double prior_var) {
  const double s = sched.eta_sum(t);
  const double k = sched.kappa();
  const double noise_var = k * k * s / ((1.0 - s) * (1.0 - s));
  if (prior_var + noise_var == 0.0) return 1.0;
  return prior_var / (prior_var + noise_var);
}

inline double shrinkage_weight(const NoiseSchedule& sched, int t, const ShrinkageOptions& opt = {}) {
  if (opt.policy == ShrinkagePolicy::linear) return 1.0 - sched.eta_sum(t);
  return shrinkage_weight(sched, t, opt.prior_sd * opt.prior_sd);
}

/// (x_t - sum_i eta_i(t) J_i) / (1 - S(t)), clamped to [0,1]: inverts the
/// noiseless forward mean.
inline Image invert_marginal(const Image& x_t, const ConditionSet& conds, const NoiseSchedule& sched, int t) {
  const double denom = 1.0 - sched.eta_sum(t);
  Image out(x_t.height(), x_t.width(), x_t.channels());
  for (std::size_t k = 0; k < out.size(); ++k) {
    double shift = 0.0;
    for (std::size_t i = 0; i < conds.size(); ++i) shift += sched.eta(t, i) * conds[i].data()[k];
    out.data()[k] = std::clamp((x_t.data()[k] - shift) / denom, 0.0, 1.0);
  }
  return out;
}

inline Denoiser oracle_denoiser(Image ground_truth) {
  if (ground_truth.empty()) throw ConfigError("oracle denoiser requires a ground-truth frame");
  return [gt = std::move(ground_truth)](const Image&, const ConditionSet&, double, int, const NoiseSchedule&) {
    return gt;
  };
}

inline Denoiser inversion_denoiser() {
  return [](const Image& x, const ConditionSet& conds, double, int t, const NoiseSchedule& sched) {
    return invert_marginal(x, conds, sched, t);
  };
}

/// Ignores the noisy state and returns the warped/infilled estimate.
inline Denoiser warp_blend_denoiser(Image estimate) {
  if (estimate.empty()) throw ConfigError("warp_blend denoiser requires an infilled estimate");
  return [est = std::move(estimate)](const Image&, const ConditionSet&, double, int, const NoiseSchedule&) {
    return est;
  };
}

/// lambda(t) * inversion + (1 - lambda(t)) * estimate. A single-channel
/// `prior_var` map, when given, replaces prior_sd^2 per pixel under the snr policy.
inline Denoiser shrinkage_denoiser(Image estimate, ShrinkageOptions opt = {}, Image prior_var = {}) {
  if (estimate.empty()) throw ConfigError("shrinkage denoiser requires an infilled estimate");
  if (!prior_var.empty() && (prior_var.channels() != 1 || prior_var.height() != estimate.height() ||
                             prior_var.width() != estimate.width())) {
    throw InvalidInput("shrinkage denoiser: prior variance map must be single-channel and match the estimate");
  }
  return [est = std::move(estimate), opt, pv = std::move(prior_var)](const Image& x, const ConditionSet& conds, double,
                                                                     int t, const NoiseSchedule& sched) {
    Image inv = invert_marginal(x, conds, sched, t);
    const int ch = inv.channels();
    const bool per_pixel = !pv.empty() && opt.policy == ShrinkagePolicy::snr;
    const double global = shrinkage_weight(sched, t, opt);
    for (std::size_t k = 0; k < inv.size(); ++k) {
      const double lambda = per_pixel ? shrinkage_weight(sched, t, pv.data()[k / ch]) : global;
      inv.data()[k] = lambda * inv.data()[k] + (1.0 - lambda) * est.data()[k];
    }
    return inv;
  };
}

struct DenoiserInputs {
  std::optional<Image> ground_truth;
  std::optional<Image> estimate;  ///< infilled warp estimate
  std::optional<Image> estimate_variance;  ///< per-pixel prior variance of the estimate
  ShrinkageOptions shrinkage;
};

inline Denoiser make_denoiser(DenoiserKind kind, const DenoiserInputs& in) {
  switch (kind) {
    case DenoiserKind::oracle:
      if (!in.ground_truth) throw ConfigError("oracle denoiser requires a ground-truth frame");
      return oracle_denoiser(*in.ground_truth);
    case DenoiserKind::inversion:
      return inversion_denoiser();
    case DenoiserKind::warp_blend:
      if (!in.estimate) throw ConfigError("warp_blend denoiser requires an infilled estimate");
      return warp_blend_denoiser(*in.estimate);
    case DenoiserKind::shrinkage:
      if (!in.estimate) throw ConfigError("shrinkage denoiser requires an infilled estimate");
      return shrinkage_denoiser(*in.estimate, in.shrinkage, in.estimate_variance.value_or(Image{}));
  }
  throw ConfigError("unknown denoiser kind");
}

}  // namespace mird
