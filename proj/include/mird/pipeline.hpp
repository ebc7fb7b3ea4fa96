#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mird/denoisers.hpp"
#include "mird/diffusion.hpp"
#include "mird/edges.hpp"
#include "mird/flow.hpp"
#include "mird/schedule.hpp"
#include "mird/taumetric.hpp"

namespace mird {

/// Both frames forward-warped to time tau, with edge maps, validity masks and
/// splat importances.
struct WarpBundle {
  Image img_0to_tau, img_1to_tau;
  Image edge_0to_tau, edge_1to_tau;
  Mask mask_0, mask_1;
  Image z_0, z_1;
};

/// F_{0->1} and F_{1->0}.
struct FlowPair {
  FlowField forward;
  FlowField backward;
};

inline WarpBundle warp_to_tau(const Image& i0, const Image& i1, double tau, const FlowPair& flows,
                              const EdgeParams& edges = {}) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidInput("warp_to_tau: tau must lie in [0,1]");
  require_same_shape(i0, i1, "warp_to_tau");
  WarpBundle b;
  b.z_0 = importance_z(i0, i1, flows.forward);
  b.z_1 = importance_z(i1, i0, flows.backward);
  b.img_0to_tau = softmax_splat(i0, flows.forward, b.z_0, tau).image;
  b.img_1to_tau = softmax_splat(i1, flows.backward, b.z_1, 1.0 - tau).image;
  b.edge_0to_tau = softmax_splat(nedt(to_grayscale(i0), edges), flows.forward, b.z_0, tau).image;
  b.edge_1to_tau = softmax_splat(nedt(to_grayscale(i1), edges), flows.backward, b.z_1, 1.0 - tau).image;
  b.mask_0 = occlusion_mask(flows.forward, tau);
  b.mask_1 = occlusion_mask(flows.backward, 1.0 - tau);
  return b;
}

enum class InfillRule {
  /// Holes in one direction take the other direction; holes in both take the
  /// temporal cross-fade; the two filled estimates are averaged.
  mask_blend,
  /// The printed product form: 1/2 (M0 Î0 I0 + (1-M0) Î1 I1) + 1/2 (M1 Î1 I1 + (1-M1) Î0 I0).
  literal_product,
};

inline Image infill(const WarpBundle& b, const Image& i0, const Image& i1, double tau,
                    InfillRule rule = InfillRule::mask_blend) {
  require_same_shape(b.img_0to_tau, i0, "infill");
  require_same_shape(b.img_1to_tau, i1, "infill");
  const int h = i0.height(), w = i0.width(), ch = i0.channels();
  Image out(h, w, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double m0 = b.mask_0.at(y, x), m1 = b.mask_1.at(y, x);
      for (int c = 0; c < ch; ++c) {
        const double w0 = b.img_0to_tau.at(y, x, c), w1 = b.img_1to_tau.at(y, x, c);
        double v;
        if (rule == InfillRule::literal_product) {
          const double a0 = i0.at(y, x, c), a1 = i1.at(y, x, c);
          v = 0.5 * (m0 * w0 * a0 + (1 - m0) * w1 * a1) + 0.5 * (m1 * w1 * a1 + (1 - m1) * w0 * a0);
        } else if (m0 == 0.0 && m1 == 0.0) {
          v = (1.0 - tau) * i0.at(y, x, c) + tau * i1.at(y, x, c);
        } else {
          const double f0 = m0 * w0 + (1 - m0) * w1;
          const double f1 = m1 * w1 + (1 - m1) * w0;
          v = 0.5 * (f0 + f1);
        }
        out.at(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

/// prior_sd^2 plus the channel-mean squared difference of the two warped
/// frames, capped at cap^2: the estimate is trusted less where the directions
/// disagree.
inline Image estimate_variance(const WarpBundle& b, double prior_sd, double cap = 0.05) {
  require_same_shape(b.img_0to_tau, b.img_1to_tau, "estimate_variance");
  const Image& a = b.img_0to_tau;
  const int ch = a.channels();
  Image out(a.height(), a.width(), 1);
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      double acc = 0.0;
      for (int c = 0; c < ch; ++c) {
        const double d = a.at(y, x, c) - b.img_1to_tau.at(y, x, c);
        acc += d * d;
      }
      out.at(y, x) = prior_sd * prior_sd + std::min(acc / ch, cap * cap);
    }
  }
  return out;
}

/// Overlay baseline 1/2 (I0 + I1).
inline Image overlay(const Image& i0, const Image& i1) {
  require_same_shape(i0, i1, "overlay");
  Image out(i0.height(), i0.width(), i0.channels());
  for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] = 0.5 * (i0.data()[k] + i1.data()[k]);
  return out;
}

enum class TauSource { ifd, fixed };

struct InterpConfig {
  ScheduleConfig schedule;  ///< weights are replaced by the tau partition
  DenoiserKind denoiser = DenoiserKind::shrinkage;
  ShrinkageOptions shrinkage;
  bool disagreement_prior = true;  ///< per-pixel estimate variance from warp disagreement
  FlowParams flow;
  EdgeParams edges;
  TauSource tau_source = TauSource::fixed;
  double tau = 0.5;  ///< used when tau_source == fixed
  std::uint64_t seed = 0;
  InfillRule infill = InfillRule::mask_blend;
  /// Middle frame: required by the oracle denoiser and by tau_source == ifd.
  std::optional<Image> ground_truth;
  std::optional<FlowPair> flows;  ///< injected F_{0->1}, F_{1->0}
  bool record_trajectory = false;
  int threads = 0;  ///< 0 = hardware concurrency
};

/// Everything upstream of the sampler; deterministic given the inputs.
struct Prepared {
  double tau_hat = 0.5;
  std::optional<TauEstimate> tau_estimate;
  FlowPair flows;
  WarpBundle bundle;
  Image estimate;  ///< infilled warp estimate
  NoiseSchedule schedule;
  ConditionSet conds;
  Denoiser denoiser;
};

namespace detail {

template <typename Fn>
auto in_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
  const std::string pre = std::string(stage) + ": ";
  try {
    return fn();
  } catch (const FormatError&) {
    throw;
  } catch (const InvalidInput& e) {
    throw InvalidInput(pre + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(pre + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(pre + e.what());
  } catch (const IoError& e) {
    throw IoError(pre + e.what());
  }
}

}  // namespace detail

inline Prepared prepare(const Image& i0, const Image& i1, const InterpConfig& cfg) {
  require_same_shape(i0, i1, "interpolate");
  if (!i0.is_unit_range() || !i1.is_unit_range()) throw InvalidInput("interpolate: frames must lie in [0,1]");
  Prepared p;
  p.flows = detail::in_stage("flow", [&] {
    if (cfg.flows) return *cfg.flows;
    return FlowPair{estimate_flow(i0, i1, cfg.flow), estimate_flow(i1, i0, cfg.flow)};
  });
  p.tau_hat = detail::in_stage("tau", [&] {
    if (cfg.tau_source == TauSource::fixed) {
      if (!(cfg.tau >= 0.0 && cfg.tau <= 1.0)) throw InvalidInput("tau must lie in [0,1]");
      return cfg.tau;
    }
    if (!cfg.ground_truth) throw ConfigError("tau_source=ifd needs the middle frame of the triplet");
    p.tau_estimate = tau_ifd(i0, *cfg.ground_truth, i1, {}, cfg.flow);
    return p.tau_estimate->tau;
  });
  p.bundle = detail::in_stage("warp", [&] { return warp_to_tau(i0, i1, p.tau_hat, p.flows, cfg.edges); });
  p.estimate = detail::in_stage("infill", [&] { return infill(p.bundle, i0, i1, p.tau_hat, cfg.infill); });
  p.schedule = detail::in_stage("schedule", [&] {
    ScheduleConfig sc = cfg.schedule;
    sc.weights = partition_weights(p.tau_hat);
    return build_schedule(sc);
  });
  p.conds = ConditionSet({i0, i1});
  p.denoiser = detail::in_stage("denoiser", [&] {
    DenoiserInputs in;
    in.ground_truth = cfg.ground_truth;
    in.estimate = p.estimate;
    if (cfg.disagreement_prior) in.estimate_variance = estimate_variance(p.bundle, cfg.shrinkage.prior_sd);
    in.shrinkage = cfg.shrinkage;
    return make_denoiser(cfg.denoiser, in);
  });
  return p;
}

inline SamplerRun sample(const Prepared& p, std::uint64_t seed, bool record_trajectory = false) {
  return detail::in_stage("sampler", [&] {
    SamplerOptions opt;
    opt.record_trajectory = record_trajectory;
    return reverse_sample(p.conds, p.schedule, p.denoiser, p.tau_hat, seed, opt);
  });
}

struct Interpolation {
  Image frame;
  SamplerRun run;
  double tau_hat = 0.5;
  std::optional<TauEstimate> tau_estimate;
};

inline Interpolation interpolate(const Image& i0, const Image& i1, const InterpConfig& cfg) {
  const Prepared p = prepare(i0, i1, cfg);
  Interpolation out;
  out.run = sample(p, cfg.seed, cfg.record_trajectory);
  out.frame = out.run.final;
  out.tau_hat = p.tau_hat;
  out.tau_estimate = p.tau_estimate;
  return out;
}

/// Pearson correlation of two equally sized sequences. Two constant sequences
/// correlate 1 if equal and 0 otherwise; one constant sequence correlates 0.
inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw InvalidInput("pearson: sizes differ or empty");
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(a.size());
  mb /= static_cast<double>(b.size());
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) {
    if (saa == 0.0 && sbb == 0.0) return std::equal(a.begin(), a.end(), b.begin()) ? 1.0 : 0.0;
    return 0.0;
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// Per-pixel RMS over channels of pred - gt.
inline Image rmse_map(const Image& pred, const Image& gt) {
  require_same_shape(pred, gt, "rmse_map");
  Image out(pred.height(), pred.width(), 1);
  for (int y = 0; y < pred.height(); ++y) {
    for (int x = 0; x < pred.width(); ++x) {
      double acc = 0.0;
      for (int c = 0; c < pred.channels(); ++c) {
        const double d = pred.at(y, x, c) - gt.at(y, x, c);
        acc += d * d;
      }
      out.at(y, x) = std::sqrt(acc / pred.channels());
    }
  }
  return out;
}

struct UncertaintyReport {
  Image mean_img;
  Image sd_map;      ///< per-pixel sample SD (N-1), channel-averaged
  Image minmax_map;  ///< per-pixel max - min, channel-averaged
  double mean_pairwise_corr = 1.0;
  std::size_t samples = 0;
  double tau_hat = 0.5;
};

/// Aggregates a set of equally shaped samples.
inline UncertaintyReport summarize_samples(const std::vector<Image>& samples) {
  if (samples.size() < 2) throw InvalidInput("uncertainty: at least two samples required");
  const Image& f = samples.front();
  for (const Image& s : samples) require_same_shape(f, s, "uncertainty");
  const int h = f.height(), w = f.width(), ch = f.channels();
  const double n = static_cast<double>(samples.size());
  UncertaintyReport r;
  r.samples = samples.size();
  r.mean_img = Image(h, w, ch);
  r.sd_map = Image(h, w, 1);
  r.minmax_map = Image(h, w, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sd_acc = 0.0, range_acc = 0.0;
      for (int c = 0; c < ch; ++c) {
        double m = 0.0, lo = samples[0].at(y, x, c), hi = lo;
        for (const Image& s : samples) {
          const double v = s.at(y, x, c);
          m += v;
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        m /= n;
        double ss = 0.0;
        if (hi > lo) {
          for (const Image& s : samples) ss += (s.at(y, x, c) - m) * (s.at(y, x, c) - m);
        } else {
          m = lo;
        }
        r.mean_img.at(y, x, c) = m;
        sd_acc += std::sqrt(ss / (n - 1.0));
        range_acc += hi - lo;
      }
      r.sd_map.at(y, x) = sd_acc / ch;
      r.minmax_map.at(y, x) = range_acc / ch;
    }
  }
  double corr = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < samples.size(); ++a) {
    for (std::size_t b = a + 1; b < samples.size(); ++b) {
      corr += pearson(samples[a].data(), samples[b].data());
      ++pairs;
    }
  }
  r.mean_pairwise_corr = corr / static_cast<double>(pairs);
  return r;
}

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Draws samples with seeds seed+1 .. seed+n_samples from a shared front end.
/// Chains run concurrently; the result does not depend on the thread count.
inline UncertaintyReport uncertainty(const Image& i0, const Image& i1, const InterpConfig& cfg,
                                     std::size_t n_samples) {
  if (n_samples < 2) throw InvalidInput("uncertainty: at least two samples required");
  const Prepared p = prepare(i0, i1, cfg);
  std::vector<Image> samples(n_samples);
  const int threads = std::min<int>(resolve_threads(cfg.threads), static_cast<int>(n_samples));
  std::vector<std::exception_ptr> errors(threads);
  auto worker = [&](int w) {
    try {
      for (std::size_t k = static_cast<std::size_t>(w); k < n_samples; k += threads) {
        samples[k] = sample(p, cfg.seed + 1 + k).final;
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(worker, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  UncertaintyReport r = summarize_samples(samples);
  r.tau_hat = p.tau_hat;
  return r;
}

}  // namespace mird
