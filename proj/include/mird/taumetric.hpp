#pragma once

#include <cmath>
#include <optional>

#include "mird/flow.hpp"

namespace mird {

inline constexpr int kMotionOpening = 5;

/// Regions of significant change between a frame and the target frame:
/// |open(gray(i_tau) - gray(i_a))| > otsu, with a flat 5x5 opening applied to
/// the signed difference before the absolute value.
inline Mask motion_mask(const Image& i_a, const Image& i_tau) {
  require_same_shape(i_a, i_tau, "motion_mask");
  const Image ga = to_grayscale(i_a);
  const Image gt = to_grayscale(i_tau);
  Image diff(ga.height(), ga.width(), 1);
  for (std::size_t k = 0; k < diff.size(); ++k) diff.data()[k] = gt.data()[k] - ga.data()[k];
  Image opened = morph(diff, MorphOp::open, kMotionOpening);
  for (double& v : opened.data()) v = std::abs(v);
  return binarize(opened, otsu_threshold(opened));
}

struct TauEstimate {
  double tau = 0.5;
  double mass_0 = 0.0;  ///< sum |F_{0->tau}| over M_{0->tau}
  double mass_1 = 0.0;  ///< sum |F_{1->tau}| over M_{1->tau}
  bool degenerate = false;  ///< both masses zero; tau fell back to 0.5
};

/// tau = mass_0 / (mass_0 + mass_1); a static triplet yields 0.5 flagged degenerate.
inline TauEstimate tau_from_masses(double mass_0, double mass_1) {
  TauEstimate e;
  e.mass_0 = mass_0;
  e.mass_1 = mass_1;
  const double den = mass_0 + mass_1;
  if (den > 0.0) {
    e.tau = mass_0 / den;
  } else {
    e.degenerate = true;
  }
  return e;
}

inline double flow_mass(const FlowField& f, const Mask& m) {
  if (f.height() != m.height() || f.width() != m.width()) throw InvalidInput("flow_mass: extents differ");
  const Image mag = flow_magnitude(f);
  double acc = 0.0;
  for (std::size_t k = 0; k < mag.size(); ++k) acc += mag.data()[k] * m.data()[k];
  return acc;
}

/// Flows towards the target frame: F_{0->tau} and F_{1->tau}. Missing entries
/// are estimated from the frames.
struct TauFlows {
  std::optional<FlowField> from_0;
  std::optional<FlowField> from_1;
};

struct TauDetail {
  TauEstimate estimate;
  Mask mask_0, mask_1;
  FlowField flow_0, flow_1;
};

inline TauDetail tau_ifd_detailed(const Image& i0, const Image& i_tau, const Image& i1, const TauFlows& flows = {},
                                  const FlowParams& params = {}) {
  require_same_shape(i0, i_tau, "tau_ifd");
  require_same_shape(i1, i_tau, "tau_ifd");
  TauDetail d;
  d.flow_0 = flows.from_0 ? *flows.from_0 : estimate_flow(i0, i_tau, params);
  d.flow_1 = flows.from_1 ? *flows.from_1 : estimate_flow(i1, i_tau, params);
  if (d.flow_0.height() != i0.height() || d.flow_0.width() != i0.width() || d.flow_1.height() != i0.height() ||
      d.flow_1.width() != i0.width()) {
    throw InvalidInput("tau_ifd: supplied flow does not match the frame size");
  }
  d.mask_0 = motion_mask(i0, i_tau);
  d.mask_1 = motion_mask(i1, i_tau);
  d.estimate = tau_from_masses(flow_mass(d.flow_0, d.mask_0), flow_mass(d.flow_1, d.mask_1));
  return d;
}

inline TauEstimate tau_ifd(const Image& i0, const Image& i_tau, const Image& i1, const TauFlows& flows = {},
                           const FlowParams& params = {}) {
  return tau_ifd_detailed(i0, i_tau, i1, flows, params).estimate;
}

}  // namespace mird
