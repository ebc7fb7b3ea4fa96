#pragma once

#include <cmath>

#include "mird/imaging.hpp"

namespace mird {

struct EdgeParams {
  double k_sigma = 1.6;  ///< ratio between the wide and narrow blur
  double k_t = 2.0;      ///< response gain
  double sigma = 1.0;    ///< narrow blur, pixels
  double dog_threshold = 0.5;
  double d = 15.0;  ///< NEDT steepness, pixels

  void validate() const {
    if (!(k_sigma > 1.0)) throw InvalidInput("EdgeParams: k_sigma must exceed 1");
    if (!(sigma > 0.0)) throw InvalidInput("EdgeParams: sigma must be positive");
    if (!(d > 0.0)) throw InvalidInput("EdgeParams: d must be positive");
  }
};

/// 1/2 + k_t * (G_{k_sigma*sigma} - G_sigma), clamped to [0,1].
inline Image dog(const Image& img, const EdgeParams& p = {}) {
  p.validate();
  if (img.channels() != 1) throw InvalidInput("dog: expects a 1-channel image");
  const Image narrow = gaussian_blur(img, p.sigma);
  const Image wide = gaussian_blur(img, p.k_sigma * p.sigma);
  Image out(img.height(), img.width(), 1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = std::clamp(0.5 + p.k_t * (wide.data()[i] - narrow.data()[i]), 0.0, 1.0);
  }
  return out;
}

/// Pixels whose DoG response is strictly above the threshold.
inline Mask edge_set(const Image& img, const EdgeParams& p = {}) {
  return binarize(dog(img, p), p.dog_threshold);
}

/// 1 - exp(-EDT(edges) / d). With no detected edges every pixel maps to 1.
inline Image nedt(const Image& img, const EdgeParams& p = {}) {
  const Image dist = edt(edge_set(img, p));
  Image out(img.height(), img.width(), 1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double e = dist.data()[i];
    out.data()[i] = e == kEdtEmpty ? 1.0 : 1.0 - std::exp(-e / p.d);
  }
  return out;
}

}  // namespace mird
