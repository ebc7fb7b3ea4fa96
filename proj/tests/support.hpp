#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "mird/image.hpp"

namespace mird::testing {

inline Image random_image(int h, int w, int c, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  Image img(h, w, c);
  for (double& v : img.data()) v = d(gen);
  return img;
}

inline Mask random_mask(int h, int w, double p, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::bernoulli_distribution d(p);
  Mask m(h, w);
  for (double& v : m.data()) v = d(gen) ? 1.0 : 0.0;
  return m;
}

inline double max_abs_diff(const Image& a, const Image& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace mird::testing
