#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "mird/image.hpp"

namespace mird {

inline Image to_grayscale(const Image& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3) throw InvalidInput("to_grayscale: expected 1 or 3 channels");
  Image out(img.height(), img.width(), 1);
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = 0.299 * src[3 * i] + 0.587 * src[3 * i + 1] + 0.114 * src[3 * i + 2];
  }
  return out;
}

enum class MorphOp { erode, dilate, open };

namespace detail {

// Flat square min/max filter; separable because the structuring element is a square.
template <typename Pick>
Image window_filter(const Image& img, int radius, Pick pick) {
  const int h = img.height(), w = img.width();
  Image rows(h, w, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = img.clamped(y, x - radius);
      for (int dx = -radius + 1; dx <= radius; ++dx) v = pick(v, img.clamped(y, x + dx));
      rows.at(y, x) = v;
    }
  }
  Image out(h, w, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = rows.clamped(y - radius, x);
      for (int dy = -radius + 1; dy <= radius; ++dy) v = pick(v, rows.clamped(y + dy, x));
      out.at(y, x) = v;
    }
  }
  return out;
}

}  // namespace detail

/// Grayscale morphology with a flat se_size x se_size square; borders replicate.
inline Image morph(const Image& img, MorphOp op, int se_size) {
  if (img.channels() != 1) throw InvalidInput("morph: expects a 1-channel image");
  if (se_size < 1 || se_size % 2 == 0) throw InvalidInput("morph: structuring element size must be odd and >= 1");
  const int r = se_size / 2;
  auto lo = [](double a, double b) { return std::min(a, b); };
  auto hi = [](double a, double b) { return std::max(a, b); };
  switch (op) {
    case MorphOp::erode:
      return detail::window_filter(img, r, lo);
    case MorphOp::dilate:
      return detail::window_filter(img, r, hi);
    case MorphOp::open:
      return detail::window_filter(detail::window_filter(img, r, lo), r, hi);
  }
  return img;
}

inline Mask morph(const Mask& m, MorphOp op, int se_size) {
  Image out = morph(to_image(m), op, se_size);
  Mask res(m.height(), m.width());
  std::copy(out.data().begin(), out.data().end(), res.data().begin());
  return res;
}

inline constexpr int kOtsuBins = 256;

inline int otsu_bin(double v) {
  return std::clamp(static_cast<int>(std::floor(v * kOtsuBins)), 0, kOtsuBins - 1);
}

/// Otsu threshold over a 256-bin histogram of [0,1]; returns the centre of the
/// last bin of the lower class. When no split separates the data (all pixels in
/// one bin) the maximum intensity is returned, so `v > threshold` selects nothing.
inline double otsu_threshold(const Image& img) {
  if (img.channels() != 1) throw InvalidInput("otsu_threshold: expects a 1-channel image");
  if (img.empty()) throw InvalidInput("otsu_threshold: empty image");
  std::array<double, kOtsuBins> hist{};
  for (double v : img.data()) hist[otsu_bin(v)] += 1.0;
  const double total = static_cast<double>(img.size());

  double sum_all = 0.0;
  for (int k = 0; k < kOtsuBins; ++k) sum_all += k * hist[k];

  double w0 = 0.0, sum0 = 0.0, best = 0.0;
  int best_k = -1;
  for (int k = 0; k < kOtsuBins - 1; ++k) {
    w0 += hist[k];
    sum0 += k * hist[k];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0;
    const double m1 = (sum_all - sum0) / w1;
    const double between = (w0 / total) * (w1 / total) * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_k = k;
    }
  }
  if (best_k < 0) return *std::max_element(img.data().begin(), img.data().end());
  return (best_k + 0.5) / kOtsuBins;
}

/// Distance reported by `edt` when the mask has no foreground.
inline constexpr double kEdtEmpty = std::numeric_limits<double>::max();

namespace detail {

// Squared distance transform of a sampled function along one line
// (lower envelope of parabolas). Exact for integer grids.
inline void edt_1d(std::span<const double> f, std::span<double> d, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  constexpr double inf = std::numeric_limits<double>::infinity();
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  int k = 0;
  v[0] = 0;
  z[0] = -inf;
  z[1] = inf;
  for (int q = 1; q < n; ++q) {
    double s;
    for (;;) {
      const int p = v[k];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * q - 2.0 * p);
      if (s <= z[k] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace detail

/// Exact Euclidean distance (pixels) to the nearest foreground (value 1) pixel.
/// A mask with no foreground yields `kEdtEmpty` everywhere.
inline Image edt(const Mask& mask) {
  const int h = mask.height(), w = mask.width();
  Image out(h, w, 1);
  if (h == 0 || w == 0) return out;
  if (mask.count() == 0.0) {
    std::fill(out.data().begin(), out.data().end(), kEdtEmpty);
    return out;
  }
  // Large finite stand-in for "no foreground on this line"; squares of real
  // distances on any raster we handle stay far below it.
  constexpr double big = 1e20;
  std::vector<double> grid(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = mask.data()[i] > 0.5 ? 0.0 : big;

  std::vector<int> v;
  std::vector<double> z;
  std::vector<double> f(std::max(h, w)), d(std::max(h, w));
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = grid[static_cast<std::size_t>(y) * w + x];
    detail::edt_1d(std::span(f.data(), h), std::span(d.data(), h), v, z);
    for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = std::min(d[y], big);
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[x] = grid[static_cast<std::size_t>(y) * w + x];
    detail::edt_1d(std::span(f.data(), w), std::span(d.data(), w), v, z);
    for (int x = 0; x < w; ++x) out.at(y, x) = std::sqrt(d[x]);
  }
  return out;
}

inline constexpr double kPsnrCap = 99.0;

inline double mse(const Image& a, const Image& b) {
  require_same_shape(a, b, "mse");
  double acc = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) acc += (da[i] - db[i]) * (da[i] - db[i]);
  return da.empty() ? 0.0 : acc / static_cast<double>(da.size());
}

/// Peak 1.0; identical images report kPsnrCap.
inline double psnr(const Image& a, const Image& b) {
  const double e = mse(a, b);
  if (e == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / e));
}

/// Normalised 1D Gaussian taps for offsets -radius..radius.
inline std::vector<double> gaussian_kernel(double sigma, int radius) {
  std::vector<double> k(2 * radius + 1);
  double s = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    s += k[i + radius];
  }
  for (double& v : k) v /= s;
  return k;
}

/// Separable Gaussian blur (radius ceil(3 sigma), replicated borders).
///
/// Each tap is applied to the difference from the centre sample, so regions of
/// constant value come out bit-identical to the input.
inline Image gaussian_blur(const Image& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  const auto k = gaussian_kernel(sigma, r);
  const int h = img.height(), w = img.width(), ch = img.channels();
  Image tmp(h, w, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        const double centre = img.at(y, x, c);
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * (img.clamped(y, x + i, c) - centre);
        tmp.at(y, x, c) = centre + acc;
      }
    }
  }
  Image out(h, w, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        const double centre = tmp.at(y, x, c);
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * (tmp.clamped(y + i, x, c) - centre);
        out.at(y, x, c) = centre + acc;
      }
    }
  }
  return out;
}

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Mean SSIM over all fully-covered 11x11 Gaussian windows, averaged over channels.
inline double ssim(const Image& a, const Image& b, const SsimParams& p = {}) {
  require_same_shape(a, b, "ssim");
  if (a.height() < p.window || a.width() < p.window) {
    throw InvalidInput("ssim: image smaller than the " + std::to_string(p.window) + "px window");
  }
  const int r = p.window / 2;
  const auto g = gaussian_kernel(p.sigma, r);
  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  const int h = a.height(), w = a.width();

  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    double acc = 0.0;
    std::size_t count = 0;
    for (int y = r; y < h - r; ++y) {
      for (int x = r; x < w - r; ++x) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int dy = -r; dy <= r; ++dy) {
          for (int dx = -r; dx <= r; ++dx) {
            const double wt = g[dy + r] * g[dx + r];
            const double va = a.at(y + dy, x + dx, c);
            const double vb = b.at(y + dy, x + dx, c);
            mx += wt * va;
            my += wt * vb;
            sxx += wt * va * va;
            syy += wt * vb * vb;
            sxy += wt * va * vb;
          }
        }
        const double vx = sxx - mx * mx;
        const double vy = syy - my * my;
        const double cxy = sxy - mx * my;
        acc += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
    }
    total += acc / static_cast<double>(count);
  }
  return total / a.channels();
}

}  // namespace mird
