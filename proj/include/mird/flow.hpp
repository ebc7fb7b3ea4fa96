#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "mird/imaging.hpp"

namespace mird {

/// Per-pixel displacement (u, v) in pixels, row-major, u along x and v along y.
class FlowField {
 public:
  FlowField() = default;
  FlowField(int height, int width, double u = 0.0, double v = 0.0) : height_(height), width_(width) {
    if (height < 0 || width < 0) throw InvalidInput("FlowField: invalid dimensions");
    data_.resize(static_cast<std::size_t>(height) * width * 2);
    for (std::size_t i = 0; i < data_.size(); i += 2) {
      data_[i] = u;
      data_[i + 1] = v;
    }
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }

  double& u(int y, int x) noexcept { return data_[idx(y, x)]; }
  double& v(int y, int x) noexcept { return data_[idx(y, x) + 1]; }
  double u(int y, int x) const noexcept { return data_[idx(y, x)]; }
  double v(int y, int x) const noexcept { return data_[idx(y, x) + 1]; }

  std::span<double> data() & noexcept { return data_; }
  std::span<const double> data() const& noexcept { return data_; }
  std::vector<double> data() && noexcept { return std::move(data_); }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double d) { return std::isfinite(d); });
  }
  bool within_bounds() const noexcept {
    for (std::size_t i = 0; i < data_.size(); i += 2) {
      if (!(std::abs(data_[i]) < width_) || !(std::abs(data_[i + 1]) < height_)) return false;
    }
    return true;
  }

  FlowField scaled(double s) const {
    FlowField out = *this;
    for (double& d : out.data_) d *= s;
    return out;
  }

  friend bool operator==(const FlowField&, const FlowField&) = default;

 private:
  std::size_t idx(int y, int x) const noexcept { return (static_cast<std::size_t>(y) * width_ + x) * 2; }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

struct FlowParams {
  int pyramid_levels = 4;
  int iterations_per_level = 100;
  double smoothness = 0.1;  ///< regularisation weight; enters the energy squared
  double downscale = 0.5;
  int warps_per_level = 3;  ///< re-linearisations of the data term per level
  double presmooth_sigma = 1.0;

  void validate() const {
    if (pyramid_levels < 1) throw InvalidInput("FlowParams: pyramid_levels must be >= 1");
    if (iterations_per_level < 1) throw InvalidInput("FlowParams: iterations_per_level must be >= 1");
    if (!(smoothness > 0.0)) throw InvalidInput("FlowParams: smoothness must be positive");
    if (!(downscale > 0.0 && downscale < 1.0)) throw InvalidInput("FlowParams: downscale must lie in (0,1)");
    if (warps_per_level < 1) throw InvalidInput("FlowParams: warps_per_level must be >= 1");
  }
};

/// Bilinear sample at (x, y) with coordinates clamped to the raster.
inline double sample_bilinear(const Image& img, double x, double y, int c = 0) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width() - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height() - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = x - x0, fy = y - y0;
  const double top = img.at(y0, x0, c) + fx * (img.at(y0, x1, c) - img.at(y0, x0, c));
  const double bot = img.at(y1, x0, c) + fx * (img.at(y1, x1, c) - img.at(y1, x0, c));
  return top + fy * (bot - top);
}

/// out(p) = img(p + f(p)), bilinear, clamped to the border.
inline Image backward_warp(const Image& img, const FlowField& f) {
  if (img.height() != f.height() || img.width() != f.width()) {
    throw InvalidInput("backward_warp: flow and image extents differ");
  }
  Image out(img.height(), img.width(), img.channels());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double sx = x + f.u(y, x), sy = y + f.v(y, x);
      for (int c = 0; c < img.channels(); ++c) out.at(y, x, c) = sample_bilinear(img, sx, sy, c);
    }
  }
  return out;
}

inline Image flow_magnitude(const FlowField& f) {
  Image out(f.height(), f.width(), 1);
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) out.at(y, x) = std::sqrt(f.u(y, x) * f.u(y, x) + f.v(y, x) * f.v(y, x));
  }
  return out;
}

namespace detail {

inline Image resize_bilinear(const Image& img, int height, int width) {
  Image out(height, width, img.channels());
  const double sy = static_cast<double>(img.height()) / height;
  const double sx = static_cast<double>(img.width()) / width;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double py = (y + 0.5) * sy - 0.5, px = (x + 0.5) * sx - 0.5;
      for (int c = 0; c < img.channels(); ++c) out.at(y, x, c) = sample_bilinear(img, px, py, c);
    }
  }
  return out;
}

inline FlowField resize_flow(const FlowField& f, int height, int width) {
  Image u(f.height(), f.width(), 1), v(f.height(), f.width(), 1);
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) {
      u.at(y, x) = f.u(y, x);
      v.at(y, x) = f.v(y, x);
    }
  }
  const Image ur = resize_bilinear(u, height, width);
  const Image vr = resize_bilinear(v, height, width);
  const double kx = static_cast<double>(width) / f.width();
  const double ky = static_cast<double>(height) / f.height();
  FlowField out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      out.u(y, x) = ur.at(y, x) * kx;
      out.v(y, x) = vr.at(y, x) * ky;
    }
  }
  return out;
}

// One pyramid level: repeated linearisation around the current flow, each
// solved by lexicographic SOR sweeps on the per-pixel 2x2 normal equations.
inline void refine_level(const Image& a, const Image& b, FlowField& flow, const FlowParams& p) {
  const int h = a.height(), w = a.width();
  const double alpha = p.smoothness * p.smoothness;
  constexpr double omega = 1.8;
  std::vector<double> ix(a.size()), iy(a.size()), ib(a.size());
  for (int warp = 0; warp < p.warps_per_level; ++warp) {
    const Image bw = backward_warp(b, flow);
    const FlowField base = flow;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const double tx = x + base.u(y, x), ty = y + base.v(y, x);
        const bool inside = tx >= 0 && tx <= w - 1 && ty >= 0 && ty <= h - 1;
        if (!inside) {
          ix[i] = iy[i] = ib[i] = 0.0;
          continue;
        }
        const double gx = 0.25 * (a.clamped(y, x + 1) - a.clamped(y, x - 1) + bw.clamped(y, x + 1) - bw.clamped(y, x - 1));
        const double gy = 0.25 * (a.clamped(y + 1, x) - a.clamped(y - 1, x) + bw.clamped(y + 1, x) - bw.clamped(y - 1, x));
        const double it = bw.at(y, x) - a.at(y, x);
        ix[i] = gx;
        iy[i] = gy;
        // constant part of the linearised residual, expressed in the total flow
        ib[i] = it - gx * base.u(y, x) - gy * base.v(y, x);
      }
    }
    for (int iter = 0; iter < p.iterations_per_level; ++iter) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * w + x;
          double su = 0.0, sv = 0.0;
          int n = 0;
          if (x > 0) { su += flow.u(y, x - 1); sv += flow.v(y, x - 1); ++n; }
          if (x + 1 < w) { su += flow.u(y, x + 1); sv += flow.v(y, x + 1); ++n; }
          if (y > 0) { su += flow.u(y - 1, x); sv += flow.v(y - 1, x); ++n; }
          if (y + 1 < h) { su += flow.u(y + 1, x); sv += flow.v(y + 1, x); ++n; }
          const double gx = ix[i], gy = iy[i], c = ib[i];
          const double a11 = gx * gx + alpha * n, a12 = gx * gy, a22 = gy * gy + alpha * n;
          const double r1 = alpha * su - gx * c, r2 = alpha * sv - gy * c;
          const double det = a11 * a22 - a12 * a12;
          if (det <= 0.0) continue;
          const double nu = (a22 * r1 - a12 * r2) / det;
          const double nv = (a11 * r2 - a12 * r1) / det;
          flow.u(y, x) += omega * (nu - flow.u(y, x));
          flow.v(y, x) += omega * (nv - flow.v(y, x));
        }
      }
    }
  }
}

}  // namespace detail

/// Dense flow a -> b (b(p + f(p)) ~ a(p)) by coarse-to-fine Horn-Schunck with
/// warping. Deterministic: every sweep visits pixels in a fixed order.
inline FlowField estimate_flow(const Image& a, const Image& b, const FlowParams& p = {}) {
  p.validate();
  require_same_shape(a, b, "estimate_flow");
  const int h = a.height(), w = a.width();

  std::vector<Image> pa{gaussian_blur(to_grayscale(a), p.presmooth_sigma)};
  std::vector<Image> pb{gaussian_blur(to_grayscale(b), p.presmooth_sigma)};
  const double anti_alias = 1.0 / (2.0 * p.downscale) * 1.2;
  for (int level = 1; level < p.pyramid_levels; ++level) {
    const int nh = static_cast<int>(std::lround(pa.back().height() * p.downscale));
    const int nw = static_cast<int>(std::lround(pa.back().width() * p.downscale));
    if (nh < 8 || nw < 8) break;
    pa.push_back(detail::resize_bilinear(gaussian_blur(pa.back(), anti_alias), nh, nw));
    pb.push_back(detail::resize_bilinear(gaussian_blur(pb.back(), anti_alias), nh, nw));
  }

  FlowField flow(pa.back().height(), pa.back().width());
  for (int level = static_cast<int>(pa.size()) - 1; level >= 0; --level) {
    if (flow.height() != pa[level].height() || flow.width() != pa[level].width()) {
      flow = detail::resize_flow(flow, pa[level].height(), pa[level].width());
    }
    detail::refine_level(pa[level], pb[level], flow, p);
  }

  const double lim_u = std::nextafter(static_cast<double>(w), 0.0);
  const double lim_v = std::nextafter(static_cast<double>(h), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!std::isfinite(flow.u(y, x)) || !std::isfinite(flow.v(y, x))) {
        throw NumericalError("estimate_flow: non-finite flow");
      }
      flow.u(y, x) = std::clamp(flow.u(y, x), -lim_u, lim_u);
      flow.v(y, x) = std::clamp(flow.v(y, x), -lim_v, lim_v);
    }
  }
  return flow;
}

/// Z = -0.1 * sum_c |i0 - warp(i1, f01)|: brightness-constancy importance.
inline Image importance_z(const Image& i0, const Image& i1, const FlowField& f01) {
  require_same_shape(i0, i1, "importance_z");
  const Image w = backward_warp(i1, f01);
  Image z(i0.height(), i0.width(), 1);
  for (int y = 0; y < i0.height(); ++y) {
    for (int x = 0; x < i0.width(); ++x) {
      double l1 = 0.0;
      for (int c = 0; c < i0.channels(); ++c) l1 += std::abs(i0.at(y, x, c) - w.at(y, x, c));
      z.at(y, x) = -0.1 * l1;
    }
  }
  return z;
}

inline constexpr double kSplatEpsilon = 1e-7;

struct SplatResult {
  Image image;   ///< normalised splat, 0 where nothing arrived
  Mask mask;     ///< 1 where accumulated weight exceeds kSplatEpsilon
  Image weight;  ///< accumulated weight per target pixel
};

/// Softmax splatting: each source pixel p is pushed to p + scale * f(p) and
/// shared bilinearly among the four neighbours with weight b * exp(z(p)).
inline SplatResult softmax_splat(const Image& img, const FlowField& f, const Image& z, double scale) {
  if (img.height() != f.height() || img.width() != f.width() || !img.same_extent(z) || z.channels() != 1) {
    throw InvalidInput("softmax_splat: image, flow and importance extents differ");
  }
  const int h = img.height(), w = img.width(), ch = img.channels();
  Image num(h, w, ch);
  Image den(h, w, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double tx = x + scale * f.u(y, x);
      const double ty = y + scale * f.v(y, x);
      const double ez = std::exp(z.at(y, x));
      const int x0 = static_cast<int>(std::floor(tx));
      const int y0 = static_cast<int>(std::floor(ty));
      const double fx = tx - x0, fy = ty - y0;
      const double wts[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
      const int qx[4] = {x0, x0 + 1, x0, x0 + 1};
      const int qy[4] = {y0, y0, y0 + 1, y0 + 1};
      for (int k = 0; k < 4; ++k) {
        if (wts[k] <= 0.0 || qx[k] < 0 || qx[k] >= w || qy[k] < 0 || qy[k] >= h) continue;
        const double wk = wts[k] * ez;
        den.at(qy[k], qx[k]) += wk;
        for (int c = 0; c < ch; ++c) num.at(qy[k], qx[k], c) += wk * img.at(y, x, c);
      }
    }
  }
  SplatResult r{Image(h, w, ch), Mask(h, w), den};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d = den.at(y, x);
      if (d > kSplatEpsilon) {
        r.mask.at(y, x) = 1.0;
        for (int c = 0; c < ch; ++c) r.image.at(y, x, c) = num.at(y, x, c) / d;
      }
    }
  }
  return r;
}

/// Validity mask at the target time: splat an all-ones image, keep pixels that
/// gathered more than half a unit of weight, then open with a 5x5 square.
inline Mask occlusion_mask(const FlowField& f, double scale) {
  const Image ones(f.height(), f.width(), 1, 1.0);
  const Image zero(f.height(), f.width(), 1, 0.0);
  const SplatResult s = softmax_splat(ones, f, zero, scale);
  return morph(binarize(s.weight, 0.5), MorphOp::open, 5);
}

}  // namespace mird
