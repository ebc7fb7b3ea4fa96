#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mird/error.hpp"

namespace mird {

/// Dense H x W x C raster of doubles, row-major with interleaved channels.
///
/// Frames and edge maps hold unit-interval intensities; the same container
/// also carries unclamped intermediates (distances, flow magnitudes, diffusion
/// states), so the [0,1] range is checked only where a frame is expected
/// (see `is_unit_range`).
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0)
      : height_(height), width_(width), channels_(channels) {
    if (height < 0 || width < 0 || channels < 1) {
      throw InvalidInput("Image: invalid dimensions");
    }
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  }
  Image(int height, int width, int channels, std::vector<double> data)
      : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    if (height < 0 || width < 0 || channels < 1 ||
        data_.size() != static_cast<std::size_t>(height) * width * channels) {
      throw InvalidInput("Image: data length does not match dimensions");
    }
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixels() const noexcept { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& at(int y, int x, int c = 0) noexcept { return data_[index(y, x, c)]; }
  double at(int y, int x, int c = 0) const noexcept { return data_[index(y, x, c)]; }

  /// Edge-replicated access.
  double clamped(int y, int x, int c = 0) const noexcept {
    return at(std::clamp(y, 0, height_ - 1), std::clamp(x, 0, width_ - 1), c);
  }

  std::span<double> data() & noexcept { return data_; }
  std::span<const double> data() const& noexcept { return data_; }
  std::vector<double> data() && noexcept { return std::move(data_); }
  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  bool same_shape(const Image& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }
  bool same_extent(const Image& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_;
  }

  bool is_unit_range() const noexcept {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; });
  }
  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 1;
  std::vector<double> data_;
};

/// Single-plane H x W map with values in [0,1]; binary masks hold only {0,1}.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, double fill = 0.0) : height_(height), width_(width) {
    if (height < 0 || width < 0) throw InvalidInput("Mask: invalid dimensions");
    data_.assign(static_cast<std::size_t>(height) * width, fill);
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& at(int y, int x) noexcept { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  double at(int y, int x) const noexcept { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<double> data() & noexcept { return data_; }
  std::span<const double> data() const& noexcept { return data_; }
  std::vector<double> data() && noexcept { return std::move(data_); }

  bool is_binary() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return v == 0.0 || v == 1.0; });
  }
  double count() const noexcept {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
  }

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

inline Image to_image(const Mask& m) {
  return Image(m.height(), m.width(), 1, std::vector<double>(m.data().begin(), m.data().end()));
}

/// Interprets a 1-channel image as a mask; values > threshold become 1.
inline Mask binarize(const Image& img, double threshold) {
  if (img.channels() != 1) throw InvalidInput("binarize: expects a 1-channel image");
  Mask m(img.height(), img.width());
  auto src = img.data();
  auto dst = m.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > threshold ? 1.0 : 0.0;
  return m;
}

inline void require_same_shape(const Image& a, const Image& b, const char* where) {
  if (!a.same_shape(b)) throw InvalidInput(std::string(where) + ": image shapes differ");
}

inline void require_same_extent(const Image& a, const Image& b, const char* where) {
  if (!a.same_extent(b)) throw InvalidInput(std::string(where) + ": spatial extents differ");
}

inline Image clamp_unit(Image img) {
  for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

}  // namespace mird
