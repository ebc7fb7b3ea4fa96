#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mird/flow.hpp"
#include "mird/png_io.hpp"
#include "mird/rng.hpp"

namespace mird {

using Color = std::array<double, 3>;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
};

/// Smooth panning pattern added to the background colour:
/// ax sin(2 pi (x - ox - vx s) / lx) + ay sin(2 pi (y - oy - vy s) / ly).
struct Texture {
  double amplitude_x = 0.0;
  double wavelength_x = 64.0;
  double amplitude_y = 0.0;
  double wavelength_y = 64.0;
  Vec2 offset;
  Vec2 velocity;
};

struct Background {
  Color color{1.0, 1.0, 1.0};
  std::optional<Texture> texture;
};

enum class ShapeKind { disc, rect, polygon };

struct Shape {
  ShapeKind kind = ShapeKind::disc;
  Color fill{0.0, 0.0, 0.0};
  Color outline{0.0, 0.0, 0.0};
  double outline_width = 0.0;  ///< px, drawn inside the boundary
  Vec2 start;                  ///< position at s = 0
  Vec2 velocity;               ///< px per unit time
  double radius = 10.0;        ///< disc
  Vec2 half_size{10.0, 10.0};  ///< rect
  std::vector<Vec2> vertices;  ///< polygon, relative to the position

  Vec2 position(double s) const { return start + s * velocity; }
};

struct SceneSpec {
  int height = 64;
  int width = 64;
  Background background;
  std::vector<Shape> shapes;
  std::uint64_t seed = 0;
};

namespace detail {

inline double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a, ap = p - a;
  const double len2 = ab.x * ab.x + ab.y * ab.y;
  const double t = len2 > 0.0 ? std::clamp((ap.x * ab.x + ap.y * ab.y) / len2, 0.0, 1.0) : 0.0;
  const double dx = ap.x - t * ab.x, dy = ap.y - t * ab.y;
  return std::sqrt(dx * dx + dy * dy);
}

/// Signed distance to the shape boundary at time s (negative inside).
inline double signed_distance(const Shape& sh, Vec2 p, double s) {
  const Vec2 c = sh.position(s);
  const Vec2 d = p - c;
  switch (sh.kind) {
    case ShapeKind::disc:
      return std::sqrt(d.x * d.x + d.y * d.y) - sh.radius;
    case ShapeKind::rect: {
      const double qx = std::abs(d.x) - sh.half_size.x, qy = std::abs(d.y) - sh.half_size.y;
      const double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0);
      return std::sqrt(ox * ox + oy * oy) + std::min(std::max(qx, qy), 0.0);
    }
    case ShapeKind::polygon: {
      const auto& v = sh.vertices;
      double dist = std::numeric_limits<double>::infinity();
      bool inside = false;
      for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
        dist = std::min(dist, segment_distance(d, v[j], v[i]));
        if ((v[i].y > d.y) != (v[j].y > d.y) &&
            d.x < (v[j].x - v[i].x) * (d.y - v[i].y) / (v[j].y - v[i].y) + v[i].x) {
          inside = !inside;
        }
      }
      return inside ? -dist : dist;
    }
  }
  return std::numeric_limits<double>::infinity();
}

struct Bounds {
  double x0, y0, x1, y1;
};

inline Bounds shape_bounds(const Shape& sh, double s) {
  const Vec2 c = sh.position(s);
  switch (sh.kind) {
    case ShapeKind::disc:
      return {c.x - sh.radius, c.y - sh.radius, c.x + sh.radius, c.y + sh.radius};
    case ShapeKind::rect:
      return {c.x - sh.half_size.x, c.y - sh.half_size.y, c.x + sh.half_size.x, c.y + sh.half_size.y};
    case ShapeKind::polygon: {
      Bounds b{c.x, c.y, c.x, c.y};
      bool first = true;
      for (Vec2 v : sh.vertices) {
        const Vec2 q = c + v;
        if (first) {
          b = {q.x, q.y, q.x, q.y};
          first = false;
        }
        b.x0 = std::min(b.x0, q.x);
        b.y0 = std::min(b.y0, q.y);
        b.x1 = std::max(b.x1, q.x);
        b.y1 = std::max(b.y1, q.y);
      }
      return b;
    }
  }
  return {};
}

inline Color background_at(const Background& bg, Vec2 p, double s) {
  Color c = bg.color;
  if (bg.texture) {
    const Texture& t = *bg.texture;
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double v = 0.0;
    if (t.amplitude_x != 0.0) v += t.amplitude_x * std::sin(two_pi * (p.x - t.offset.x - s * t.velocity.x) / t.wavelength_x);
    if (t.amplitude_y != 0.0) v += t.amplitude_y * std::sin(two_pi * (p.y - t.offset.y - s * t.velocity.y) / t.wavelength_y);
    for (double& ch : c) ch = std::clamp(ch + v, 0.0, 1.0);
  }
  return c;
}

inline Color shade(const SceneSpec& spec, Vec2 p, double s) {
  Color c = background_at(spec.background, p, s);
  for (const Shape& sh : spec.shapes) {
    const double d = signed_distance(sh, p, s);
    if (d > 0.0) continue;
    c = (sh.outline_width > 0.0 && d > -sh.outline_width) ? sh.outline : sh.fill;
  }
  return c;
}

}  // namespace detail

inline void validate_scene(const SceneSpec& spec) {
  if (spec.height <= 0 || spec.width <= 0) throw InvalidInput("scene: canvas must be non-empty");
  auto unit = [](const Color& c) {
    return std::all_of(c.begin(), c.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
  };
  if (!unit(spec.background.color)) throw InvalidInput("scene: background colour outside [0,1]");
  for (std::size_t i = 0; i < spec.shapes.size(); ++i) {
    const Shape& sh = spec.shapes[i];
    const std::string tag = "scene: shape " + std::to_string(i);
    if (!unit(sh.fill) || !unit(sh.outline)) throw InvalidInput(tag + " colour outside [0,1]");
    if (sh.kind == ShapeKind::polygon && sh.vertices.size() < 3) throw InvalidInput(tag + " polygon needs 3 vertices");
    if (sh.kind == ShapeKind::disc && !(sh.radius > 0.0)) throw InvalidInput(tag + " radius must be positive");
    // linear trajectories: checking both ends covers all s in [0,1]
    for (double s : {0.0, 1.0}) {
      const auto b = detail::shape_bounds(sh, s);
      if (b.x0 < 0.0 || b.y0 < 0.0 || b.x1 > spec.width - 1 || b.y1 > spec.height - 1) {
        throw InvalidInput(tag + " leaves the canvas at s=" + std::to_string(s));
      }
    }
  }
}

/// Flat-shaded scene at time s. Pixels within ~1px of any shape boundary are
/// supersampled 4x4; everything else is shaded at the pixel centre.
inline Image render(const SceneSpec& spec, double s) {
  validate_scene(spec);
  constexpr int ss = 4;
  Image img(spec.height, spec.width, 3);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const Vec2 p{static_cast<double>(x), static_cast<double>(y)};
      bool boundary = false;
      for (const Shape& sh : spec.shapes) {
        const double d = detail::signed_distance(sh, p, s);
        if (std::abs(d) < 1.0 || (sh.outline_width > 0.0 && std::abs(d + sh.outline_width) < 1.0)) {
          boundary = true;
          break;
        }
      }
      Color c{0.0, 0.0, 0.0};
      if (!boundary) {
        c = detail::shade(spec, p, s);
      } else {
        for (int sy = 0; sy < ss; ++sy) {
          for (int sx = 0; sx < ss; ++sx) {
            const Vec2 q{x - 0.5 + (sx + 0.5) / ss, y - 0.5 + (sy + 0.5) / ss};
            const Color cq = detail::shade(spec, q, s);
            for (int k = 0; k < 3; ++k) c[k] += cq[k];
          }
        }
        for (double& v : c) v /= ss * ss;
      }
      for (int k = 0; k < 3; ++k) img.at(y, x, k) = c[k];
    }
  }
  return img;
}

/// Ground-truth motion from s = 0 to s = 1: the velocity of the top-most shape
/// covering each pixel centre at s = 0, else the background pan velocity.
inline FlowField analytic_flow(const SceneSpec& spec) {
  const Vec2 bg = spec.background.texture ? spec.background.texture->velocity : Vec2{};
  FlowField f(spec.height, spec.width, bg.x, bg.y);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const Vec2 p{static_cast<double>(x), static_cast<double>(y)};
      for (const Shape& sh : spec.shapes) {
        if (detail::signed_distance(sh, p, 0.0) <= 0.0) {
          f.u(y, x) = sh.velocity.x;
          f.v(y, x) = sh.velocity.y;
        }
      }
    }
  }
  return f;
}

/// Time-reversed scene: render(reversed(spec), s) == render(spec, 1 - s).
inline SceneSpec reversed(SceneSpec spec) {
  for (Shape& sh : spec.shapes) {
    sh.start = sh.start + sh.velocity;
    sh.velocity = -1.0 * sh.velocity;
  }
  if (spec.background.texture) {
    Texture& t = *spec.background.texture;
    t.offset = t.offset + t.velocity;
    t.velocity = -1.0 * t.velocity;
  }
  return spec;
}

enum class TripletSource { synthetic, disk };

struct TripletSample {
  std::string name;
  Image i0, i_tau, i1;
  std::optional<double> tau_true;
  std::optional<FlowField> gt_flow_01;
  TripletSource source = TripletSource::synthetic;
};

inline TripletSample gen_triplet(const SceneSpec& spec, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidInput("gen_triplet: tau must lie in (0,1)");
  TripletSample t;
  t.name = "synthetic";
  t.i0 = render(spec, 0.0);
  t.i_tau = render(spec, tau);
  t.i1 = render(spec, 1.0);
  t.tau_true = tau;
  t.gt_flow_01 = analytic_flow(spec);
  return t;
}

struct RandomSceneOptions {
  int shapes = 3;
  double max_speed = 12.0;   ///< px per unit time, per axis
  bool textured_background = false;
  bool common_velocity = false;  ///< all shapes (and texture) move together
  double outline_width = 1.5;
};

/// Random cel-style translation scene, reproducible from the seed.
inline SceneSpec random_scene(int height, int width, std::uint64_t seed, const RandomSceneOptions& opt = {}) {
  Rng rng(seed, 0x5ce7eULL);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
  SceneSpec spec;
  spec.height = height;
  spec.width = width;
  spec.seed = seed;
  const double light = uni(0.75, 0.95);
  spec.background.color = {light, uni(0.7, 0.95), uni(0.7, 0.95)};
  const Vec2 common{uni(-opt.max_speed, opt.max_speed), uni(-opt.max_speed, opt.max_speed)};
  if (opt.textured_background) {
    Texture tex;
    tex.amplitude_x = 0.08;
    tex.wavelength_x = uni(40.0, 70.0);
    tex.amplitude_y = 0.08;
    tex.wavelength_y = uni(30.0, 60.0);
    tex.velocity = opt.common_velocity ? common : Vec2{};
    spec.background.texture = tex;
  }
  const double extent = std::min(height, width);
  for (int i = 0; i < opt.shapes; ++i) {
    Shape sh;
    const int kind = static_cast<int>(rng.uniform() * 3.0);
    sh.kind = kind == 0 ? ShapeKind::disc : kind == 1 ? ShapeKind::rect : ShapeKind::polygon;
    sh.fill = {uni(0.05, 0.7), uni(0.05, 0.7), uni(0.05, 0.7)};
    sh.outline = {0.05, 0.05, 0.05};
    sh.outline_width = opt.outline_width;
    sh.velocity = opt.common_velocity ? common : Vec2{uni(-opt.max_speed, opt.max_speed), uni(-opt.max_speed, opt.max_speed)};
    const double size = uni(0.08, 0.16) * extent;
    sh.radius = size;
    sh.half_size = {size * uni(0.7, 1.3), size * uni(0.7, 1.3)};
    if (sh.kind == ShapeKind::polygon) {
      const int n = 3 + static_cast<int>(rng.uniform() * 3.0);
      const double phase = uni(0.0, 2.0 * std::numbers::pi);
      for (int k = 0; k < n; ++k) {
        const double a = phase + 2.0 * std::numbers::pi * k / n;
        const double r = size * uni(0.8, 1.2);
        sh.vertices.push_back({r * std::cos(a), r * std::sin(a)});
      }
    }
    const double reach = 1.3 * size + 2.0;
    const double lo_x = reach + std::max(0.0, -sh.velocity.x), hi_x = width - 1 - reach - std::max(0.0, sh.velocity.x);
    const double lo_y = reach + std::max(0.0, -sh.velocity.y), hi_y = height - 1 - reach - std::max(0.0, sh.velocity.y);
    if (hi_x <= lo_x || hi_y <= lo_y) throw InvalidInput("random_scene: canvas too small for the requested motion");
    sh.start = {uni(lo_x, hi_x), uni(lo_y, hi_y)};
    spec.shapes.push_back(std::move(sh));
  }
  validate_scene(spec);
  return spec;
}

/// Full-frame horizontal pan of a smooth texture by `shift` pixels per unit time.
inline SceneSpec panning_texture_scene(int height, int width, double shift, std::uint64_t seed = 0) {
  Rng rng(seed, 0x9a7ULL);
  SceneSpec spec;
  spec.height = height;
  spec.width = width;
  spec.seed = seed;
  spec.background.color = {0.5, 0.5, 0.5};
  Texture tex;
  tex.amplitude_x = 0.2;
  tex.wavelength_x = 50.0 + 15.0 * rng.uniform();
  tex.amplitude_y = 0.2;
  tex.wavelength_y = 35.0 + 10.0 * rng.uniform();
  tex.offset = {60.0 * rng.uniform(), 0.0};
  tex.velocity = {shift, 0.0};
  spec.background.texture = tex;
  return spec;
}

struct TripletLoad {
  std::vector<TripletSample> samples;
  std::vector<std::pair<std::string, std::string>> errors;  ///< (subfolder, reason)
};

/// Loads every subfolder holding frame1.png, frame2.png, frame3.png, in
/// lexicographic order. Broken subfolders are reported and skipped.
inline TripletLoad load_triplets(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> subdirs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) subdirs.push_back(e.path());
  }
  std::sort(subdirs.begin(), subdirs.end());
  TripletLoad out;
  for (const auto& sd : subdirs) {
    const std::string name = sd.filename().string();
    try {
      TripletSample t;
      t.name = name;
      t.source = TripletSource::disk;
      for (const char* f : {"frame1.png", "frame2.png", "frame3.png"}) {
        if (!fs::exists(sd / f)) throw IoError(std::string("missing ") + f);
      }
      t.i0 = read_png(sd / "frame1.png");
      t.i_tau = read_png(sd / "frame2.png");
      t.i1 = read_png(sd / "frame3.png");
      if (!t.i0.same_shape(t.i_tau) || !t.i0.same_shape(t.i1)) throw IoError("frame shapes differ");
      out.samples.push_back(std::move(t));
    } catch (const std::exception& e) {
      out.errors.emplace_back(name, e.what());
    }
  }
  return out;
}

}  // namespace mird
