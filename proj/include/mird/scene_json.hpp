#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "mird/synthdata.hpp"

// Scene descriptions as JSON:
//   {"height": 64, "width": 96, "seed": 0,
//    "background": {"color": [r,g,b],
//                   "texture": {"amplitude_x": a, "wavelength_x": l, "amplitude_y": a, "wavelength_y": l,
//                               "offset": [x,y], "velocity": [x,y]}},
//    "shapes": [{"kind": "disc"|"rect"|"polygon", "fill": [r,g,b], "outline": [r,g,b],
//                "outline_width": w, "start": [x,y], "velocity": [x,y],
//                "radius": r, "half_size": [hx,hy], "vertices": [[x,y], ...]}]}
// Everything except height and width is optional.

namespace mird {

namespace detail {

using nlohmann::json;

inline Vec2 vec2_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2) throw InvalidInput(std::string("scene: ") + what + " must be [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline Color color_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw InvalidInput(std::string("scene: ") + what + " must be [r, g, b]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json to_json(Vec2 v) { return json::array({v.x, v.y}); }
inline json to_json(const Color& c) { return json::array({c[0], c[1], c[2]}); }

inline ShapeKind shape_kind_from(const std::string& s) {
  if (s == "disc") return ShapeKind::disc;
  if (s == "rect") return ShapeKind::rect;
  if (s == "polygon") return ShapeKind::polygon;
  throw InvalidInput("scene: unknown shape kind '" + s + "'");
}

inline const char* shape_kind_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::disc: return "disc";
    case ShapeKind::rect: return "rect";
    case ShapeKind::polygon: return "polygon";
  }
  return "disc";
}

}  // namespace detail

/// Parses and validates a scene. Malformed JSON or wrong field types throw InvalidInput.
inline SceneSpec scene_from_json(const nlohmann::json& j) {
  using detail::color_from;
  using detail::vec2_from;
  try {
    if (!j.is_object()) throw InvalidInput("scene: top level must be an object");
    SceneSpec spec;
    spec.height = j.at("height").get<int>();
    spec.width = j.at("width").get<int>();
    spec.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("background")) {
      const auto& b = j["background"];
      if (b.contains("color")) spec.background.color = color_from(b["color"], "background.color");
      if (b.contains("texture")) {
        const auto& t = b["texture"];
        Texture tex;
        tex.amplitude_x = t.value("amplitude_x", 0.0);
        tex.wavelength_x = t.value("wavelength_x", 64.0);
        tex.amplitude_y = t.value("amplitude_y", 0.0);
        tex.wavelength_y = t.value("wavelength_y", 64.0);
        if (t.contains("offset")) tex.offset = vec2_from(t["offset"], "texture.offset");
        if (t.contains("velocity")) tex.velocity = vec2_from(t["velocity"], "texture.velocity");
        if (!(tex.wavelength_x > 0.0 && tex.wavelength_y > 0.0)) throw InvalidInput("scene: wavelengths must be positive");
        spec.background.texture = tex;
      }
    }
    if (j.contains("shapes")) {
      for (const auto& s : j["shapes"]) {
        Shape sh;
        sh.kind = detail::shape_kind_from(s.value("kind", std::string("disc")));
        if (s.contains("fill")) sh.fill = color_from(s["fill"], "fill");
        if (s.contains("outline")) sh.outline = color_from(s["outline"], "outline");
        sh.outline_width = s.value("outline_width", 0.0);
        if (s.contains("start")) sh.start = vec2_from(s["start"], "start");
        if (s.contains("velocity")) sh.velocity = vec2_from(s["velocity"], "velocity");
        sh.radius = s.value("radius", sh.radius);
        if (s.contains("half_size")) sh.half_size = vec2_from(s["half_size"], "half_size");
        if (s.contains("vertices")) {
          for (const auto& v : s["vertices"]) sh.vertices.push_back(vec2_from(v, "vertex"));
        }
        spec.shapes.push_back(std::move(sh));
      }
    }
    validate_scene(spec);
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("scene: ") + e.what());
  }
}

inline nlohmann::json scene_to_json(const SceneSpec& spec) {
  using detail::to_json;
  nlohmann::json j;
  j["height"] = spec.height;
  j["width"] = spec.width;
  j["seed"] = spec.seed;
  j["background"]["color"] = to_json(spec.background.color);
  if (spec.background.texture) {
    const Texture& t = *spec.background.texture;
    j["background"]["texture"] = {{"amplitude_x", t.amplitude_x}, {"wavelength_x", t.wavelength_x},
                                  {"amplitude_y", t.amplitude_y}, {"wavelength_y", t.wavelength_y},
                                  {"offset", to_json(t.offset)},  {"velocity", to_json(t.velocity)}};
  }
  j["shapes"] = nlohmann::json::array();
  for (const Shape& sh : spec.shapes) {
    nlohmann::json s = {{"kind", detail::shape_kind_name(sh.kind)},
                        {"fill", to_json(sh.fill)},
                        {"outline", to_json(sh.outline)},
                        {"outline_width", sh.outline_width},
                        {"start", to_json(sh.start)},
                        {"velocity", to_json(sh.velocity)},
                        {"radius", sh.radius},
                        {"half_size", to_json(sh.half_size)}};
    s["vertices"] = nlohmann::json::array();
    for (Vec2 v : sh.vertices) s["vertices"].push_back(to_json(v));
    j["shapes"].push_back(std::move(s));
  }
  return j;
}

inline SceneSpec read_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scene file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInput(std::string("scene: ") + e.what());
  }
  return scene_from_json(j);
}

}  // namespace mird
