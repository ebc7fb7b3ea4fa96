#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "mird/flow.hpp"

namespace mird {

// Middlebury .flo: float32 magic 202021.25, int32 width, int32 height, then
// height * width interleaved (u, v) float32, all little-endian, row-major.

inline constexpr float kFloMagic = 202021.25f;

namespace detail {

inline std::uint32_t load_le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void store_le32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

}  // namespace detail

inline std::vector<unsigned char> encode_flo(const FlowField& f) {
  std::vector<unsigned char> out;
  out.reserve(12 + static_cast<std::size_t>(f.height()) * f.width() * 8);
  detail::store_le32(out, std::bit_cast<std::uint32_t>(kFloMagic));
  detail::store_le32(out, static_cast<std::uint32_t>(f.width()));
  detail::store_le32(out, static_cast<std::uint32_t>(f.height()));
  for (double d : f.data()) detail::store_le32(out, std::bit_cast<std::uint32_t>(static_cast<float>(d)));
  return out;
}

inline FlowField decode_flo(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4) throw FormatError("flo: truncated header", bytes.size());
  const float magic = std::bit_cast<float>(detail::load_le32(bytes.data()));
  if (magic != kFloMagic) throw FormatError("flo: bad magic", 0);
  if (bytes.size() < 12) throw FormatError("flo: truncated header", bytes.size());
  const auto width = static_cast<std::int32_t>(detail::load_le32(bytes.data() + 4));
  const auto height = static_cast<std::int32_t>(detail::load_le32(bytes.data() + 8));
  if (width <= 0 || height <= 0) throw FormatError("flo: non-positive dimensions", 4);
  const std::size_t expected = 12 + static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 8;
  if (bytes.size() < expected) throw FormatError("flo: truncated payload", bytes.size());
  if (bytes.size() > expected) throw FormatError("flo: trailing bytes", expected);

  FlowField f(height, width);
  auto data = f.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t off = 12 + 4 * i;
    const float v = std::bit_cast<float>(detail::load_le32(bytes.data() + off));
    if (!std::isfinite(v)) throw FormatError("flo: non-finite value", off);
    data[i] = v;
  }
  return f;
}

inline FlowField read_flo(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_flo(bytes);
}

/// Values are stored as float32; fields round-trip bit-exactly when they
/// already hold float-representable values (as any decoded field does).
inline void write_flo(const FlowField& f, const std::filesystem::path& path) {
  if (!f.all_finite()) throw InvalidInput("write_flo: non-finite flow");
  const auto bytes = encode_flo(f);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace mird
