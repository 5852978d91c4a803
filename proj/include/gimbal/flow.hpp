#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "gimbal/error.hpp"

namespace gimbal {

/// Per-pixel (dx, dy) displacement in pixels with a validity plane.
/// Invalid pixels are excluded from every reduction.
class DenseFlowField {
 public:
  DenseFlowField() = default;
  DenseFlowField(int width, int height)
      : width_(width), height_(height), dx_(count(width, height)), dy_(count(width, height)),
        valid_(count(width, height), 0) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return dx_.size(); }

  double& dx(int x, int y) { return dx_[idx(x, y)]; }
  double& dy(int x, int y) { return dy_[idx(x, y)]; }
  double dx(int x, int y) const { return dx_[idx(x, y)]; }
  double dy(int x, int y) const { return dy_[idx(x, y)]; }
  bool valid(int x, int y) const { return valid_[idx(x, y)] != 0; }
  void set_valid(int x, int y, bool v) { valid_[idx(x, y)] = v ? 1 : 0; }

  // Flat access, index = y * width + x.
  double& dx_at(std::size_t i) { return dx_[i]; }
  double& dy_at(std::size_t i) { return dy_[i]; }
  double dx_at(std::size_t i) const { return dx_[i]; }
  double dy_at(std::size_t i) const { return dy_[i]; }
  bool valid_at(std::size_t i) const { return valid_[i] != 0; }
  void set_valid_at(std::size_t i, bool v) { valid_[i] = v ? 1 : 0; }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto v : valid_) n += v;
    return n;
  }
  double valid_fraction() const { return size() ? double(valid_count()) / double(size()) : 0.0; }

  bool same_shape(const DenseFlowField& o) const { return width_ == o.width_ && height_ == o.height_; }

  friend bool operator==(const DenseFlowField&, const DenseFlowField&) = default;

 private:
  static std::size_t count(int w, int h) {
    if (w < 1 || h < 1) throw ConfigError("flow field dimensions must be positive");
    return static_cast<std::size_t>(w) * h;
  }
  std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> dx_, dy_;
  std::vector<std::uint8_t> valid_;
};

inline void require_same_shape(const DenseFlowField& a, const DenseFlowField& b) {
  if (!a.same_shape(b)) throw ConfigError("flow fields have mismatched dimensions");
}

// ---------------------------------------------------------------------------
// GFLW binary format:
//   "GFLW" | u32 width | u32 height | width*height (f32 dx, f32 dy) | width*height u8 valid
// All integers and floats little-endian, rows top to bottom. Displacements
// are quantized to f32 on write.

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

inline float get_f32(const unsigned char* p) {
  const std::uint32_t bits = get_u32(p);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

}  // namespace detail

inline std::string encode_gflw(const DenseFlowField& flow) {
  std::string out = "GFLW";
  out.reserve(12 + flow.size() * 9);
  detail::put_u32(out, static_cast<std::uint32_t>(flow.width()));
  detail::put_u32(out, static_cast<std::uint32_t>(flow.height()));
  for (std::size_t i = 0; i < flow.size(); ++i) {
    detail::put_f32(out, static_cast<float>(flow.dx_at(i)));
    detail::put_f32(out, static_cast<float>(flow.dy_at(i)));
  }
  for (std::size_t i = 0; i < flow.size(); ++i) out.push_back(flow.valid_at(i) ? 1 : 0);
  return out;
}

inline DenseFlowField decode_gflw(const std::string& bytes) {
  if (bytes.size() < 12 || bytes.compare(0, 4, "GFLW") != 0) throw IoError("not a GFLW stream");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t w = detail::get_u32(p + 4);
  const std::uint32_t h = detail::get_u32(p + 8);
  if (w == 0 || h == 0 || w > (1u << 16) || h > (1u << 16)) throw IoError("GFLW: bad dimensions");
  const std::size_t n = std::size_t(w) * h;
  if (bytes.size() != 12 + n * 9) throw IoError("GFLW: truncated or oversized payload");
  DenseFlowField flow(static_cast<int>(w), static_cast<int>(h));
  const unsigned char* f = p + 12;
  for (std::size_t i = 0; i < n; ++i) {
    flow.dx_at(i) = detail::get_f32(f + 8 * i);
    flow.dy_at(i) = detail::get_f32(f + 8 * i + 4);
  }
  const unsigned char* valid = f + 8 * n;
  for (std::size_t i = 0; i < n; ++i) {
    if (valid[i] > 1) throw IoError("GFLW: validity byte must be 0 or 1");
    flow.set_valid(static_cast<int>(i % w), static_cast<int>(i / w), valid[i] == 1);
  }
  return flow;
}

inline void write_gflw(const std::string& path, const DenseFlowField& flow) {
  detail::write_file_bytes(path, encode_gflw(flow));
}

inline DenseFlowField read_gflw(const std::string& path) {
  return decode_gflw(detail::read_file_bytes(path));
}

}  // namespace gimbal
