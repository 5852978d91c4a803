#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gimbal/error.hpp"

namespace gimbal {

// Storage is planar: value(c, y, x) lives at (c * height + y) * width + x.
// All samples are double; PNG I/O converts at the boundary.

struct ErpTag {};
struct PerspectiveTag {};
struct LatentTag {};

template <typename Tag>
class Raster {
 public:
  Raster() = default;
  Raster(int channels, int height, int width, double fill = 0.0)
      : channels_(channels), height_(height), width_(width) {
    if (channels < 1 || height < 1 || width < 1) {
      throw ConfigError("raster dimensions must be positive, got " + std::to_string(channels) +
                        "x" + std::to_string(height) + "x" + std::to_string(width));
    }
    data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
  }

  int channels() const noexcept { return channels_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t plane_size() const noexcept { return static_cast<std::size_t>(height_) * width_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(int c, int y, int x) { return data_[index(c, y, x)]; }
  double operator()(int c, int y, int x) const { return data_[index(c, y, x)]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const double> plane(int c) const {
    return {data_.data() + c * plane_size(), plane_size()};
  }
  std::span<double> row(int c, int y) { return {data_.data() + index(c, y, 0), std::size_t(width_)}; }
  std::span<const double> row(int c, int y) const {
    return {data_.data() + index(c, y, 0), std::size_t(width_)};
  }

  bool same_shape(const Raster& o) const noexcept {
    return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
  }

  friend bool operator==(const Raster&, const Raster&) = default;

  /// Reinterprets the same samples under another domain tag.
  template <typename Other>
  Raster<Other> as() const {
    Raster<Other> out(channels_, height_, width_);
    std::copy(data_.begin(), data_.end(), out.data().begin());
    return out;
  }

 private:
  std::size_t index(int c, int y, int x) const noexcept {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// Equirectangular raster; the width axis is periodic.
using ErpImage = Raster<ErpTag>;
/// Bounded pinhole raster; no wraparound.
using PerspectiveImage = Raster<PerspectiveTag>;
/// C x h x w latent grid with a periodic width axis.
using LatentTensor = Raster<LatentTag>;

inline int wrap_index(long long i, int n) noexcept {
  long long r = i % n;
  return static_cast<int>(r < 0 ? r + n : r);
}

inline void require_erp_shape(int height, int width) {
  if (height < 1 || width != 2 * height) {
    throw ConfigError("ERP raster must be 2:1, got " + std::to_string(width) + "x" +
                      std::to_string(height));
  }
}

/// Exact circular shift along width: out(c, y, x) = in(c, y, (x - shift) mod W).
template <typename Tag>
Raster<Tag> roll_columns(const Raster<Tag>& in, long long shift) {
  Raster<Tag> out(in.channels(), in.height(), in.width());
  const int w = in.width();
  const int s = wrap_index(shift, w);
  for (int c = 0; c < in.channels(); ++c) {
    for (int y = 0; y < in.height(); ++y) {
      auto src = in.row(c, y);
      auto dst = out.row(c, y);
      // dst[x] = src[x - s] for x >= s; dst[x] = src[x - s + w] below.
      std::copy(src.begin(), src.end() - s, dst.begin() + s);
      std::copy(src.end() - s, src.end(), dst.begin());
    }
  }
  return out;
}

}  // namespace gimbal
