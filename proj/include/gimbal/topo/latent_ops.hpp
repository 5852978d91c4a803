#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "gimbal/error.hpp"
#include "gimbal/raster.hpp"

namespace gimbal::topo {

/// Exact circular shift along width: out[..., x] = in[..., (x - delta) mod w].
inline LatentTensor roll_latent(const LatentTensor& z, long long delta) { return roll_columns(z, delta); }

/// Horizontal boundary handling. Rows are always zero-extended.
enum class Padding { zero = 0, circular = 1 };

inline Padding parse_padding(const std::string& s) {
  if (s == "circular") return Padding::circular;
  if (s == "zero") return Padding::zero;
  throw ConfigError("padding must be 'circular' or 'zero', got '" + s + "'");
}

inline const char* to_string(Padding p) { return p == Padding::circular ? "circular" : "zero"; }

/// Dense kernel, weight[((out * in_ch + in) * kh + ky) * kw + kx].
struct ConvKernel {
  int out_ch = 0;
  int in_ch = 0;
  int kh = 3;
  int kw = 3;
  std::vector<double> weight;

  void validate() const {
    if (kh < 1 || kw < 1 || kh % 2 == 0 || kw % 2 == 0) {
      throw ConfigError("convolution kernel extents must be odd, got " + std::to_string(kh) + "x" +
                        std::to_string(kw));
    }
    if (out_ch < 1 || in_ch < 1) throw ConfigError("convolution channel counts must be positive");
    if (weight.size() != std::size_t(out_ch) * in_ch * kh * kw) {
      throw ConfigError("convolution weight size does not match its shape");
    }
  }
  double at(int o, int i, int ky, int kx) const {
    return weight[((std::size_t(o) * in_ch + i) * kh + ky) * kw + kx];
  }
};

namespace detail {

// Copy of z with rx extra columns on each side, filled by wrapping or with zeros.
inline std::vector<double> pad_columns(const LatentTensor& z, int rx, Padding pad) {
  const int h = z.height(), w = z.width(), pw = w + 2 * rx;
  std::vector<double> out(std::size_t(z.channels()) * h * pw, 0.0);
  for (int c = 0; c < z.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      const double* src = z.row(c, y).data();
      double* dst = out.data() + (std::size_t(c) * h + y) * pw;
      std::copy(src, src + w, dst + rx);
      if (pad == Padding::circular) {
        for (int k = 0; k < rx; ++k) {
          dst[k] = src[wrap_index(k - rx, w)];
          dst[rx + w + k] = src[wrap_index(k, w)];
        }
      }
    }
  }
  return out;
}

}  // namespace detail

namespace detail {

// Column matrix of output row y: entry ((i * kh + ky) * kw + kx, x) holds the
// input sample tap (i, ky, kx) reads for output column x. Rows above or below
// the image are zero.
inline void gather_row(const std::vector<double>& zp, int in_ch, int h, int w, int kh, int kw, int y,
                       std::vector<double>& col) {
  const int ry = kh / 2, pw = w + kw - 1;
  col.assign(std::size_t(in_ch) * kh * kw * w, 0.0);
  for (int i = 0; i < in_ch; ++i) {
    for (int ky = 0; ky < kh; ++ky) {
      const int sy = y + ky - ry;
      if (sy < 0 || sy >= h) continue;
      const double* src = zp.data() + (std::size_t(i) * h + sy) * pw;
      for (int kx = 0; kx < kw; ++kx)
        std::copy(src + kx, src + kx + w, col.begin() + ((std::size_t(i) * kh + ky) * kw + kx) * w);
    }
  }
}

inline constexpr int kBlock = 8;

}  // namespace detail

// Every output sample accumulates its taps in the fixed order (in, ky, kx)
// regardless of its position, so circular mode commutes with roll_latent
// bit-exactly. Zero-padded taps contribute an exact +0.

/// Same-size cross-correlation.
inline LatentTensor circular_conv2d(const LatentTensor& z, const ConvKernel& k, Padding pad) {
  k.validate();
  if (z.channels() != k.in_ch) throw ConfigError("convolution input channels do not match kernel");
  const int h = z.height(), w = z.width();
  const std::size_t taps = std::size_t(k.in_ch) * k.kh * k.kw;
  const std::vector<double> zp = detail::pad_columns(z, k.kw / 2, pad);
  std::vector<double> col;
  LatentTensor out(k.out_ch, h, w);
  for (int y = 0; y < h; ++y) {
    detail::gather_row(zp, k.in_ch, h, w, k.kh, k.kw, y, col);
    for (int o = 0; o < k.out_ch; ++o) {
      const double* wo = k.weight.data() + std::size_t(o) * taps;
      double* dst = out.row(o, y).data();
      int x0 = 0;
      for (; x0 + detail::kBlock <= w; x0 += detail::kBlock) {
        double acc[detail::kBlock] = {};
        for (std::size_t j = 0; j < taps; ++j) {
          const double wt = wo[j];
          const double* c = col.data() + j * w + x0;
          for (int l = 0; l < detail::kBlock; ++l) acc[l] += wt * c[l];
        }
        std::copy(acc, acc + detail::kBlock, dst + x0);
      }
      for (int x = x0; x < w; ++x) {
        double acc = 0.0;
        for (std::size_t j = 0; j < taps; ++j) acc += wo[j] * col[j * w + x];
        dst[x] = acc;
      }
    }
  }
  return out;
}

/// Adjoint of circular_conv2d: accumulates d(loss)/d(input) and d(loss)/d(weight).
/// Either output pointer may be null.
inline void circular_conv2d_backward(const LatentTensor& z, const ConvKernel& k, Padding pad,
                                     const LatentTensor& d_out, LatentTensor* d_in,
                                     std::vector<double>* d_weight) {
  const int h = z.height(), w = z.width();
  const int ry = k.kh / 2, rx = k.kw / 2, pw = w + 2 * rx;
  const std::size_t taps = std::size_t(k.in_ch) * k.kh * k.kw;
  const std::vector<double> zp = detail::pad_columns(z, rx, pad);
  std::vector<double> dp(d_in ? zp.size() : 0, 0.0);
  std::vector<double> col, dcol(taps * w);
  for (int y = 0; y < h; ++y) {
    if (d_weight) {
      detail::gather_row(zp, k.in_ch, h, w, k.kh, k.kw, y, col);
      for (int o = 0; o < k.out_ch; ++o) {
        const double* g = d_out.row(o, y).data();
        double* dw = d_weight->data() + std::size_t(o) * taps;
        for (std::size_t j = 0; j < taps; ++j) {
          const double* c = col.data() + j * w;
          double acc[4] = {0.0, 0.0, 0.0, 0.0};
          int x = 0;
          for (; x + 4 <= w; x += 4)
            for (int l = 0; l < 4; ++l) acc[l] += g[x + l] * c[x + l];
          for (; x < w; ++x) acc[0] += g[x] * c[x];
          dw[j] += (acc[0] + acc[1]) + (acc[2] + acc[3]);
        }
      }
    }
    if (d_in) {
      std::fill(dcol.begin(), dcol.end(), 0.0);
      for (int o = 0; o < k.out_ch; ++o) {
        const double* g = d_out.row(o, y).data();
        const double* wo = k.weight.data() + std::size_t(o) * taps;
        for (std::size_t j = 0; j < taps; ++j) {
          const double wt = wo[j];
          double* dc = dcol.data() + j * w;
          for (int x = 0; x < w; ++x) dc[x] += wt * g[x];
        }
      }
      for (int i = 0; i < k.in_ch; ++i) {
        for (int ky = 0; ky < k.kh; ++ky) {
          const int sy = y + ky - ry;
          if (sy < 0 || sy >= h) continue;
          double* dst = dp.data() + (std::size_t(i) * h + sy) * pw;
          for (int kx = 0; kx < k.kw; ++kx) {
            const double* dc = dcol.data() + ((std::size_t(i) * k.kh + ky) * k.kw + kx) * w;
            for (int x = 0; x < w; ++x) dst[kx + x] += dc[x];
          }
        }
      }
    }
  }
  if (!d_in) return;
  // Fold the padded gradient back onto the input columns.
  for (int c = 0; c < z.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      const double* src = dp.data() + (std::size_t(c) * h + y) * pw;
      double* dst = d_in->row(c, y).data();
      for (int x = 0; x < w; ++x) dst[x] += src[rx + x];
      if (pad == Padding::circular) {
        for (int kk = 0; kk < rx; ++kk) {
          dst[wrap_index(kk - rx, w)] += src[kk];
          dst[wrap_index(kk, w)] += src[rx + w + kk];
        }
      }
    }
  }
}

/// Stacks channels of several tensors with equal spatial size.
inline LatentTensor concat_channels(std::initializer_list<const LatentTensor*> parts) {
  int channels = 0, h = -1, w = -1;
  for (const LatentTensor* p : parts) {
    if (h < 0) {
      h = p->height();
      w = p->width();
    } else if (p->height() != h || p->width() != w) {
      throw ConfigError("channel concatenation needs equal spatial dimensions");
    }
    channels += p->channels();
  }
  LatentTensor out(channels, h, w);
  auto dst = out.data().begin();
  for (const LatentTensor* p : parts) dst = std::copy(p->data().begin(), p->data().end(), dst);
  return out;
}

}  // namespace gimbal::topo
