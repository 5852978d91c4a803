#pragma once

// Single-head attention over a latent's tokens with additive positional
// encodings. Attention is permutation-equivariant, so a physical circular
// shift of the tokens can be traded for a re-indexing of the encodings.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "gimbal/error.hpp"
#include "gimbal/raster.hpp"
#include "gimbal/sphere_geom.hpp"

namespace gimbal::topo {

/// Encoding vectors for every (x, y), stored at ((y * width + x) * dim + k).
struct PosEncodingGrid {
  int width = 0;
  int height = 0;
  int dim = 0;
  std::vector<double> values;

  const double* at(int x, int y) const { return values.data() + (std::size_t(y) * width + x) * dim; }
  friend bool operator==(const PosEncodingGrid&, const PosEncodingGrid&) = default;
};

/// Deterministic sinusoidal encoding. The first half of the dimensions uses
/// integer frequencies around the width so it is exactly periodic in x; the
/// second half encodes y.
inline PosEncodingGrid make_pos_encoding(int width, int height, int dim) {
  if (width < 1 || height < 1 || dim < 4 || dim % 4 != 0) {
    throw ConfigError("positional encoding needs positive size and dim divisible by 4");
  }
  PosEncodingGrid g{width, height, dim, std::vector<double>(std::size_t(width) * height * dim)};
  const int quarter = dim / 4;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double* p = g.values.data() + (std::size_t(y) * width + x) * dim;
      for (int f = 0; f < quarter; ++f) {
        const double ax = kTwoPi * (f + 1) * x / width;
        const double ay = kPi * (f + 1) * (y + 0.5) / height;
        p[2 * f] = std::sin(ax);
        p[2 * f + 1] = std::cos(ax);
        p[2 * quarter + 2 * f] = std::sin(ay);
        p[2 * quarter + 2 * f + 1] = std::cos(ay);
      }
    }
  }
  return g;
}

/// out(x, y) = in((x + offset) mod width, y).
inline PosEncodingGrid reindex_pos_encoding(const PosEncodingGrid& g, long long offset) {
  PosEncodingGrid out = g;
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      const double* src = g.at(wrap_index(x + offset, g.width), y);
      std::copy(src, src + g.dim, out.values.begin() + (std::size_t(y) * g.width + x) * g.dim);
    }
  }
  return out;
}

/// Each stationary token receives the encoding of the coordinate it would
/// occupy after roll_latent(., delta), i.e. P((x + delta) mod W, y). The sign
/// is pinned by the roll/re-index equivalence test.
inline constexpr int kPositionShiftSign = +1;

inline PosEncodingGrid shifted_pos_encoding(const PosEncodingGrid& g, long long delta) {
  return reindex_pos_encoding(g, kPositionShiftSign * delta);
}

/// Query/key/value projections, each dim x dim, row-major.
struct AttentionWeights {
  int dim = 0;
  std::vector<double> wq, wk, wv;
};

inline AttentionWeights make_attention_weights(int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(double(dim)));
  AttentionWeights w{dim, {}, {}, {}};
  for (auto* m : {&w.wq, &w.wk, &w.wv}) {
    m->resize(std::size_t(dim) * dim);
    for (double& v : *m) v = n(rng);
  }
  return w;
}

/// Tokens are the (x, y) positions of `tokens`; features are its channels.
/// The encoding dimension must equal the channel count.
inline LatentTensor toy_attention_block(const LatentTensor& tokens, const PosEncodingGrid& pos,
                                        const AttentionWeights& w) {
  const int d = tokens.channels();
  if (pos.dim != d || w.dim != d) throw ConfigError("attention dims must match the token channels");
  if (pos.width != tokens.width() || pos.height != tokens.height()) {
    throw ConfigError("positional grid does not match token layout");
  }
  const int hw = tokens.height() * tokens.width();
  auto project = [d](const std::vector<double>& m, const double* in, double* out) {
    for (int r = 0; r < d; ++r) {
      double s = 0.0;
      for (int c = 0; c < d; ++c) s += m[std::size_t(r) * d + c] * in[c];
      out[r] = s;
    }
  };
  std::vector<double> q(std::size_t(hw) * d), k(q.size()), v(q.size()), h(d);
  for (int n = 0; n < hw; ++n) {
    const int y = n / tokens.width(), x = n % tokens.width();
    const double* p = pos.at(x, y);
    for (int c = 0; c < d; ++c) h[c] = tokens(c, y, x) + p[c];
    project(w.wq, h.data(), q.data() + std::size_t(n) * d);
    project(w.wk, h.data(), k.data() + std::size_t(n) * d);
    project(w.wv, h.data(), v.data() + std::size_t(n) * d);
  }
  const double scale = 1.0 / std::sqrt(double(d));
  LatentTensor out(d, tokens.height(), tokens.width());
  std::vector<double> logits(hw);
  for (int n = 0; n < hw; ++n) {
    double best = -1e300;
    for (int m = 0; m < hw; ++m) {
      double s = 0.0;
      for (int c = 0; c < d; ++c) s += q[std::size_t(n) * d + c] * k[std::size_t(m) * d + c];
      logits[m] = s * scale;
      best = std::max(best, logits[m]);
    }
    double total = 0.0;
    for (double& l : logits) total += (l = std::exp(l - best));
    const int y = n / tokens.width(), x = n % tokens.width();
    for (int c = 0; c < d; ++c) {
      double acc = 0.0;
      for (int m = 0; m < hw; ++m) acc += logits[m] * v[std::size_t(m) * d + c];
      out(c, y, x) = acc / total;
    }
  }
  return out;
}

}  // namespace gimbal::topo
