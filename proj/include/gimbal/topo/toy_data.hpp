#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "gimbal/raster.hpp"
#include "gimbal/sphere_geom.hpp"

namespace gimbal::topo {

/// Procedural panorama: per channel, a sum of 8 low-frequency waves
/// a_k cos(n_k * lon + m_k * lat + phase_k) with integer azimuthal
/// frequencies n_k in [1, 4], so every channel is exactly periodic in
/// longitude. Values are mapped into [0, 1] by 0.5 + 0.5 * sum / sum|a_k|.
inline ErpImage make_toy_panorama(std::uint64_t seed, int height, int width, int channels = 3) {
  require_erp_shape(height, width);
  constexpr int kTerms = 8;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> n_dist(1, 4);
  std::uniform_real_distribution<double> m_dist(0.0, 3.0);
  std::uniform_real_distribution<double> phase_dist(0.0, kTwoPi);
  std::uniform_real_distribution<double> amp_dist(0.5, 1.0);
  ErpImage img(channels, height, width);
  for (int c = 0; c < channels; ++c) {
    int n[kTerms];
    double m[kTerms], phase[kTerms], amp[kTerms], amp_sum = 0.0;
    for (int k = 0; k < kTerms; ++k) {
      n[k] = n_dist(rng);
      m[k] = m_dist(rng);
      phase[k] = phase_dist(rng);
      amp[k] = amp_dist(rng);
      amp_sum += amp[k];
    }
    for (int y = 0; y < height; ++y) {
      const double lat = kPi / 2.0 - kPi * (y + 0.5) / height;
      for (int x = 0; x < width; ++x) {
        const double lon = kTwoPi * (x + 0.5) / width - kPi;
        double s = 0.0;
        for (int k = 0; k < kTerms; ++k) s += amp[k] * std::cos(n[k] * lon + m[k] * lat + phase[k]);
        img(c, y, x) = 0.5 + 0.5 * s / amp_sum;
      }
    }
  }
  return img;
}

}  // namespace gimbal::topo
