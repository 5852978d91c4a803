#pragma once

// Desk-scale evaluation: wrap-seam discontinuity, leveling error, flow
// endpoint error and shift-equivariance residual.

#include <algorithm>
#include <cmath>
#include <vector>

#include "gimbal/error.hpp"
#include "gimbal/flow.hpp"
#include "gimbal/raster.hpp"
#include "gimbal/sphere_geom.hpp"
#include "gimbal/topo/denoiser.hpp"
#include "gimbal/topo/latent_ops.hpp"

#include <json.hpp>

namespace gimbal {

struct SeamReport {
  double seam_mad = 0;
  double interior_mad = 0;
  double seam_ratio = 0;
};

inline constexpr double kSeamEpsilon = 1e-12;

/// Mean absolute difference across the wrap boundary versus the mean over
/// interior adjacent column pairs, pooled over channels and rows.
template <typename Tag>
SeamReport seam_score(const Raster<Tag>& img) {
  const int c = img.channels(), h = img.height(), w = img.width();
  if (w < 2) throw ConfigError("seam score needs width >= 2");
  double seam = 0.0, interior = 0.0;
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      const auto row = img.row(ch, y);
      seam += std::abs(row[0] - row[w - 1]);
      for (int x = 0; x + 1 < w; ++x) interior += std::abs(row[x + 1] - row[x]);
    }
  }
  SeamReport r;
  r.seam_mad = seam / (double(c) * h);
  r.interior_mad = interior / (double(c) * h * (w - 1));
  r.seam_ratio = r.seam_mad / std::max(r.interior_mad, kSeamEpsilon);
  return r;
}

/// Geodesic angle between the pitch/roll parts of two poses, in degrees.
inline double rotation_error_deg(const CameraPose& est, const CameraPose& gt) {
  return rad_to_deg(geodesic_distance(leveling_rotation(est), leveling_rotation(gt)));
}

/// Mean endpoint error over jointly valid pixels.
inline double flow_epe(const DenseFlowField& pred, const DenseFlowField& gt) {
  require_same_shape(pred, gt);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!pred.valid_at(i) || !gt.valid_at(i)) continue;
    sum += std::hypot(pred.dx_at(i) - gt.dx_at(i), pred.dy_at(i) - gt.dy_at(i));
    ++n;
  }
  if (n == 0) throw NumericError("endpoint error needs at least one jointly valid pixel");
  return sum / double(n);
}

struct EquivarianceProbe {
  LatentTensor x;
  int t = 1;
};

/// max over probes and shifts of || roll(f(X, t), d) - f(roll(X, d), t) ||_inf
inline double equivariance_residual(const topo::ToyDenoiser& net, const std::vector<EquivarianceProbe>& probes,
                                    const std::vector<long long>& shifts) {
  double worst = 0.0;
  for (const EquivarianceProbe& p : probes) {
    for (double v : p.x.data())
      if (!std::isfinite(v)) throw NumericError("equivariance probe contains non-finite values");
    const LatentTensor base = net.forward(p.x, p.t);
    for (long long d : shifts) {
      const LatentTensor lhs = topo::roll_latent(base, d);
      const LatentTensor rhs = net.forward(topo::roll_latent(p.x, d), p.t);
      auto a = lhs.data();
      auto b = rhs.data();
      for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    }
  }
  return worst;
}

/// Every shift 1..width-1.
inline std::vector<long long> all_nonzero_shifts(int width) {
  std::vector<long long> s;
  for (int d = 1; d < width; ++d) s.push_back(d);
  return s;
}

/// Peak signal-to-noise ratio for images in [0, 1].
template <typename Tag>
double psnr(const Raster<Tag>& a, const Raster<Tag>& b) {
  if (!a.same_shape(b)) throw ConfigError("psnr needs equally shaped images");
  double mse = 0.0;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) mse += (x[i] - y[i]) * (x[i] - y[i]);
  mse /= double(x.size());
  if (mse == 0.0) return INFINITY;
  return 10.0 * std::log10(1.0 / mse);
}

inline nlohmann::json to_json(const SeamReport& r) {
  return {{"seam_mad", r.seam_mad}, {"interior_mad", r.interior_mad}, {"seam_ratio", r.seam_ratio}};
}

}  // namespace gimbal
