#pragma once

// Training-data pipeline: mixture-distribution camera sampling, yaw-invariant
// centering, canonicalization of posed panoramas, and assembly of
// (crop, mask, leveling flow, centered panorama) records.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gimbal/error.hpp"
#include "gimbal/flow.hpp"
#include "gimbal/leveling.hpp"
#include "gimbal/raster.hpp"
#include "gimbal/sphere_geom.hpp"

namespace gimbal {

using SamplerRng = std::mt19937_64;

/// With probability p_gauss draw N(mean, sigma) truncated to [bound_min,
/// bound_max] by rejection, otherwise U(uniform_min, uniform_max). Radians.
struct MixtureSpec {
  double p_gauss = 0;
  double mean = 0;
  double sigma = 1;
  double uniform_min = 0;
  double uniform_max = 0;
  double bound_min = 0;
  double bound_max = 0;

  void validate(const char* name) const {
    const std::string n(name);
    if (!(p_gauss >= 0.0 && p_gauss <= 1.0)) throw ConfigError(n + ": mixture probability outside [0, 1]");
    if (!(sigma > 0.0)) throw ConfigError(n + ": sigma must be > 0");
    if (!(uniform_min <= uniform_max)) throw ConfigError(n + ": uniform range is not ordered");
    if (!(bound_min < bound_max)) throw ConfigError(n + ": truncation bounds are not ordered");
    if (p_gauss > 0.0 && !(mean >= bound_min && mean <= bound_max)) {
      throw ConfigError(n + ": Gaussian mean lies outside its truncation bounds");
    }
  }
};

struct PoseSamplerConfig {
  MixtureSpec pitch{0.7, 0.0, deg_to_rad(15.0), deg_to_rad(-45.0), deg_to_rad(45.0), deg_to_rad(-45.0),
                    deg_to_rad(45.0)};
  MixtureSpec roll{0.8, 0.0, deg_to_rad(5.0), deg_to_rad(-45.0), deg_to_rad(45.0), deg_to_rad(-45.0),
                   deg_to_rad(45.0)};
  // 50% Gaussian / 20% uniform, renormalized to 5/7 and 2/7.
  MixtureSpec vfov{5.0 / 7.0, deg_to_rad(60.0), deg_to_rad(10.0), deg_to_rad(45.0), deg_to_rad(100.0),
                   deg_to_rad(5.0), deg_to_rad(175.0)};
  double yaw_min = -kPi;
  double yaw_max = kPi;
  std::vector<double> aspects{1.0, 4.0 / 3.0, 3.0 / 2.0, 16.0 / 9.0};
  int crop_height = 64;
  int supersample = 1;
  double min_valid_fraction = 0.25;
  int max_attempts = 20;

  void validate() const {
    pitch.validate("pitch");
    roll.validate("roll");
    vfov.validate("vfov");
    if (vfov.bound_min < deg_to_rad(5.0) || vfov.bound_max > deg_to_rad(175.0) ||
        vfov.uniform_min < deg_to_rad(5.0) || vfov.uniform_max > deg_to_rad(175.0)) {
      throw ConfigError("vfov: samples must stay within (5, 175) degrees");
    }
    if (!(yaw_min < yaw_max)) throw ConfigError("yaw range is not ordered");
    if (aspects.empty()) throw ConfigError("aspect set is empty");
    for (double a : aspects)
      if (!(a > 0.0)) throw ConfigError("aspect ratios must be positive");
    if (crop_height < 1 || supersample < 1 || max_attempts < 1) throw ConfigError("invalid crop settings");
  }
};

inline double draw_mixture(SamplerRng& rng, const MixtureSpec& m) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < m.p_gauss) {
    std::normal_distribution<double> g(m.mean, m.sigma);
    for (;;) {
      const double x = g(rng);
      if (x >= m.bound_min && x <= m.bound_max) return x;
    }
  }
  return std::uniform_real_distribution<double>(m.uniform_min, m.uniform_max)(rng);
}

struct PoseDraw {
  CameraPose pose;
  CameraIntrinsics intr;
};

/// Draw order: yaw, pitch, roll, vfov, aspect.
inline PoseDraw sample_pose(SamplerRng& rng, const PoseSamplerConfig& cfg) {
  PoseDraw d;
  d.pose.yaw = std::uniform_real_distribution<double>(cfg.yaw_min, cfg.yaw_max)(rng);
  d.pose.pitch = draw_mixture(rng, cfg.pitch);
  d.pose.roll = draw_mixture(rng, cfg.roll);
  const double vfov = draw_mixture(rng, cfg.vfov);
  const double aspect =
      cfg.aspects[std::uniform_int_distribution<std::size_t>(0, cfg.aspects.size() - 1)(rng)];
  const int width = std::max(1, static_cast<int>(std::lround(cfg.crop_height * aspect)));
  d.intr = intrinsics_from_fov(vfov, aspect, width, cfg.crop_height);
  return d;
}

struct YawCentering {
  ErpImage image;
  long long shift = 0;     // columns applied with roll_erp
  double residual_yaw = 0;  // yaw left after the integer shift, radians
};

/// Rolls the panorama by the integer column count nearest to -yaw * W / 2pi
/// so the view at `yaw` lands on the canvas center. The sub-column remainder
/// is returned as residual_yaw.
inline YawCentering yaw_center(const ErpImage& erp, double yaw) {
  const int w = erp.width();
  YawCentering out;
  out.shift = std::llround(-yaw * w / kTwoPi);
  out.residual_yaw = yaw + static_cast<double>(out.shift) * kTwoPi / w;
  out.image = out.shift == 0 ? erp : roll_erp(erp, out.shift);
  return out;
}

/// Panorama captured by a rig with the given pitch/roll, i.e. rig ray d sees world ray L d.
template <typename Tag>
Raster<Tag> tilt_panorama(const Raster<Tag>& canonical, const CameraPose& rig_pose) {
  return rotate_erp(canonical, leveling_rotation(rig_pose).transpose());
}

/// Removes a known rig pitch/roll so the horizon lies on the equator. Yaw is preserved.
template <typename Tag>
Raster<Tag> canonicalize_panorama(const Raster<Tag>& erp, const CameraPose& known_pose) {
  return rotate_erp(erp, leveling_rotation(known_pose));
}

struct SampleRecord {
  std::string source_id;
  std::uint64_t seed = 0;
  CameraPose pose;  // yaw is the residual after centering
  CameraIntrinsics intr;
  long long yaw_shift = 0;
  PerspectiveImage crop;
  DenseFlowField flow;
  ErpImage mask;  // conditioning mask at the leveled pose, centered frame
  ErpImage erp;   // centered ground-truth panorama
};

/// Assembles a record for an explicit camera. The crop is rendered from the
/// centered panorama with the stored pose, so replaying (erp, pose, intr)
/// regenerates it exactly.
inline SampleRecord make_training_sample_at(const ErpImage& erp_gt, const CameraPose& pose,
                                            const CameraIntrinsics& intr, int supersample = 1) {
  require_erp_shape(erp_gt.height(), erp_gt.width());
  SampleRecord rec;
  YawCentering centered = yaw_center(erp_gt, pose.yaw);
  rec.yaw_shift = centered.shift;
  rec.pose = {centered.residual_yaw, pose.pitch, pose.roll};
  rec.intr = intr;
  rec.erp = std::move(centered.image);
  rec.crop = render_perspective_from_erp(rec.erp, intr, rec.pose, supersample);
  rec.flow = gt_leveling_flow(intr, rec.pose);
  const CameraPose leveled{rec.pose.yaw, 0.0, 0.0};
  rec.mask = project_perspective_to_erp(rec.crop, intr, leveled, rec.erp.width(), rec.erp.height()).mask;
  return rec;
}

/// Fraction of the analytic frustum solid angle that the ERP mask covers.
inline double mask_coverage(const SampleRecord& rec) {
  return erp_solid_angle_fraction(rec.mask) / frustum_solid_angle_fraction(rec.intr);
}

/// Samples a camera and assembles a record, redrawing while the flow's valid
/// fraction or the mask coverage falls below cfg.min_valid_fraction.
inline SampleRecord make_training_sample(const ErpImage& erp_gt, SamplerRng& rng, const PoseSamplerConfig& cfg) {
  cfg.validate();
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    const PoseDraw d = sample_pose(rng, cfg);
    SampleRecord rec = make_training_sample_at(erp_gt, d.pose, d.intr, cfg.supersample);
    if (rec.flow.valid_fraction() >= cfg.min_valid_fraction && mask_coverage(rec) >= cfg.min_valid_fraction) {
      return rec;
    }
  }
  throw NumericError("sampler rejected " + std::to_string(cfg.max_attempts) +
                     " consecutive draws (min valid fraction " + std::to_string(cfg.min_valid_fraction) +
                     ", crop height " + std::to_string(cfg.crop_height) + ", erp " +
                     std::to_string(erp_gt.width()) + "x" + std::to_string(erp_gt.height()) + ")");
}

/// Independent per-record stream seed (splitmix64 of master seed and index).
inline std::uint64_t record_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace gimbal
