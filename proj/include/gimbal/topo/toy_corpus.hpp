#pragma once

// Toy training corpus: procedural panoramas used directly as latents, with a
// conditioning mask from a sampled camera placed at the leveled, centered pose.

#include <cstdint>
#include <vector>

#include "gimbal/sampler.hpp"
#include "gimbal/sphere_geom.hpp"
#include "gimbal/topo/objectives.hpp"
#include "gimbal/topo/toy_data.hpp"

namespace gimbal::topo {

struct ToyCorpusConfig {
  int count = 64;
  int height = 32;
  int width = 64;
  int crop_height = 16;
  std::uint64_t seed = 0;
};

/// Mask of a camera looking at the canvas center with the given vfov/aspect.
inline LatentTensor centered_view_mask(const CameraIntrinsics& intr, int height, int width) {
  PerspectiveImage ones(1, intr.height_px, intr.width_px);
  for (double& v : ones.data()) v = 1.0;
  return project_perspective_to_erp(ones, intr, CameraPose{}, width, height).mask.as<LatentTag>();
}

inline ToySample make_toy_sample(std::uint64_t seed, int height, int width, int crop_height) {
  SamplerRng rng(seed);
  PoseSamplerConfig pcfg;
  pcfg.crop_height = crop_height;
  const PoseDraw d = sample_pose(rng, pcfg);
  ToySample s;
  s.z0 = make_toy_panorama(rng(), height, width).as<LatentTag>();
  for (double& v : s.z0.data()) v = 2.0 * v - 1.0;
  s.mask = centered_view_mask(d.intr, height, width);
  s.cond = s.z0;
  for (int c = 0; c < s.cond.channels(); ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) s.cond(c, y, x) *= s.mask(0, y, x);
  return s;
}

inline std::vector<ToySample> make_toy_corpus(const ToyCorpusConfig& cfg) {
  require_erp_shape(cfg.height, cfg.width);
  if (cfg.count < 1 || cfg.crop_height < 1) throw ConfigError("toy corpus needs count >= 1 and crop height >= 1");
  std::vector<ToySample> out;
  out.reserve(cfg.count);
  for (int i = 0; i < cfg.count; ++i) out.push_back(make_toy_sample(record_seed(cfg.seed, i), cfg.height, cfg.width, cfg.crop_height));
  return out;
}

}  // namespace gimbal::topo
