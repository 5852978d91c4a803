#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gimbal/error.hpp"

namespace gimbal::topo {

/// Linear-beta DDPM schedule. Timesteps are 1-based: t in [1, T].
class DiffusionSchedule {
 public:
  DiffusionSchedule() = default;
  explicit DiffusionSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
    if (betas_.size() < 2) throw ConfigError("diffusion schedule needs at least 2 steps");
    double prod = 1.0;
    for (std::size_t i = 0; i < betas_.size(); ++i) {
      const double b = betas_[i];
      if (!(b > 0.0 && b < 1.0)) throw ConfigError("beta values must lie in (0, 1)");
      if (i > 0 && !(b > betas_[i - 1])) throw ConfigError("beta values must be strictly increasing");
      prod *= 1.0 - b;
      alpha_bars_.push_back(prod);
    }
  }

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const { return betas_.at(t - 1); }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const { return alpha_bars_.at(t - 1); }

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

inline DiffusionSchedule ddpm_schedule(int steps = 100, double beta_start = 1e-4, double beta_end = 0.02) {
  if (steps < 2) throw ConfigError("diffusion schedule needs T >= 2");
  if (!(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0)) {
    throw ConfigError("need 0 < beta_start < beta_end < 1");
  }
  std::vector<double> betas(steps);
  for (int i = 0; i < steps; ++i) betas[i] = beta_start + (beta_end - beta_start) * i / (steps - 1);
  return DiffusionSchedule(std::move(betas));
}

}  // namespace gimbal::topo
