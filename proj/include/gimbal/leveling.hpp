#pragma once

// Differentiable auto-leveling.
//
// A tilted pinhole view is related to its gravity-leveled counterpart by a
// dense displacement field. The soft-argmin solver scores a grid of candidate
// (pitch, roll, yaw) rotations by the mean squared residual between the input
// field and each candidate's rigid field, then returns the softmax-weighted
// average of the candidate parameters. Because the output is three numbers,
// any gradient flowing back into the dense field is confined to a rank-3
// subspace.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "gimbal/error.hpp"
#include "gimbal/flow.hpp"
#include "gimbal/sphere_geom.hpp"

namespace gimbal {

struct LevelingDisplacement {
  double dx = 0;
  double dy = 0;
  bool valid = false;
};

/// Displacement of pixel (u, v) of a view with leveling rotation L into the
/// leveled view. Identity L yields exactly zero.
inline LevelingDisplacement leveling_displacement(const CameraIntrinsics& intr, const Rotation& level,
                                                  double u, double v) {
  if (level.is_identity()) return {0.0, 0.0, true};
  const PerspectivePixel p = ray_to_persp_pixel(level.apply(persp_pixel_to_ray(u, v, intr)), intr);
  if (!p.valid) return {};
  return {p.u - u, p.v - v, true};
}

/// Ground-truth leveling flow of a tilted view. Yaw is ignored: leveling
/// only removes pitch and roll.
inline DenseFlowField gt_leveling_flow(const CameraIntrinsics& intr, const CameraPose& pose) {
  const Rotation level = leveling_rotation(pose);
  DenseFlowField flow(intr.width_px, intr.height_px);
  for (int y = 0; y < intr.height_px; ++y) {
    for (int x = 0; x < intr.width_px; ++x) {
      const LevelingDisplacement d = leveling_displacement(intr, level, x, y);
      flow.set_valid(x, y, d.valid);
      if (d.valid) {
        flow.dx(x, y) = d.dx;
        flow.dy(x, y) = d.dy;
      }
    }
  }
  return flow;
}

/// Flow a rigid camera at `candidate` would produce; same construction as the ground truth.
inline DenseFlowField rigid_flow(const CameraIntrinsics& intr, const CameraPose& candidate) {
  return gt_leveling_flow(intr, candidate);
}

/// Mean over jointly valid pixels of |a - b|^2 in px^2, or +inf without overlap.
inline double reprojection_error_or_inf(const DenseFlowField& flow, const DenseFlowField& candidate) {
  require_same_shape(flow, candidate);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < flow.size(); ++i) {
    if (!flow.valid_at(i) || !candidate.valid_at(i)) continue;
    const double ex = flow.dx_at(i) - candidate.dx_at(i);
    const double ey = flow.dy_at(i) - candidate.dy_at(i);
    sum += ex * ex + ey * ey;
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::infinity() : sum / static_cast<double>(n);
}

/// Mean over jointly valid pixels of |a - b|^2, in px^2.
inline double reprojection_error(const DenseFlowField& flow, const DenseFlowField& candidate) {
  require_same_shape(flow, candidate);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < flow.size(); ++i) {
    if (!flow.valid_at(i) || !candidate.valid_at(i)) continue;
    const double ex = flow.dx_at(i) - candidate.dx_at(i);
    const double ey = flow.dy_at(i) - candidate.dy_at(i);
    sum += ex * ex + ey * ey;
    ++n;
  }
  if (n == 0) throw NumericError("reprojection_error: flow fields share no valid pixel");
  return sum / static_cast<double>(n);
}

/// Smooth-L1 (beta = 1) averaged over jointly valid pixels and both components.
inline double smooth_l1_flow_loss(const DenseFlowField& pred, const DenseFlowField& gt) {
  require_same_shape(pred, gt);
  auto huber = [](double d) {
    const double a = std::abs(d);
    return a < 1.0 ? 0.5 * d * d : a - 0.5;
  };
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!pred.valid_at(i) || !gt.valid_at(i)) continue;
    sum += huber(pred.dx_at(i) - gt.dx_at(i)) + huber(pred.dy_at(i) - gt.dy_at(i));
    n += 2;
  }
  if (n == 0) throw NumericError("smooth_l1_flow_loss: no jointly valid pixels");
  return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Candidate grids

/// Inclusive [min, max] sampled at `count` evenly spaced nodes. A single node sits at the midpoint.
struct ParamRange {
  double min = 0;
  double max = 0;
  int count = 1;

  double node(int i) const {
    if (count == 1) return 0.5 * (min + max);
    return min + (max - min) * i / (count - 1);
  }
  double spacing() const { return count > 1 ? (max - min) / (count - 1) : 0.0; }
};

/// Parameter order everywhere: pitch, roll, yaw.
inline constexpr int kPitch = 0;
inline constexpr int kRoll = 1;
inline constexpr int kYaw = 2;
using PoseParams = std::array<double, 3>;

inline PoseParams to_params(const CameraPose& p) { return {p.pitch, p.roll, p.yaw}; }
inline CameraPose from_params(const PoseParams& p) { return {p[kYaw], p[kPitch], p[kRoll]}; }

struct CandidateGrid {
  ParamRange pitch{deg_to_rad(-45.0), deg_to_rad(45.0), 9};
  ParamRange roll{deg_to_rad(-45.0), deg_to_rad(45.0), 9};
  ParamRange yaw{0.0, 0.0, 1};

  const ParamRange& axis(int k) const { return k == kPitch ? pitch : k == kRoll ? roll : yaw; }
  ParamRange& axis(int k) { return k == kPitch ? pitch : k == kRoll ? roll : yaw; }

  void validate() const {
    for (int k = 0; k < 3; ++k) {
      const ParamRange& r = axis(k);
      if (r.count < 1) throw ConfigError("candidate grid counts must be >= 1");
      if (!(r.min <= r.max) || !std::isfinite(r.min) || !std::isfinite(r.max)) {
        throw ConfigError("candidate grid ranges must be finite and ordered");
      }
    }
  }

  std::size_t size() const { return std::size_t(pitch.count) * roll.count * yaw.count; }

  /// Nodes in pitch-major, then roll, then yaw order.
  std::vector<PoseParams> nodes() const {
    std::vector<PoseParams> out;
    out.reserve(size());
    for (int i = 0; i < pitch.count; ++i)
      for (int j = 0; j < roll.count; ++j)
        for (int k = 0; k < yaw.count; ++k) out.push_back({pitch.node(i), roll.node(j), yaw.node(k)});
    return out;
  }

  /// Same counts, each half-width scaled by `shrink`, centered on `center`.
  CandidateGrid recentered(const PoseParams& center, double shrink) const {
    CandidateGrid g = *this;
    for (int k = 0; k < 3; ++k) {
      const double half = 0.5 * (axis(k).max - axis(k).min) * shrink;
      g.axis(k).min = center[k] - half;
      g.axis(k).max = center[k] + half;
    }
    return g;
  }
};

struct SoftArgminConfig {
  double temperature = 0.5;  // px^2
  int stages = 3;
  double shrink = 0.2;

  void validate() const {
    if (!(temperature > 0.0)) throw ConfigError("soft-argmin temperature must be > 0");
    if (stages < 1) throw ConfigError("soft-argmin needs at least one stage");
    if (!(shrink > 0.0 && shrink < 1.0)) throw ConfigError("soft-argmin shrink must lie in (0, 1)");
  }
};

struct RigidEstimate {
  CameraPose pose;
  CandidateGrid final_grid;
  std::vector<PoseParams> candidates;  // final-stage nodes
  std::vector<double> errors;          // E_i, px^2
  std::vector<double> weights;         // softmax(-E_i / tau)
  double final_error = 0;              // reprojection error of `pose`
};

namespace detail {

inline void require_finite_flow(const DenseFlowField& flow) {
  for (std::size_t i = 0; i < flow.size(); ++i) {
    if (flow.valid_at(i) && !(std::isfinite(flow.dx_at(i)) && std::isfinite(flow.dy_at(i)))) {
      throw NumericError("flow field has non-finite displacements at valid pixels");
    }
  }
}

/// Numerically stable softmax of -errors / tau. Infinite errors get weight 0.
inline std::vector<double> soft_weights(const std::vector<double>& errors, double tau) {
  const double best = *std::min_element(errors.begin(), errors.end());
  if (!std::isfinite(best)) throw NumericError("no candidate shares a valid pixel with the flow field");
  std::vector<double> w(errors.size());
  double total = 0.0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    w[i] = std::exp(-(errors[i] - best) / tau);
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

struct StageEval {
  std::vector<PoseParams> nodes;
  std::vector<DenseFlowField> flows;
  std::vector<double> errors;
  std::vector<double> weights;
  PoseParams estimate{};
};

inline StageEval evaluate_stage(const DenseFlowField& flow, const CameraIntrinsics& intr,
                                const CandidateGrid& grid, double tau, bool keep_flows) {
  StageEval s;
  s.nodes = grid.nodes();
  s.errors.reserve(s.nodes.size());
  for (const PoseParams& n : s.nodes) {
    DenseFlowField cand = rigid_flow(intr, from_params(n));
    // Candidates whose view leaves no overlap with the input cannot explain it.
    s.errors.push_back(reprojection_error_or_inf(flow, cand));
    if (keep_flows) s.flows.push_back(std::move(cand));
  }
  s.weights = soft_weights(s.errors, tau);
  for (std::size_t i = 0; i < s.nodes.size(); ++i)
    for (int k = 0; k < 3; ++k) s.estimate[k] += s.weights[i] * s.nodes[i][k];
  return s;
}

inline void check_flow_matches(const DenseFlowField& flow, const CameraIntrinsics& intr) {
  if (flow.width() != intr.width_px || flow.height() != intr.height_px) {
    throw ConfigError("flow dimensions do not match intrinsics pixel size");
  }
  if (flow.valid_count() == 0) throw NumericError("flow field has no valid pixels");
  require_finite_flow(flow);
}

inline CandidateGrid final_stage_grid(const DenseFlowField& flow, const CameraIntrinsics& intr,
                                      const CandidateGrid& grid, const SoftArgminConfig& cfg) {
  CandidateGrid g = grid;
  for (int stage = 1; stage < cfg.stages; ++stage) {
    const StageEval s = evaluate_stage(flow, intr, g, cfg.temperature, false);
    g = grid.recentered(s.estimate, std::pow(cfg.shrink, stage));
  }
  return g;
}

}  // namespace detail

/// Single soft-argmin pass over a fixed grid.
inline RigidEstimate soft_argmin_stage(const DenseFlowField& flow, const CameraIntrinsics& intr,
                                       const CandidateGrid& grid, double temperature) {
  grid.validate();
  if (!(temperature > 0.0)) throw ConfigError("soft-argmin temperature must be > 0");
  detail::check_flow_matches(flow, intr);
  detail::StageEval s = detail::evaluate_stage(flow, intr, grid, temperature, false);
  RigidEstimate est;
  est.pose = from_params(s.estimate);
  est.final_grid = grid;
  est.candidates = std::move(s.nodes);
  est.errors = std::move(s.errors);
  est.weights = std::move(s.weights);
  est.final_error = reprojection_error(flow, rigid_flow(intr, est.pose));
  return est;
}

/// Coarse-to-fine soft-argmin: each later stage re-centers the grid on the
/// running estimate with its half-widths scaled by shrink^stage.
inline RigidEstimate soft_argmin_solve(const DenseFlowField& flow, const CameraIntrinsics& intr,
                                       const CandidateGrid& grid = {},
                                       const SoftArgminConfig& cfg = {}) {
  grid.validate();
  cfg.validate();
  detail::check_flow_matches(flow, intr);
  return soft_argmin_stage(flow, intr, detail::final_stage_grid(flow, intr, grid, cfg),
                           cfg.temperature);
}

/// d(estimated parameter k) / d(flow component) for every pixel. Entries at
/// invalid pixels are zero.
struct FlowJacobian {
  int width = 0;
  int height = 0;
  std::array<std::vector<double>, 3> d_dx;  // indexed [param][y * width + x]
  std::array<std::vector<double>, 3> d_dy;
  RigidEstimate estimate;

  /// Row k of the 3 x (2 * pixels) Jacobian, dx block then dy block.
  std::vector<double> row(int k) const {
    std::vector<double> r(d_dx[k]);
    r.insert(r.end(), d_dy[k].begin(), d_dy[k].end());
    return r;
  }
};

/// Analytic gradient of the soft-argmin estimate with respect to the input
/// flow. Earlier refinement stages only pick the final grid; the derivative
/// is taken through the final stage.
inline FlowJacobian soft_argmin_gradient(const DenseFlowField& flow, const CameraIntrinsics& intr,
                                         const CandidateGrid& grid = {},
                                         const SoftArgminConfig& cfg = {}) {
  grid.validate();
  cfg.validate();
  detail::check_flow_matches(flow, intr);
  const CandidateGrid last = detail::final_stage_grid(flow, intr, grid, cfg);
  const double tau = cfg.temperature;
  const detail::StageEval s = detail::evaluate_stage(flow, intr, last, tau, true);

  FlowJacobian jac;
  jac.width = flow.width();
  jac.height = flow.height();
  for (int k = 0; k < 3; ++k) {
    jac.d_dx[k].assign(flow.size(), 0.0);
    jac.d_dy[k].assign(flow.size(), 0.0);
  }
  // d est_k / d E_j = -(1/tau) w_j (theta_jk - est_k)
  // d E_j / d f(p)  = 2 (f(p) - c_j(p)) / N_j on jointly valid p
  for (std::size_t j = 0; j < s.nodes.size(); ++j) {
    if (s.weights[j] == 0.0) continue;
    const DenseFlowField& cand = s.flows[j];
    std::size_t n_joint = 0;
    for (std::size_t i = 0; i < flow.size(); ++i) n_joint += flow.valid_at(i) && cand.valid_at(i);
    std::array<double, 3> coef{};
    for (int k = 0; k < 3; ++k)
      coef[k] = -(1.0 / tau) * s.weights[j] * (s.nodes[j][k] - s.estimate[k]) * 2.0 /
                static_cast<double>(n_joint);
    for (std::size_t i = 0; i < flow.size(); ++i) {
      if (!flow.valid_at(i) || !cand.valid_at(i)) continue;
      const double rx = flow.dx_at(i) - cand.dx_at(i);
      const double ry = flow.dy_at(i) - cand.dy_at(i);
      for (int k = 0; k < 3; ++k) {
        jac.d_dx[k][i] += coef[k] * rx;
        jac.d_dy[k][i] += coef[k] * ry;
      }
    }
  }
  jac.estimate.pose = from_params(s.estimate);
  jac.estimate.final_grid = last;
  jac.estimate.candidates = s.nodes;
  jac.estimate.errors = s.errors;
  jac.estimate.weights = s.weights;
  jac.estimate.final_error = reprojection_error(flow, rigid_flow(intr, jac.estimate.pose));
  return jac;
}

/// Leveling rotation implied by an estimate: undoes pitch and roll, keeps yaw.
inline Rotation canonicalizing_rotation(const CameraPose& pose) { return leveling_rotation(pose); }

/// Warps a conditioning ERP (image, latent, or mask) into the canonical frame.
template <typename Tag>
Raster<Tag> warp_to_canonical(const Raster<Tag>& cond, const RigidEstimate& estimate) {
  return rotate_erp(cond, canonicalizing_rotation(estimate.pose));
}

}  // namespace gimbal
