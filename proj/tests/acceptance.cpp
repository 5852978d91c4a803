// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only if all pass.
// Tolerances and time budgets are fixed here; nothing is read from the command line
// except an optional list of criterion numbers to run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gimbal/leveling.hpp"
#include "gimbal/metrics.hpp"
#include "gimbal/sampler.hpp"
#include "gimbal/topo/attention.hpp"
#include "gimbal/topo/denoiser.hpp"
#include "gimbal/topo/diffusion.hpp"
#include "gimbal/topo/objectives.hpp"
#include "gimbal/topo/toy_corpus.hpp"
#include "gimbal/topo/toy_data.hpp"
#include "oracles.hpp"

using namespace gimbal;
using namespace gimbal::topo;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

DenseFlowField add_noise(DenseFlowField f, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  for (std::size_t i = 0; i < f.size(); ++i) {
    f.dx_at(i) += n(rng);
    f.dy_at(i) += n(rng);
  }
  return f;
}

// ---------------------------------------------------------------------------

Outcome projection_round_trips() {
  constexpr double kTol = 1e-9;
  const double margin = deg_to_rad(1.0);
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  long points = 0;

  // ERP: pixel -> ray -> pixel and ray -> pixel -> ray, away from the poles.
  for (auto [w, h] : {std::pair{512, 256}, std::pair{2048, 1024}, std::pair{64, 32}}) {
    for (int i = 0; i < 5000; ++i) {
      const double u = unit(rng) * w - 0.5, v = unit(rng) * h - 0.5;
      const UnitRay d = erp_pixel_to_ray(u, v, w, h);
      if (std::abs(std::asin(d.y)) > kPi / 2 - margin) continue;
      const PixelCoord q = ray_to_erp_pixel(d, w, h);
      worst = std::max({worst, std::abs(q.u - u), std::abs(q.v - v)});

      const double lon = (unit(rng) * 2 - 1) * kPi;
      const double lat = (unit(rng) * 2 - 1) * (kPi / 2 - margin);
      const UnitRay r{std::cos(lat) * std::sin(lon), std::sin(lat), std::cos(lat) * std::cos(lon)};
      const PixelCoord p = ray_to_erp_pixel(r, w, h);
      const UnitRay back = erp_pixel_to_ray(p.u, p.v, w, h);
      worst = std::max({worst, std::abs(back.x - r.x), std::abs(back.y - r.y), std::abs(back.z - r.z)});
      points += 2;
    }
  }

  // Perspective: same in both directions, away from the frustum edges.
  for (double vfov_deg : {30.0, 60.0, 90.0, 120.0}) {
    for (double aspect : {1.0, 4.0 / 3.0, 16.0 / 9.0}) {
      const auto intr = intrinsics_from_fov(deg_to_rad(vfov_deg), aspect, int(std::lround(256 * aspect)), 256);
      const double ax = std::atan(1.0 / intr.f_x) - margin, ay = std::atan(1.0 / intr.f_y) - margin;
      for (int i = 0; i < 1000; ++i) {
        const double u = unit(rng) * intr.width_px - 0.5, v = unit(rng) * intr.height_px - 0.5;
        const UnitRay d = persp_pixel_to_ray(u, v, intr);
        if (std::abs(std::atan2(d.x, d.z)) > ax || std::abs(std::atan2(d.y, d.z)) > ay) continue;
        const PerspectivePixel q = ray_to_persp_pixel(d, intr);
        if (!q.valid) return {false, "in-frustum ray flagged invalid"};
        worst = std::max({worst, std::abs(q.u - u), std::abs(q.v - v)});

        const UnitRay r = Vec3{std::tan((unit(rng) * 2 - 1) * ax), std::tan((unit(rng) * 2 - 1) * ay), 1.0}.normalized();
        const PerspectivePixel p = ray_to_persp_pixel(r, intr);
        if (!p.valid) return {false, "in-frustum ray flagged invalid"};
        const UnitRay back = persp_pixel_to_ray(p.u, p.v, intr);
        worst = std::max({worst, std::abs(back.x - r.x), std::abs(back.y - r.y), std::abs(back.z - r.z)});
        points += 2;
      }
    }
  }
  return {worst <= kTol && points >= 10000,
          std::to_string(points) + " points, max error " + fmt("%.3g", worst) + " (tol 1e-9)"};
}

Outcome roll_group_laws() {
  std::mt19937_64 rng(202);
  int failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int h = 2 + int(rng() % 15), w = 2 * h;
    ErpImage img(1 + int(rng() % 4), h, w);
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    for (double& v : img.data()) v = val(rng);
    const long long a = (long long)(rng() % 1000) - 500, b = (long long)(rng() % 1000) - 500;
    failures += !(roll_erp(img, 0) == img);
    failures += !(roll_erp(img, w) == img);
    failures += !(roll_erp(roll_erp(img, a), -a) == img);
    failures += !(roll_erp(roll_erp(img, a), b) == roll_erp(img, a + b));
  }
  return {failures == 0, "100 pairs, " + std::to_string(failures) + " bit mismatches"};
}

Outcome solver_oracle() {
  const auto intr = intrinsics_from_fov(deg_to_rad(60.0), 1.0, 64, 64);
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> angle(-30.0, 30.0);
  double worst = 0.0;
  int noisy_ok = 0;
  constexpr int kPoses = 50, kNoisy = 100;
  std::vector<CameraPose> poses;
  for (int i = 0; i < kNoisy; ++i) poses.push_back({0.0, deg_to_rad(angle(rng)), deg_to_rad(angle(rng))});
  for (int i = 0; i < kPoses; ++i) {
    const DenseFlowField flow = gt_leveling_flow(intr, poses[i]);
    const RigidEstimate est = soft_argmin_solve(flow, intr);
    const oracle::PitchRoll ref = oracle::brute_force_leveling(flow, intr, 31.0, 4);
    worst = std::max(worst, rotation_error_deg(est.pose, {0.0, ref.pitch, ref.roll}));
  }
  for (int i = 0; i < kNoisy; ++i) {
    const DenseFlowField noisy = add_noise(gt_leveling_flow(intr, poses[i]), 0.5, 5000 + i);
    noisy_ok += rotation_error_deg(soft_argmin_solve(noisy, intr).pose, poses[i]) <= 1.0;
  }
  return {worst <= 0.25 && noisy_ok >= 95 * kNoisy / 100,
          "noiseless max error vs oracle " + fmt("%.4f", worst) + " deg (tol 0.25); noisy within 1 deg " +
              std::to_string(noisy_ok) + "/" + std::to_string(kNoisy) + " (need 95%)"};
}

Outcome gradient_checks() {
  constexpr double kTol = 1e-4;
  double worst_solver = 0.0, worst_net = 0.0;
  int solver_probes = 0, net_probes = 0;

  {
    const auto intr = intrinsics_from_fov(deg_to_rad(60.0), 1.0, 64, 64);
    const DenseFlowField flow = add_noise(gt_leveling_flow(intr, {0, 0.21, -0.12}), 0.5, 404);
    const SoftArgminConfig cfg;
    const FlowJacobian jac = soft_argmin_gradient(flow, intr, {}, cfg);
    const CandidateGrid& last = jac.estimate.final_grid;
    std::mt19937_64 rng(405);
    const double h = 1e-4;
    while (solver_probes < 20) {
      const std::size_t i = rng() % flow.size();
      if (!flow.valid_at(i)) continue;
      for (int comp = 0; comp < 2; ++comp) {
        DenseFlowField plus = flow, minus = flow;
        (comp ? plus.dy_at(i) : plus.dx_at(i)) += h;
        (comp ? minus.dy_at(i) : minus.dx_at(i)) -= h;
        const PoseParams ep = to_params(soft_argmin_stage(plus, intr, last, cfg.temperature).pose);
        const PoseParams em = to_params(soft_argmin_stage(minus, intr, last, cfg.temperature).pose);
        for (int k = 0; k < 2; ++k) {
          const double analytic = comp ? jac.d_dy[k][i] : jac.d_dx[k][i];
          worst_solver = std::max(worst_solver, oracle::relative_error(analytic, (ep[k] - em[k]) / (2 * h), 1e-9));
        }
      }
      ++solver_probes;
    }
  }

  const auto corpus = make_toy_corpus({2, 8, 16, 8, 406});
  const DiffusionSchedule sched = ddpm_schedule();
  for (bool position : {false, true}) {
    DenoiserSpec spec;
    spec.hidden = 8;
    spec.position_channel = position;
    spec.seed = 407;
    const ToyDenoiser net = make_toy_denoiser(spec);
    Rng rng(408);
    const auto draws = draw_noise(corpus, sched, rng);
    const int delta = 5;
    auto objective = [&](const ToyDenoiser& n) {
      return ldm_loss_with(corpus, n, sched, draws).value + 0.5 * shift_loss_with(corpus, n, sched, draws, delta).value;
    };
    DenoiserGrad grad = ldm_loss_with(corpus, net, sched, draws).grad;
    DenoiserGrad gs = shift_loss_with(corpus, net, sched, draws, delta).grad;
    {
      auto a = parameter_blocks(grad);
      auto b = parameter_blocks(gs);
      for (std::size_t k = 0; k < a.size(); ++k)
        for (std::size_t i = 0; i < a[k].size(); ++i) a[k][i] += 0.5 * b[k][i];
    }
    ToyDenoiser probe = net;
    auto blocks = probe.parameter_blocks();
    auto gblocks = parameter_blocks(grad);
    std::mt19937_64 pick(409);
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      if (blocks[k].empty()) continue;
      for (int p = 0; p < 4; ++p) {
        const std::size_t i = pick() % blocks[k].size();
        const double orig = blocks[k][i], h = 1e-5;
        blocks[k][i] = orig + h;
        const double fp = objective(probe);
        blocks[k][i] = orig - h;
        const double fm = objective(probe);
        blocks[k][i] = orig;
        worst_net = std::max(worst_net, oracle::relative_error(gblocks[k][i], (fp - fm) / (2 * h), 1e-8));
        ++net_probes;
      }
    }
  }
  return {worst_solver < kTol && worst_net < kTol && solver_probes >= 20 && net_probes >= 20,
          "solver " + std::to_string(solver_probes) + " pixels max rel " + fmt("%.2g", worst_solver) + "; net " +
              std::to_string(net_probes) + " weights max rel " + fmt("%.2g", worst_net) + " (tol 1e-4)"};
}

// Least-squares residual of v against span(basis), relative to |v|.
double out_of_span(const std::vector<std::vector<double>>& basis, const std::vector<double>& v) {
  // Gram-Schmidt on the basis, dropping numerically null columns.
  std::vector<std::vector<double>> q;
  for (const auto& b : basis) {
    std::vector<double> u = b;
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& e : q) {
        double d = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) d += u[i] * e[i];
        for (std::size_t i = 0; i < u.size(); ++i) u[i] -= d * e[i];
      }
    double n = 0.0;
    for (double x : u) n += x * x;
    n = std::sqrt(n);
    if (n < 1e-12) continue;
    for (double& x : u) x /= n;
    q.push_back(std::move(u));
  }
  std::vector<double> r = v;
  for (int pass = 0; pass < 2; ++pass)
    for (const auto& e : q) {
      double d = 0.0;
      for (std::size_t i = 0; i < r.size(); ++i) d += r[i] * e[i];
      for (std::size_t i = 0; i < r.size(); ++i) r[i] -= d * e[i];
    }
  double nr = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    nr += r[i] * r[i];
    nv += v[i] * v[i];
  }
  return std::sqrt(nr / nv);
}

Outcome rank_bottleneck() {
  const auto intr = intrinsics_from_fov(deg_to_rad(60.0), 1.0, 48, 48);
  const DenseFlowField flow = add_noise(gt_leveling_flow(intr, {0, 0.17, -0.23}), 0.3, 501);
  const FlowJacobian jac = soft_argmin_gradient(flow, intr);
  bool shape_ok = jac.d_dx.size() == 3 && jac.d_dy.size() == 3;
  for (int k = 0; k < 3; ++k) shape_ok = shape_ok && jac.row(k).size() == 2 * flow.size();

  // Latent-sized panorama warped by the estimate.
  const ErpImage latent = make_toy_panorama(502, 32, 64, 4);
  const RigidEstimate base = soft_argmin_solve(flow, intr);
  auto warp_at = [&](const PoseParams& p) {
    RigidEstimate e = base;
    e.pose = from_params(p);
    const ErpImage out = warp_to_canonical(latent, e);
    return std::vector<double>(out.data().begin(), out.data().end());
  };
  auto central = [&](const PoseParams& dir, double eps) {
    PoseParams p = to_params(base.pose), m = p;
    for (int k = 0; k < 3; ++k) {
      p[k] += eps * dir[k];
      m[k] -= eps * dir[k];
    }
    std::vector<double> a = warp_at(p), b = warp_at(m);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = (a[i] - b[i]) / (2 * eps);
    return a;
  };

  // Sensitivity to each pose parameter spans the admissible subspace.
  const double eps = 1e-7;
  std::vector<std::vector<double>> basis;
  for (int k = 0; k < 3; ++k) {
    PoseParams e{};
    e[k] = 1.0;
    basis.push_back(central(e, eps));
  }

  // Random flow directions pushed through the solver, then through the warp.
  std::mt19937_64 rng(503);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    DenseFlowField dir(flow.width(), flow.height());
    for (std::size_t i = 0; i < dir.size(); ++i) {
      dir.dx_at(i) = n(rng);
      dir.dy_at(i) = n(rng);
    }
    PoseParams dp{};
    for (int k = 0; k < 3; ++k)
      for (std::size_t i = 0; i < flow.size(); ++i) dp[k] += jac.d_dx[k][i] * dir.dx_at(i) + jac.d_dy[k][i] * dir.dy_at(i);
    const double scale = std::sqrt(dp[0] * dp[0] + dp[1] * dp[1] + dp[2] * dp[2]);
    if (scale == 0.0) return {false, "solver Jacobian annihilated a random direction"};
    // Perturb the flow itself and re-solve, so the probe goes through the solver.
    const double h = eps / scale;
    DenseFlowField plus = flow, minus = flow;
    for (std::size_t i = 0; i < flow.size(); ++i) {
      plus.dx_at(i) += h * dir.dx_at(i);
      plus.dy_at(i) += h * dir.dy_at(i);
      minus.dx_at(i) -= h * dir.dx_at(i);
      minus.dy_at(i) -= h * dir.dy_at(i);
    }
    std::vector<double> a = warp_at(to_params(soft_argmin_solve(plus, intr).pose));
    const std::vector<double> b = warp_at(to_params(soft_argmin_solve(minus, intr).pose));
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = (a[i] - b[i]) / (2 * h);
    worst = std::max(worst, out_of_span(basis, a));
  }
  return {shape_ok && worst < 1e-6,
          std::string("Jacobian 3 x ") + std::to_string(2 * flow.size()) + (shape_ok ? "" : " (bad shape)") +
              "; 10 probes, max out-of-subspace residual " + fmt("%.2g", worst) + " (tol 1e-6)"};
}

std::vector<EquivarianceProbe> corpus_probes(const std::vector<ToySample>& corpus, int n, std::uint64_t seed) {
  const DiffusionSchedule sched = ddpm_schedule();
  Rng rng(seed);
  std::vector<EquivarianceProbe> probes;
  for (int i = 0; i < n; ++i) {
    NoiseDraw d;
    d.t = 1 + int(rng() % 100);
    d.eps = gaussian_latent(corpus[i].z0.channels(), corpus[i].z0.height(), corpus[i].z0.width(), rng);
    probes.push_back({network_input(corpus[i], d, sched), d.t});
  }
  return probes;
}

Outcome equivariance_suite() {
  const auto corpus = make_toy_corpus({3, 32, 64, 16, 601});
  const auto probes = corpus_probes(corpus, 3, 602);
  DenoiserSpec spec;
  spec.seed = 603;
  const double circ = equivariance_residual(make_toy_denoiser(spec), probes, all_nonzero_shifts(64));
  spec.padding = Padding::zero;
  const double zero = equivariance_residual(make_toy_denoiser(spec), probes, all_nonzero_shifts(64));

  const int w = 64, h = 2, d = 8;
  Rng rng(604);
  const LatentTensor x = gaussian_latent(d, h, w, rng);
  const PosEncodingGrid p = make_pos_encoding(w, h, d);
  const AttentionWeights aw = make_attention_weights(d, 605);
  double attn = 0.0;
  for (int delta = 0; delta < w; ++delta) {
    const LatentTensor physical = toy_attention_block(roll_latent(x, delta), p, aw);
    const LatentTensor trick = roll_latent(toy_attention_block(x, shifted_pos_encoding(p, delta), aw), delta);
    attn = std::max(attn, max_abs_diff(physical.data(), trick.data()));
  }
  return {circ < 1e-6 && zero > 1e-3 && attn < 1e-6,
          "circular " + fmt("%.2g", circ) + " (< 1e-6), zero-padded " + fmt("%.3g", zero) +
              " (> 1e-3), shift trick vs roll " + fmt("%.2g", attn) + " (< 1e-6)"};
}

Outcome teg_ablation() {
  const auto corpus = make_toy_corpus({64, 32, 64, 16, 11});
  const DiffusionSchedule sched = ddpm_schedule();
  DenoiserSpec spec;
  spec.position_channel = true;
  spec.seed = 5;
  const ToyDenoiser init = make_toy_denoiser(spec);
  const auto probes = corpus_probes(corpus, 4, 99);
  const std::vector<long long> shifts{1, 5, 16, 32, 47, 63};

  double residual[2], seam[2];
  for (int run = 0; run < 2; ++run) {
    TrainConfig cfg;
    cfg.lambda_shift = run == 0 ? 0.0 : 0.5;
    cfg.steps = 500;
    cfg.seed = 3;
    const TrainResult r = train_toy(corpus, cfg, init, sched);
    residual[run] = equivariance_residual(r.net, probes, shifts);
    seam[run] = 0.0;
    for (int k = 0; k < 16; ++k) {
      Rng srng(1000 + k);
      const LatentTensor z = sample_with_rolling(r.net, sched, corpus[k].mask, corpus[k].cond, srng, {RollMode::none, {}});
      seam[run] += seam_score(z).seam_ratio / 16.0;
    }
  }
  const double ratio = residual[1] / residual[0];
  return {ratio < 0.5 && seam[1] < seam[0],
          "residual " + fmt("%.4g", residual[1]) + " vs " + fmt("%.4g", residual[0]) + " (ratio " + fmt("%.3f", ratio) +
              ", need < 0.5); mean seam " + fmt("%.4f", seam[1]) + " vs " + fmt("%.4f", seam[0])};
}

Outcome rolling_sampler() {
  const auto corpus = make_toy_corpus({1, 32, 64, 16, 801});
  const DiffusionSchedule sched = ddpm_schedule();
  DenoiserSpec spec;
  spec.seed = 802;
  const ToyDenoiser circ = make_toy_denoiser(spec);
  spec.position_channel = true;
  const ToyDenoiser pos = make_toy_denoiser(spec);
  const auto& s = corpus[0];

  bool exact = true;
  for (const ToyDenoiser* net : {&circ, &pos}) {
    Rng r1(803), r2(803);
    const LatentTensor plain = sample_with_rolling(*net, sched, s.mask, s.cond, r1, {RollMode::none, {}});
    const LatentTensor forced =
        sample_with_rolling(*net, sched, s.mask, s.cond, r2, {RollMode::forced, std::vector<int>(sched.steps(), 0)});
    exact = exact && plain == forced;
  }
  Rng r3(804), r4(804);
  const LatentTensor plain = sample_with_rolling(circ, sched, s.mask, s.cond, r3, {RollMode::none, {}});
  const LatentTensor rolled = sample_with_rolling(circ, sched, s.mask, s.cond, r4, {RollMode::random, {}});
  const double diff = max_abs_diff(plain.data(), rolled.data());
  return {exact && diff < 1e-5,
          std::string("zero offsets ") + (exact ? "bit-exact" : "differ") + "; circular rolled vs plain " +
              fmt("%.2g", diff) + " (tol 1e-5)"};
}

// Symmetric truncated normal N(0, s) on [-b, b].
struct Truncated {
  double abs_mean, second, tail;  // E|x|, E[x^2], P(|x| > c)
};

Truncated truncated_normal(double s, double b, double c) {
  const double a = b / s, z = std::erf(a / std::sqrt(2.0));
  const double pdf = std::exp(-a * a / 2) / std::sqrt(2 * kPi);
  return {s * std::sqrt(2 / kPi) * (1 - std::exp(-a * a / 2)) / z, s * s * (1 - 2 * a * pdf / z),
          (z - std::erf(c / s / std::sqrt(2.0))) / z};
}

Outcome sampler_conformance() {
  const PoseSamplerConfig cfg;
  SamplerRng rng(901);
  const int n = 1'000'000;
  double pitch_abs = 0, pitch_sq = 0, roll_abs = 0, vfov_sum = 0;
  long pitch_tail = 0, roll_tail = 0;
  std::vector<double> yaw(n);
  std::vector<long> aspect_count(cfg.aspects.size(), 0);
  const double p15 = deg_to_rad(15.0), r5 = deg_to_rad(5.0);
  for (int i = 0; i < n; ++i) {
    const PoseDraw d = sample_pose(rng, cfg);
    pitch_abs += std::abs(d.pose.pitch);
    pitch_sq += d.pose.pitch * d.pose.pitch;
    pitch_tail += std::abs(d.pose.pitch) > p15;
    roll_abs += std::abs(d.pose.roll);
    roll_tail += std::abs(d.pose.roll) > r5;
    vfov_sum += d.intr.vfov;
    yaw[i] = d.pose.yaw;
    for (std::size_t k = 0; k < cfg.aspects.size(); ++k) aspect_count[k] += d.intr.aspect == cfg.aspects[k];
  }

  const double b = deg_to_rad(45.0);
  const Truncated tp = truncated_normal(deg_to_rad(15.0), b, p15), tr = truncated_normal(deg_to_rad(5.0), b, r5);
  const double e_pitch_abs = 0.7 * tp.abs_mean + 0.3 * b / 2, e_pitch_sq = 0.7 * tp.second + 0.3 * b * b / 3;
  const double e_roll_abs = 0.8 * tr.abs_mean + 0.2 * b / 2;
  const double e_roll_tail = 0.8 * tr.tail + 0.2 * (b - r5) / b;
  const double e_vfov = 5.0 / 7.0 * deg_to_rad(60.0) + 2.0 / 7.0 * deg_to_rad(72.5);

  std::sort(yaw.begin(), yaw.end());
  double ks = 0.0;
  for (int i = 0; i < n; ++i) {
    const double cdf = (yaw[i] + kPi) / kTwoPi;
    ks = std::max({ks, std::abs(cdf - double(i) / n), std::abs(cdf - double(i + 1) / n)});
  }
  double aspect_dev = 0.0;
  for (long c : aspect_count) aspect_dev = std::max(aspect_dev, std::abs(double(c) / n - 1.0 / cfg.aspects.size()));

  auto rel = [](double got, double want) { return std::abs(got / want - 1.0); };
  const double tail = double(pitch_tail) / n;
  const double moment_dev = std::max({rel(pitch_abs / n, e_pitch_abs), rel(pitch_sq / n, e_pitch_sq),
                                      rel(roll_abs / n, e_roll_abs), rel(vfov_sum / n, e_vfov)});
  const bool ok = std::abs(tail - 0.4221) <= 0.01 && std::abs(double(roll_tail) / n - e_roll_tail) <= 0.01 &&
                  moment_dev <= 0.01 && ks < 0.01 && aspect_dev <= 0.005;
  return {ok, "pitch tail " + fmt("%.4f", tail) + " (0.4221 +- 0.01), roll tail " + fmt("%.4f", double(roll_tail) / n) +
                  " vs " + fmt("%.4f", e_roll_tail) + ", worst moment rel dev " + fmt("%.2g", moment_dev) +
                  " (<= 1%), yaw KS " + fmt("%.2g", ks) + " (< 0.01), aspect dev " + fmt("%.2g", aspect_dev) +
                  " (<= 0.005)"};
}

Outcome canonicalization_fidelity() {
  const ErpImage pano = make_toy_panorama(1001, 256, 512);
  double worst_psnr = 1e9;
  for (const CameraPose rig : {CameraPose{0.3, deg_to_rad(20.0), 0.0}, CameraPose{-1.0, deg_to_rad(-11.0), deg_to_rad(16.0)},
                               CameraPose{2.0, deg_to_rad(5.0), deg_to_rad(-25.0)}}) {
    worst_psnr = std::min(worst_psnr, psnr(canonicalize_panorama(tilt_panorama(pano, rig), rig), pano));
  }

  // Gaussian band around the horizon; compare per-column intensity centroids with the equator row.
  const int h = 256, w = 512;
  ErpImage band(1, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      band(0, y, x) = std::exp(-std::pow(std::asin(erp_pixel_to_ray(x, y, w, h).y) / deg_to_rad(4.0), 2));
  auto centroid_error = [](const ErpImage& img) {
    double err = 0.0;
    for (int x = 0; x < img.width(); ++x) {
      double s = 0.0, sy = 0.0;
      for (int y = 0; y < img.height(); ++y) {
        s += img(0, y, x);
        sy += img(0, y, x) * y;
      }
      err = std::max(err, std::abs(sy / s - (img.height() / 2.0 - 0.5)));
    }
    return err;
  };
  const CameraPose rig{0.0, deg_to_rad(20.0), 0.0};
  const double err = centroid_error(canonicalize_panorama(tilt_panorama(band, rig), rig));
  return {worst_psnr >= 32.0 && err < 1.0,
          "worst PSNR " + fmt("%.2f", worst_psnr) + " dB (>= 32), equator centroid error " + fmt("%.3f", err) +
              " px (< 1)"};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "projection round trips", 5, projection_round_trips},
      {2, "roll group laws", 1, roll_group_laws},
      {3, "solver vs brute-force oracle", 60, solver_oracle},
      {4, "gradient checks", 30, gradient_checks},
      {5, "rank bottleneck", 30, rank_bottleneck},
      {6, "equivariance suite", 30, equivariance_suite},
      {7, "shift-loss ablation", 15 * 60, teg_ablation},
      {8, "rolling sampler", 120, rolling_sampler},
      {9, "sampler distribution conformance", 60, sampler_conformance},
      {10, "canonicalization fidelity", 30, canonicalization_fidelity},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));

  int failed = 0;
  for (const Criterion& c : all) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_s;
    const bool pass = o.ok && in_time;
    failed += !pass;
    std::printf("%s [%d] %s: %s; %.2f s (budget %g s%s)\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                secs, c.budget_s, in_time ? "" : ", exceeded");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
