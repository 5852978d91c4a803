#pragma once

// Training objectives, the SGD loop, and the DDPM sampler for the toy denoiser.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "gimbal/error.hpp"
#include "gimbal/topo/denoiser.hpp"
#include "gimbal/topo/diffusion.hpp"
#include "gimbal/topo/latent_ops.hpp"

namespace gimbal::topo {

/// One training example: clean latent z0, conditioning mask M (1 channel),
/// and the canonical conditioning latent.
struct ToySample {
  LatentTensor z0;
  LatentTensor mask;
  LatentTensor cond;
};
using ToyBatch = std::vector<ToySample>;

using Rng = std::mt19937_64;

inline LatentTensor gaussian_latent(int c, int h, int w, Rng& rng) {
  LatentTensor z(c, h, w);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : z.data()) v = n(rng);
  return z;
}

/// Timestep and noise shared by every pass that sees one sample.
struct NoiseDraw {
  int t = 1;
  LatentTensor eps;
};

inline std::vector<NoiseDraw> draw_noise(const ToyBatch& batch, const DiffusionSchedule& sched, Rng& rng) {
  std::vector<NoiseDraw> out;
  std::uniform_int_distribution<int> tdist(1, sched.steps());
  for (const ToySample& s : batch) {
    NoiseDraw d;
    d.t = tdist(rng);
    d.eps = gaussian_latent(s.z0.channels(), s.z0.height(), s.z0.width(), rng);
    out.push_back(std::move(d));
  }
  return out;
}

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
inline LatentTensor diffuse(const LatentTensor& z0, const LatentTensor& eps, double alpha_bar) {
  LatentTensor zt(z0.channels(), z0.height(), z0.width());
  const double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
  auto o = zt.data();
  auto x = z0.data();
  auto e = eps.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a * x[i] + b * e[i];
  return zt;
}

inline LatentTensor network_input(const ToySample& s, const NoiseDraw& d, const DiffusionSchedule& sched) {
  const LatentTensor zt = diffuse(s.z0, d.eps, sched.alpha_bar(d.t));
  return concat_channels({&zt, &s.mask, &s.cond});
}

struct LossResult {
  double value = 0;
  DenoiserGrad grad;
};

namespace detail {

inline double mean_sq_diff(const LatentTensor& a, const LatentTensor& b, LatentTensor* d_a, double scale) {
  auto x = a.data();
  auto y = b.data();
  const double n = static_cast<double>(x.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = x[i] - y[i];
    s += r * r;
    if (d_a) d_a->data()[i] = scale * 2.0 * r / n;
  }
  return s / n;
}

inline void require_batch(const ToyBatch& batch) {
  if (batch.empty()) throw ConfigError("loss needs a non-empty batch");
}

}  // namespace detail

/// Denoising objective with fixed draws: mean over the batch of mean |eps - eps_hat|^2.
inline LossResult ldm_loss_with(const ToyBatch& batch, const ToyDenoiser& net, const DiffusionSchedule& sched,
                                const std::vector<NoiseDraw>& draws) {
  detail::require_batch(batch);
  LossResult r{0.0, net.zero_grad()};
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ToyDenoiser::Cache cache;
    const LatentTensor pred = net.forward(network_input(batch[i], draws[i], sched), draws[i].t, &cache);
    LatentTensor d_pred(pred.channels(), pred.height(), pred.width());
    r.value += inv_b * detail::mean_sq_diff(pred, draws[i].eps, &d_pred, inv_b);
    net.backward(cache, d_pred, r.grad);
  }
  return r;
}

inline LossResult ldm_loss(const ToyBatch& batch, const ToyDenoiser& net, const DiffusionSchedule& sched, Rng& rng) {
  return ldm_loss_with(batch, net, sched, draw_noise(batch, sched, rng));
}

/// Siamese shift objective with fixed draws: mean |Roll_delta(f(X)) - f(Roll_delta(X))|^2,
/// gradients through both passes.
inline LossResult shift_loss_with(const ToyBatch& batch, const ToyDenoiser& net, const DiffusionSchedule& sched,
                                  const std::vector<NoiseDraw>& draws, int delta) {
  detail::require_batch(batch);
  LossResult r{0.0, net.zero_grad()};
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const LatentTensor x = network_input(batch[i], draws[i], sched);
    ToyDenoiser::Cache base_cache, shifted_cache;
    const LatentTensor base = net.forward(x, draws[i].t, &base_cache);
    const LatentTensor shifted = net.forward(roll_latent(x, delta), draws[i].t, &shifted_cache);
    LatentTensor d_rolled(base.channels(), base.height(), base.width());
    r.value += inv_b * detail::mean_sq_diff(roll_latent(base, delta), shifted, &d_rolled, inv_b);
    LatentTensor d_shifted = d_rolled;
    for (double& v : d_shifted.data()) v = -v;
    net.backward(base_cache, roll_latent(d_rolled, -delta), r.grad);
    net.backward(shifted_cache, d_shifted, r.grad);
  }
  return r;
}

inline LossResult shift_loss(const ToyBatch& batch, const ToyDenoiser& net, const DiffusionSchedule& sched,
                             int delta, Rng& rng) {
  return shift_loss_with(batch, net, sched, draw_noise(batch, sched, rng), delta);
}

struct TrainConfig {
  double lambda_shift = 0.5;
  double lambda_flow = 0.1;
  double learning_rate = 1e-3;
  int steps = 500;
  int batch_size = 2;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lambda_shift >= 0.0) || !(lambda_flow >= 0.0)) throw ConfigError("loss weights must be >= 0");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
    if (steps < 0 || batch_size < 1) throw ConfigError("steps must be >= 0 and batch size >= 1");
  }
};

struct TotalLoss {
  double total = 0;
  double ldm = 0;
  double shift = 0;
  double flow = 0;
  int delta = 0;
  DenoiserGrad grad;
};

/// Draws the shift offset uniformly from [1, w - 1].
inline int draw_shift(int width, Rng& rng) {
  if (width < 2) throw ConfigError("shift objective needs latent width >= 2");
  return std::uniform_int_distribution<int>(1, width - 1)(rng);
}

/// L_total = L_ldm + lambda_shift * L_shift + lambda_flow * L_flow. Noise
/// draws come first from `rng`, then the shift offset, so a copy of the same
/// generator reproduces the individual terms. `flow_loss` is the auxiliary
/// flow term when a trainable flow source participates, otherwise 0.
inline TotalLoss total_loss(const ToyBatch& batch, const ToyDenoiser& net, const DiffusionSchedule& sched,
                            const TrainConfig& cfg, Rng& rng, double flow_loss = 0.0) {
  detail::require_batch(batch);
  const std::vector<NoiseDraw> draws = draw_noise(batch, sched, rng);
  TotalLoss r;
  r.delta = draw_shift(batch.front().z0.width(), rng);
  r.grad = net.zero_grad();
  r.flow = flow_loss;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const bool shift_grads = cfg.lambda_shift > 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const LatentTensor x = network_input(batch[i], draws[i], sched);
    ToyDenoiser::Cache base_cache, shifted_cache;
    const LatentTensor base = net.forward(x, draws[i].t, &base_cache);
    LatentTensor d_base(base.channels(), base.height(), base.width());
    r.ldm += inv_b * detail::mean_sq_diff(base, draws[i].eps, &d_base, inv_b);

    const LatentTensor shifted = net.forward(roll_latent(x, r.delta), draws[i].t, shift_grads ? &shifted_cache : nullptr);
    LatentTensor d_rolled(base.channels(), base.height(), base.width());
    r.shift += inv_b * detail::mean_sq_diff(roll_latent(base, r.delta), shifted, &d_rolled, inv_b * cfg.lambda_shift);
    if (shift_grads) {
      const LatentTensor back = roll_latent(d_rolled, -r.delta);
      auto db = d_base.data();
      auto bb = back.data();
      for (std::size_t k = 0; k < db.size(); ++k) db[k] += bb[k];
      for (double& v : d_rolled.data()) v = -v;
      net.backward(shifted_cache, d_rolled, r.grad);
    }
    net.backward(base_cache, d_base, r.grad);
  }
  r.total = r.ldm + cfg.lambda_shift * r.shift + cfg.lambda_flow * r.flow;
  return r;
}

struct StepLog {
  int step = 0;
  double ldm = 0, shift = 0, flow = 0, total = 0;
};

struct TrainResult {
  ToyDenoiser net;
  std::vector<StepLog> log;
};

/// Loss log line: step<TAB>l_ldm<TAB>l_shift<TAB>l_flow<TAB>total
inline void write_log_line(std::ostream& os, const StepLog& s) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d\t%.9g\t%.9g\t%.9g\t%.9g\n", s.step, s.ldm, s.shift, s.flow, s.total);
  os << buf;
}

/// Plain SGD with a fixed learning rate. Single-threaded and fully
/// determined by cfg.seed.
inline TrainResult train_toy(const std::vector<ToySample>& data, const TrainConfig& cfg, ToyDenoiser net,
                             const DiffusionSchedule& sched, std::ostream* log = nullptr) {
  cfg.validate();
  if (data.empty()) throw ConfigError("training needs a non-empty corpus");
  Rng rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  TrainResult result;
  result.log.reserve(cfg.steps);
  for (int step = 0; step < cfg.steps; ++step) {
    ToyBatch batch;
    for (int b = 0; b < cfg.batch_size; ++b) batch.push_back(data[pick(rng)]);
    TotalLoss loss = total_loss(batch, net, sched, cfg, rng);
    if (!std::isfinite(loss.total)) {
      throw NumericError("training diverged at step " + std::to_string(step) + " (l_ldm=" +
                         std::to_string(loss.ldm) + ", l_shift=" + std::to_string(loss.shift) +
                         ", lr=" + std::to_string(cfg.learning_rate) + ")");
    }
    const StepLog entry{step, loss.ldm, loss.shift, loss.flow, loss.total};
    result.log.push_back(entry);
    if (log) write_log_line(*log, entry);
    auto params = net.parameter_blocks();
    auto grads = parameter_blocks(loss.grad);
    for (std::size_t k = 0; k < params.size(); ++k)
      for (std::size_t i = 0; i < params[k].size(); ++i) params[k][i] -= cfg.learning_rate * grads[k][i];
  }
  result.net = std::move(net);
  return result;
}

// ---------------------------------------------------------------------------
// Sampling

enum class RollMode { none, random, forced };

struct RollingOptions {
  RollMode mode = RollMode::random;
  std::vector<int> forced;  // per-step offsets for RollMode::forced, in sampling order (t = T first)
};

/// Ancestral DDPM sampling. With rolling, each step circularly shifts the
/// running latent (and the conditioning) by a fresh offset and lets the
/// frame drift; one inverse shift by the accumulated offset realigns the
/// result at the end. Injected noise is drawn in the conditioning frame and
/// rolled into the current one, and offsets come from a separate stream, so
/// the noise sequence is the same in every mode.
inline LatentTensor sample_with_rolling(const ToyDenoiser& net, const DiffusionSchedule& sched,
                                        const LatentTensor& mask, const LatentTensor& cond, Rng& rng,
                                        const RollingOptions& opts = {}) {
  const int c = net.output_channels(), h = mask.height(), w = mask.width();
  if (opts.mode == RollMode::forced && opts.forced.size() != std::size_t(sched.steps())) {
    throw ConfigError("forced rolling needs one offset per sampling step");
  }
  Rng shift_rng(rng());
  std::uniform_int_distribution<int> shift_dist(0, w - 1);
  LatentTensor x = gaussian_latent(c, h, w, rng);
  long long total_shift = 0;
  LatentTensor m_cur = mask, c_cur = cond;
  for (int t = sched.steps(), i = 0; t >= 1; --t, ++i) {
    int delta = 0;
    if (opts.mode == RollMode::random) delta = shift_dist(shift_rng);
    if (opts.mode == RollMode::forced) delta = opts.forced[i];
    if (opts.mode != RollMode::none) {
      x = roll_latent(x, delta);
      total_shift += delta;
      m_cur = roll_latent(mask, total_shift);
      c_cur = roll_latent(cond, total_shift);
    }
    const LatentTensor eps_hat = denoiser_forward(x, m_cur, c_cur, t, net);
    const double coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
    const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(t));
    auto xd = x.data();
    auto ed = eps_hat.data();
    for (std::size_t k = 0; k < xd.size(); ++k) xd[k] = (xd[k] - coef * ed[k]) * inv_sqrt_alpha;
    if (t > 1) {
      LatentTensor z = gaussian_latent(c, h, w, rng);
      if (opts.mode != RollMode::none) z = roll_latent(z, total_shift);
      const double sigma = std::sqrt(sched.beta(t));
      auto zd = z.data();
      for (std::size_t k = 0; k < xd.size(); ++k) xd[k] += sigma * zd[k];
    }
  }
  if (opts.mode != RollMode::none) x = roll_latent(x, -total_shift);
  return x;
}

}  // namespace gimbal::topo
