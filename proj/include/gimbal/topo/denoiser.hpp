#pragma once

// Desk-scale noise predictor: a stack of same-size 3x3 convolutions with SiLU
// between layers and a per-channel timestep bias. With circular horizontal
// padding everywhere and the absolute-position term off, every layer
// commutes with roll_latent, so the whole network is shift-equivariant.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gimbal/error.hpp"
#include "gimbal/flow.hpp"
#include "gimbal/raster.hpp"
#include "gimbal/topo/latent_ops.hpp"

namespace gimbal::topo {

struct DenoiserSpec {
  int latent_channels = 3;
  int cond_channels = 4;  // mask + conditioning latent
  int hidden = 32;
  int depth = 4;
  int kernel = 3;
  int emb_dim = 16;
  Padding padding = Padding::circular;
  bool position_channel = false;  // adds a learned absolute-position term to the output layer
  std::uint64_t seed = 0;
};

struct ConvLayer {
  ConvKernel kernel;
  Padding padding = Padding::circular;
  std::vector<double> bias;  // [out]
  std::vector<double> temb;  // [out * emb_dim], projects the timestep embedding
  bool activation = true;    // SiLU after the layer
  bool position_input = false;  // adds pos[o] * position_ramp(x) to the pre-activation
  std::vector<double> pos;      // [out] when position_input, else empty
};

/// Gradient storage laid out like the network parameters.
struct LayerGrad {
  std::vector<double> weight, bias, temb, pos;
};
using DenoiserGrad = std::vector<LayerGrad>;

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }
inline double silu_grad(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

/// Sinusoidal embedding of an integer timestep.
inline std::vector<double> timestep_embedding(int t, int dim) {
  std::vector<double> e(dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(1000.0) * i / half);
    e[2 * i] = std::sin(t * freq);
    e[2 * i + 1] = std::cos(t * freq);
  }
  return e;
}

/// Amplitude of the absolute-position ramp. Large enough that the shift loss
/// can pull the ramp weights down within a few hundred SGD steps at lr 1e-3.
inline constexpr double kPositionGain = 4.0;
/// Initial spread of the per-channel ramp amplitudes.
inline constexpr double kPositionInitStd = 0.1;

/// Value of the absolute-position ramp at column x: a ramp over
/// (-kPositionGain, kPositionGain) that jumps at the wrap boundary.
inline double position_ramp(int x, int width) { return kPositionGain * (2.0 * (x + 0.5) / width - 1.0); }

class ToyDenoiser {
 public:
  struct Cache {
    std::vector<LatentTensor> inputs;  // per-layer input
    std::vector<LatentTensor> pre;     // per-layer pre-activation
    std::vector<double> emb;
  };

  ToyDenoiser() = default;
  ToyDenoiser(std::vector<ConvLayer> layers, int emb_dim) : layers_(std::move(layers)), emb_dim_(emb_dim) {
    validate();
  }

  const std::vector<ConvLayer>& layers() const { return layers_; }
  std::vector<ConvLayer>& layers() { return layers_; }
  int emb_dim() const { return emb_dim_; }
  bool position_channel() const {
    for (const ConvLayer& L : layers_)
      if (L.position_input) return true;
    return false;
  }
  int input_channels() const { return layers_.front().kernel.in_ch; }
  int output_channels() const { return layers_.back().kernel.out_ch; }

  void validate() const {
    if (layers_.empty()) throw ConfigError("denoiser needs at least one layer");
    if (emb_dim_ < 2 || emb_dim_ % 2) throw ConfigError("timestep embedding dim must be even and >= 2");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const ConvLayer& L = layers_[l];
      L.kernel.validate();
      if (L.bias.size() != std::size_t(L.kernel.out_ch) ||
          L.temb.size() != std::size_t(L.kernel.out_ch) * emb_dim_) {
        throw ConfigError("denoiser layer bias/embedding size mismatch");
      }
      if (l > 0 && L.kernel.in_ch != layers_[l - 1].kernel.out_ch) {
        throw ConfigError("denoiser layer channel chain is inconsistent");
      }
      if (L.pos.size() != (L.position_input ? std::size_t(L.kernel.out_ch) : 0)) {
        throw ConfigError("denoiser position weights do not match the layer");
      }
    }
  }

  LatentTensor forward(const LatentTensor& x, int t, Cache* cache = nullptr) const {
    if (x.channels() != input_channels()) {
      throw ConfigError("denoiser expects " + std::to_string(input_channels()) + " input channels, got " +
                        std::to_string(x.channels()));
    }
    const std::vector<double> emb = timestep_embedding(t, emb_dim_);
    LatentTensor h = x;
    if (cache) {
      cache->inputs.clear();
      cache->pre.clear();
      cache->emb = emb;
    }
    for (const ConvLayer& L : layers_) {
      LatentTensor pre = circular_conv2d(h, L.kernel, L.padding);
      for (int o = 0; o < L.kernel.out_ch; ++o) {
        double b = L.bias[o];
        for (int e = 0; e < emb_dim_; ++e) b += L.temb[std::size_t(o) * emb_dim_ + e] * emb[e];
        for (double& v : pre.plane(o)) v += b;
        if (L.position_input) {
          for (int y = 0; y < pre.height(); ++y) {
            auto row = pre.row(o, y);
            for (int x = 0; x < pre.width(); ++x) row[x] += L.pos[o] * position_ramp(x, pre.width());
          }
        }
      }
      LatentTensor out = pre;
      if (L.activation)
        for (double& v : out.data()) v = silu(v);
      if (cache) {
        cache->inputs.push_back(std::move(h));
        cache->pre.push_back(std::move(pre));
      }
      h = std::move(out);
    }
    return h;
  }

  /// Accumulates parameter gradients of a scalar loss given d(loss)/d(output).
  void backward(const Cache& cache, const LatentTensor& d_out, DenoiserGrad& grad) const {
    LatentTensor g = d_out;
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const ConvLayer& L = layers_[li];
      const LatentTensor& pre = cache.pre[li];
      if (L.activation) {
        auto gd = g.data();
        auto pd = pre.data();
        for (std::size_t i = 0; i < gd.size(); ++i) gd[i] *= silu_grad(pd[i]);
      }
      LayerGrad& G = grad[li];
      for (int o = 0; o < L.kernel.out_ch; ++o) {
        double s = 0.0;
        for (double v : g.plane(o)) s += v;
        G.bias[o] += s;
        for (int e = 0; e < emb_dim_; ++e) G.temb[std::size_t(o) * emb_dim_ + e] += s * cache.emb[e];
        if (L.position_input) {
          double sp = 0.0;
          for (int y = 0; y < g.height(); ++y) {
            const auto row = g.row(o, y);
            for (int x = 0; x < g.width(); ++x) sp += row[x] * position_ramp(x, g.width());
          }
          G.pos[o] += sp;
        }
      }
      const LatentTensor& in = cache.inputs[li];
      if (li > 0) {
        LatentTensor d_in(in.channels(), in.height(), in.width());
        circular_conv2d_backward(in, L.kernel, L.padding, g, &d_in, &G.weight);
        g = std::move(d_in);
      } else {
        circular_conv2d_backward(in, L.kernel, L.padding, g, nullptr, &G.weight);
      }
    }
  }

  DenoiserGrad zero_grad() const {
    DenoiserGrad g(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      g[l].weight.assign(layers_[l].kernel.weight.size(), 0.0);
      g[l].bias.assign(layers_[l].bias.size(), 0.0);
      g[l].temb.assign(layers_[l].temb.size(), 0.0);
      g[l].pos.assign(layers_[l].pos.size(), 0.0);
    }
    return g;
  }

  /// Parameter blocks in a fixed order: per layer weight, bias, temb, pos.
  std::vector<std::span<double>> parameter_blocks() {
    std::vector<std::span<double>> out;
    for (ConvLayer& L : layers_) {
      out.emplace_back(L.kernel.weight);
      out.emplace_back(L.bias);
      out.emplace_back(L.temb);
      out.emplace_back(L.pos);
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const ConvLayer& L : layers_) n += L.kernel.weight.size() + L.bias.size() + L.temb.size() + L.pos.size();
    return n;
  }

  friend bool operator==(const ToyDenoiser& a, const ToyDenoiser& b) {
    if (a.emb_dim_ != b.emb_dim_ || a.layers_.size() != b.layers_.size()) return false;
    for (std::size_t l = 0; l < a.layers_.size(); ++l) {
      const ConvLayer &x = a.layers_[l], &y = b.layers_[l];
      if (x.kernel.out_ch != y.kernel.out_ch || x.kernel.in_ch != y.kernel.in_ch || x.kernel.kh != y.kernel.kh ||
          x.kernel.kw != y.kernel.kw || x.kernel.weight != y.kernel.weight || x.padding != y.padding ||
          x.bias != y.bias || x.temb != y.temb || x.activation != y.activation ||
          x.position_input != y.position_input || x.pos != y.pos)
        return false;
    }
    return true;
  }

 private:
  std::vector<ConvLayer> layers_;
  int emb_dim_ = 16;
};

inline std::vector<std::span<double>> parameter_blocks(DenoiserGrad& g) {
  std::vector<std::span<double>> out;
  for (LayerGrad& L : g) {
    out.emplace_back(L.weight);
    out.emplace_back(L.bias);
    out.emplace_back(L.temb);
    out.emplace_back(L.pos);
  }
  return out;
}

/// Randomly initialized network: depth conv layers, hidden width `hidden`,
/// input = latent + conditioning channels. With spec.position_channel the
/// output layer adds a learned multiple of the absolute-position ramp per
/// channel, the way an absolute positional embedding is added to tokens; the
/// equivariance violation is then exactly linear in those amplitudes.
inline ToyDenoiser make_toy_denoiser(const DenoiserSpec& spec) {
  if (spec.depth < 1 || spec.hidden < 1 || spec.latent_channels < 1 || spec.cond_channels < 0) {
    throw ConfigError("invalid denoiser spec");
  }
  std::mt19937_64 rng(spec.seed);
  std::vector<ConvLayer> layers;
  int in_ch = spec.latent_channels + spec.cond_channels;
  for (int l = 0; l < spec.depth; ++l) {
    const bool last = l + 1 == spec.depth;
    ConvLayer L;
    L.kernel.out_ch = last ? spec.latent_channels : spec.hidden;
    L.kernel.in_ch = in_ch;
    L.kernel.kh = L.kernel.kw = spec.kernel;
    L.padding = spec.padding;
    L.activation = !last;
    L.position_input = last && spec.position_channel;
    const double fan_in = double(in_ch) * spec.kernel * spec.kernel;
    std::normal_distribution<double> wdist(0.0, std::sqrt(1.0 / fan_in));
    L.kernel.weight.resize(std::size_t(L.kernel.out_ch) * in_ch * spec.kernel * spec.kernel);
    for (double& w : L.kernel.weight) w = wdist(rng);
    L.bias.assign(L.kernel.out_ch, 0.0);
    std::normal_distribution<double> edist(0.0, 0.1);
    L.temb.resize(std::size_t(L.kernel.out_ch) * spec.emb_dim);
    for (double& w : L.temb) w = edist(rng);
    if (L.position_input) {
      std::normal_distribution<double> pdist(0.0, kPositionInitStd);
      L.pos.resize(L.kernel.out_ch);
      for (double& w : L.pos) w = pdist(rng);
    }
    layers.push_back(std::move(L));
    in_ch = layers.back().kernel.out_ch;
  }
  return ToyDenoiser(std::move(layers), spec.emb_dim);
}

/// eps_hat = net(z_t (+) mask (+) cond, t)
inline LatentTensor denoiser_forward(const LatentTensor& z_t, const LatentTensor& mask, const LatentTensor& cond,
                                     int t, const ToyDenoiser& net) {
  return net.forward(concat_channels({&z_t, &mask, &cond}), t);
}

// ---------------------------------------------------------------------------
// GTOY checkpoint:
//   "GTOY" | u32 layer_count | per layer:
//     u32 dim_count (=8) | u32 out_ch, in_ch, kh, kw, emb_dim, padding (0 zero, 1 circular),
//     activation (0/1), position_input (0/1) |
//     f32 weight[out*in*kh*kw] | f32 bias[out] | f32 temb[out*emb_dim] |
//     f32 pos[out] (only when position_input is 1)
// Little-endian throughout. Parameters are quantized to f32 on save.

inline std::string encode_gtoy(const ToyDenoiser& net) {
  using gimbal::detail::put_f32;
  using gimbal::detail::put_u32;
  std::string out = "GTOY";
  put_u32(out, static_cast<std::uint32_t>(net.layers().size()));
  for (const ConvLayer& L : net.layers()) {
    put_u32(out, 8);
    for (int v : {L.kernel.out_ch, L.kernel.in_ch, L.kernel.kh, L.kernel.kw, net.emb_dim(), static_cast<int>(L.padding),
                  L.activation ? 1 : 0, L.position_input ? 1 : 0})
      put_u32(out, static_cast<std::uint32_t>(v));
    for (const auto* block : {&L.kernel.weight, &L.bias, &L.temb, &L.pos})
      for (double v : *block) put_f32(out, static_cast<float>(v));
  }
  return out;
}

inline ToyDenoiser decode_gtoy(const std::string& bytes) {
  using gimbal::detail::get_f32;
  using gimbal::detail::get_u32;
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (pos + n > bytes.size()) throw IoError("GTOY: truncated checkpoint");
  };
  auto u32 = [&] {
    need(4);
    const std::uint32_t v = get_u32(p + pos);
    pos += 4;
    return v;
  };
  need(4);
  if (bytes.compare(0, 4, "GTOY") != 0) throw IoError("not a GTOY checkpoint");
  pos = 4;
  const std::uint32_t count = u32();
  if (count == 0 || count > 1024) throw IoError("GTOY: bad layer count");
  std::uint32_t emb_dim = 0;
  std::vector<ConvLayer> layers;
  for (std::uint32_t l = 0; l < count; ++l) {
    if (u32() != 8) throw IoError("GTOY: unexpected layer descriptor");
    ConvLayer L;
    L.kernel.out_ch = static_cast<int>(u32());
    L.kernel.in_ch = static_cast<int>(u32());
    L.kernel.kh = static_cast<int>(u32());
    L.kernel.kw = static_cast<int>(u32());
    const std::uint32_t layer_emb = u32();
    if (layer_emb == 0 || layer_emb > 4096 || (l > 0 && layer_emb != emb_dim)) throw IoError("GTOY: bad embedding dim");
    emb_dim = layer_emb;
    const std::uint32_t pad = u32();
    if (pad > 1) throw IoError("GTOY: bad padding mode");
    L.padding = static_cast<Padding>(pad);
    L.activation = u32() != 0;
    L.position_input = u32() != 0;
    if (L.kernel.out_ch <= 0 || L.kernel.in_ch <= 0 || L.kernel.kh <= 0 || L.kernel.kw <= 0 ||
        L.kernel.out_ch > 65536 || L.kernel.in_ch > 65536 || L.kernel.kh > 64 || L.kernel.kw > 64)
      throw IoError("GTOY: bad layer dims");
    L.kernel.weight.resize(std::size_t(L.kernel.out_ch) * L.kernel.in_ch * L.kernel.kh * L.kernel.kw);
    L.bias.resize(L.kernel.out_ch);
    L.temb.resize(std::size_t(L.kernel.out_ch) * emb_dim);
    if (L.position_input) L.pos.resize(L.kernel.out_ch);
    for (auto* block : {&L.kernel.weight, &L.bias, &L.temb, &L.pos}) {
      need(block->size() * 4);
      for (double& v : *block) {
        v = get_f32(p + pos);
        pos += 4;
      }
    }
    layers.push_back(std::move(L));
  }
  if (pos != bytes.size()) throw IoError("GTOY: trailing bytes");
  try {
    return ToyDenoiser(std::move(layers), static_cast<int>(emb_dim));
  } catch (const ConfigError& e) {
    throw IoError(std::string("GTOY: inconsistent network: ") + e.what());
  }
}

inline void save_checkpoint(const std::string& path, const ToyDenoiser& net) {
  gimbal::detail::write_file_bytes(path, encode_gtoy(net));
}

inline ToyDenoiser load_checkpoint(const std::string& path) {
  return decode_gtoy(gimbal::detail::read_file_bytes(path));
}

}  // namespace gimbal::topo
