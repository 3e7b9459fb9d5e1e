// SPDX-License-Identifier: Apache-2.0
#include "discover/codec.hpp"

#include <bit>
#include <cmath>

#include "discover/errors.hpp"
#include "discover/rans.hpp"

namespace discover {
namespace {

int log2i(int v) { return std::countr_zero(static_cast<unsigned>(v)); }

ag::Var as_batch(const Tensor& chw) {
  Shape s = chw.shape();
  s.insert(s.begin(), 1);
  return ag::Var(chw.reshaped(s));
}

Tensor unbatch(const ag::Var& v) {
  Shape s = v.shape();
  if (s.empty() || s[0] != 1) throw ContractError("expected batch of one, got " + shape_string(s));
  s.erase(s.begin());
  return v.value().reshaped(s);
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  return i < n ? i : period - i;
}

}  // namespace

void ImageTensor::validate() const {
  if (data.ndim() != 3 || data.dim(0) != 3) {
    throw ValidationError("image tensor must be [3,H,W], got " + shape_string(data.shape()));
  }
  if (data.dim(1) <= 0 || data.dim(2) <= 0) throw ValidationError("image must be non-empty");
  if (!data.all_finite()) throw ValidationError("image contains non-finite values");
}

Codec::Codec(nn::ParameterStore& store, const ModelConfig& config, std::mt19937_64& rng) : config_(config) {
  config.validate();
  const int n = config.codec_width, cy = config.latent_channels, cz = config.hyper_channels;
  const int nh = config.hyper_width, ng = config.global_width;

  const int down = log2i(config.latent_stride);
  for (int i = 0; i < down; ++i) {
    const int in = i == 0 ? 3 : n;
    const int out = i + 1 == down ? cy : n;
    g_a_.emplace_back(store, "codec.g_a." + std::to_string(i), in, out, i == 0 ? 5 : 3, 2, rng);
  }

  const int hyper_down = log2i(config.hyper_factor);
  h_a_.emplace_back(store, "codec.h_a.0", cy, nh, 3, 1, rng);
  for (int i = 0; i < hyper_down; ++i) {
    const int out = i + 1 == hyper_down ? cz : nh;
    h_a_.emplace_back(store, "codec.h_a." + std::to_string(i + 1), nh, out, 3, 2, rng);
  }
  for (int i = 0; i < hyper_down; ++i) {
    h_s_up_.emplace_back(store, "codec.h_s." + std::to_string(i), i == 0 ? cz : nh, nh, rng);
  }
  h_s_out_ = nn::Conv2d(store, "codec.h_s.out", nh, 2 * cy, 3, 1, rng);

  for (int i = 0; i < hyper_down; ++i) {
    m_up_.emplace_back(store, "codec.global." + std::to_string(i), i == 0 ? cz : ng, ng, rng);
  }
  m_out_ = nn::Conv2d(store, "codec.global.out", ng, ng, 3, 1, rng);

  g_s_in_ = nn::Conv2d(store, "codec.g_s.in", cy + ng, n, 3, 1, rng);
  const int up = log2i(config.latent_stride / config.vae_factor);
  for (int i = 0; i < up; ++i) g_s_up_.emplace_back(store, "codec.g_s.up" + std::to_string(i), n, n, rng);
  g_s_mid_ = nn::Conv2d(store, "codec.g_s.mid", n, n, 3, 1, rng);
  g_s_out_ = nn::Conv2d(store, "codec.g_s.out", n, config.diffusion_channels, 3, 1, rng);

  prior_ = entropy::FactorizedPrior(store, "codec.prior", cz, rng);
}

ag::Var Codec::analysis(const ag::Var& x) const {
  ag::Var h = x;
  for (std::size_t i = 0; i < g_a_.size(); ++i) {
    h = g_a_[i](h);
    if (i + 1 < g_a_.size()) h = ag::silu(h);
  }
  return h;
}

ag::Var Codec::hyper_analysis(const ag::Var& y) const {
  ag::Var h = y;
  for (std::size_t i = 0; i < h_a_.size(); ++i) {
    h = h_a_[i](h);
    if (i + 1 < h_a_.size()) h = ag::silu(h);
  }
  return h;
}

Codec::Params Codec::hyper_synthesis(const ag::Var& z_hat) const {
  ag::Var h = z_hat;
  for (const auto& up : h_s_up_) h = ag::silu(up(h));
  h = h_s_out_(h);
  const int cy = config_.latent_channels;
  return {ag::slice_channels(h, 0, cy),
          ag::lower_bound(ag::softplus(ag::slice_channels(h, cy, 2 * cy)), entropy::kSigmaMin)};
}

ag::Var Codec::global_context(const ag::Var& z_hat) const {
  ag::Var h = z_hat;
  for (const auto& up : m_up_) h = ag::silu(up(h));
  return m_out_(h);
}

ag::Var Codec::synthesis(const ag::Var& y_tilde, const ag::Var& global) const {
  if (y_tilde.value().ndim() != 4 || global.value().ndim() != 4 || y_tilde.dim(2) != global.dim(2) ||
      y_tilde.dim(3) != global.dim(3)) {
    throw ContractError("g_s: latent " + shape_string(y_tilde.shape()) + " and global context " +
                        shape_string(global.shape()) + " are not aligned");
  }
  ag::Var h = ag::silu(g_s_in_(ag::concat_channels(y_tilde, global)));
  for (const auto& up : g_s_up_) h = ag::silu(up(h));
  h = ag::silu(g_s_mid_(h));
  return g_s_out_(h);
}

Tensor reflect_pad(const Tensor& chw, int multiple, int& pad_right, int& pad_bottom) {
  const int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  const int ph = (h + multiple - 1) / multiple * multiple;
  const int pw = (w + multiple - 1) / multiple * multiple;
  pad_bottom = ph - h;
  pad_right = pw - w;
  if (pad_bottom == 0 && pad_right == 0) return chw;
  Tensor out({c, ph, pw});
  for (int ch = 0; ch < c; ++ch)
    for (int r = 0; r < ph; ++r)
      for (int q = 0; q < pw; ++q) {
        out[(static_cast<std::size_t>(ch) * ph + r) * pw + q] =
            chw[(static_cast<std::size_t>(ch) * h + reflect_index(r, h)) * w + reflect_index(q, w)];
      }
  return out;
}

Tensor crop(const Tensor& chw, int height, int width) {
  const int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  if (height > h || width > w) throw ContractError("crop larger than source");
  Tensor out({c, height, width});
  for (int ch = 0; ch < c; ++ch)
    for (int r = 0; r < height; ++r)
      for (int q = 0; q < width; ++q) {
        out[(static_cast<std::size_t>(ch) * height + r) * width + q] = chw[(static_cast<std::size_t>(ch) * h + r) * w + q];
      }
  return out;
}

double round_half_even(double v) { return std::nearbyint(v); }

LatentGrid encode_analysis(const Codec& codec, const ImageTensor& x) {
  x.validate();
  ag::NoGradGuard no_grad;
  LatentGrid out;
  const Tensor padded = reflect_pad(x.data, codec.config().pad_multiple(), out.pad_right, out.pad_bottom);
  out.data = unbatch(codec.analysis(as_batch(padded)));
  out.latent_stride = codec.config().latent_stride;
  return out;
}

HyperLatent hyper_encode(const Codec& codec, const LatentGrid& y) {
  const int k = codec.config().hyper_factor;
  if (y.channels() != codec.config().latent_channels || y.rows() % k != 0 || y.cols() % k != 0) {
    throw ContractError("hyper_encode: latent " + shape_string(y.data.shape()) + " incompatible with hyper factor " +
                        std::to_string(k));
  }
  ag::NoGradGuard no_grad;
  HyperLatent z;
  z.data = unbatch(codec.hyper_analysis(as_batch(y.data)));
  for (auto& v : z.data.values()) v = round_half_even(v);
  z.hyper_factor = k;
  return z;
}

EntropyParams hyper_decode(const Codec& codec, const HyperLatent& z_hat) {
  if (z_hat.data.ndim() != 3 || z_hat.data.dim(0) != codec.config().hyper_channels) {
    throw ContractError("hyper_decode: hyper latent shape " + shape_string(z_hat.data.shape()));
  }
  ag::NoGradGuard no_grad;
  auto p = codec.hyper_synthesis(as_batch(z_hat.data));
  return {unbatch(p.mu), unbatch(p.sigma)};
}

LatentGrid quantize(const LatentGrid& y, QuantMode mode, std::mt19937_64* rng) {
  LatentGrid out = y;
  if (mode == QuantMode::kRound) {
    for (auto& v : out.data.values()) v = round_half_even(v);
    out.quantized = true;
  } else {
    if (!rng) throw ContractError("noise quantization needs an rng");
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (auto& v : out.data.values()) v += u(*rng);
    out.quantized = false;
  }
  return out;
}

double rate_bits(const LatentGrid& y_hat, const EntropyParams& params) {
  if (params.mu.shape() != y_hat.data.shape() || params.sigma.shape() != y_hat.data.shape()) {
    throw ContractError("rate_bits: params " + shape_string(params.mu.shape()) + " vs latent " +
                        shape_string(y_hat.data.shape()));
  }
  double bits = 0.0;
  for (std::size_t i = 0; i < y_hat.data.size(); ++i) {
    bits += coding::gaussian_symbol_bits(y_hat.data[i], params.mu[i], params.sigma[i]);
  }
  return bits;
}

double rate_bits_hyper(const Codec& codec, const HyperLatent& z_hat) {
  ag::NoGradGuard no_grad;
  const auto bits = codec.prior().bits(as_batch(z_hat.data));
  double total = 0.0;
  for (double b : bits.value().values()) total += b;
  return total;
}

DiffLatent decode_synthesis(const Codec& codec, const LatentGrid& y_tilde, const std::optional<HyperLatent>& z_hat) {
  if (!z_hat) throw ContractError("decode_synthesis: hyper latent is required (z_hat is always transmitted)");
  ag::NoGradGuard no_grad;
  const auto global = codec.global_context(as_batch(z_hat->data));
  DiffLatent out;
  out.data = unbatch(codec.synthesis(as_batch(y_tilde.data), global));
  out.vae_factor = codec.config().vae_factor;
  return out;
}

}  // namespace discover
