// SPDX-License-Identifier: Apache-2.0
#pragma once

// Learned transforms of the codec:
//   g_a  image -> y                       (stride s)
//   h_a  y -> z                           (stride k)
//   h_s  z_hat -> (mu, sigma) for y_hat   (entropy parameters)
//   M    z_hat -> global context at y resolution
//   g_s  (y_tilde, M(z_hat)) -> z_c_hat   (diffusion latent, stride f)

#include <optional>
#include <random>
#include <vector>

#include "discover/autograd.hpp"
#include "discover/config.hpp"
#include "discover/entropy.hpp"
#include "discover/nn.hpp"

namespace discover {

/// RGB image, values in [0, 1], shape [3, H, W].
struct ImageTensor {
  Tensor data;

  int height() const { return data.dim(1); }
  int width() const { return data.dim(2); }
  void validate() const;
};

/// Spatial latent y or y_hat, shape [C_y, H/s, W/s] of the padded image.
struct LatentGrid {
  Tensor data;
  int latent_stride = 16;
  bool quantized = false;
  int pad_right = 0;
  int pad_bottom = 0;

  int channels() const { return data.dim(0); }
  int rows() const { return data.dim(1); }
  int cols() const { return data.dim(2); }
};

/// Quantized hyper latent z_hat, shape [C_z, H/(s k), W/(s k)].
struct HyperLatent {
  Tensor data;
  int hyper_factor = 4;
};

/// Gaussian parameters for every element of y_hat.
struct EntropyParams {
  Tensor mu;
  Tensor sigma;
};

/// Diffusion latent z_c / z_c_hat, shape [C_c, H/f, W/f].
struct DiffLatent {
  Tensor data;
  int vae_factor = 8;
};

enum class QuantMode { kRound, kNoise };

class Codec {
 public:
  Codec() = default;
  Codec(nn::ParameterStore& store, const ModelConfig& config, std::mt19937_64& rng);

  ag::Var analysis(const ag::Var& x) const;
  ag::Var hyper_analysis(const ag::Var& y) const;
  struct Params {
    ag::Var mu;
    ag::Var sigma;
  };
  Params hyper_synthesis(const ag::Var& z_hat) const;
  ag::Var global_context(const ag::Var& z_hat) const;
  ag::Var synthesis(const ag::Var& y_tilde, const ag::Var& global) const;

  const entropy::FactorizedPrior& prior() const { return prior_; }
  const ModelConfig& config() const { return config_; }

 private:
  ModelConfig config_;
  std::vector<nn::Conv2d> g_a_;
  std::vector<nn::Conv2d> h_a_;
  std::vector<nn::ConvTranspose2d> h_s_up_;
  nn::Conv2d h_s_out_;
  std::vector<nn::ConvTranspose2d> m_up_;
  nn::Conv2d m_out_;
  nn::Conv2d g_s_in_;
  std::vector<nn::ConvTranspose2d> g_s_up_;
  nn::Conv2d g_s_mid_;
  nn::Conv2d g_s_out_;
  entropy::FactorizedPrior prior_;
};

/// Reflect-pads [C, H, W] on the right/bottom up to a multiple of `multiple`.
Tensor reflect_pad(const Tensor& chw, int multiple, int& pad_right, int& pad_bottom);
Tensor crop(const Tensor& chw, int height, int width);

/// Round half to even.
double round_half_even(double v);

LatentGrid encode_analysis(const Codec& codec, const ImageTensor& x);
HyperLatent hyper_encode(const Codec& codec, const LatentGrid& y);
EntropyParams hyper_decode(const Codec& codec, const HyperLatent& z_hat);
LatentGrid quantize(const LatentGrid& y, QuantMode mode, std::mt19937_64* rng = nullptr);
double rate_bits(const LatentGrid& y_hat, const EntropyParams& params);
double rate_bits_hyper(const Codec& codec, const HyperLatent& z_hat);
/// z_c_hat = g_s(y_tilde, M(z_hat)). Throws ContractError without a hyper latent.
DiffLatent decode_synthesis(const Codec& codec, const LatentGrid& y_tilde, const std::optional<HyperLatent>& z_hat);

}  // namespace discover
