// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <random>
#include <vector>

#include "discover/autograd.hpp"
#include "discover/codec.hpp"
#include "discover/config.hpp"
#include "discover/nn.hpp"

namespace discover {

/// Diffusion noise schedule indexed by step t = 1..T. alpha_bar(0) == 1.
///
/// A schedule may be a respaced view of a longer one: step i then carries
/// alpha_bar of original timestep model_timestep(i) and
/// alpha(i) = alpha_bar(i) / alpha_bar(i - 1), so one reverse step spans the
/// whole stride.
class NoiseSchedule {
 public:
  static NoiseSchedule linear(int steps, double beta_start, double beta_end);

  int steps() const { return static_cast<int>(alpha_.size()); }
  double alpha(int t) const;
  double alpha_bar(int t) const;
  double beta(int t) const { return 1.0 - alpha(t); }
  /// Timestep fed to the denoiser's embedding at step t.
  int model_timestep(int t) const;

  NoiseSchedule respaced(const std::vector<int>& descending_timesteps) const;

 private:
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
  std::vector<int> model_t_;
};

/// Uniformly strided descending subset of {T..1} with `count` elements; ends at 1
/// (a single step uses {T}). Throws ValidationError if count is outside [1, T].
std::vector<int> strided_timesteps(int total_steps, int count);

class VaeLite {
 public:
  VaeLite() = default;
  VaeLite(nn::ParameterStore& store, const ModelConfig& config, std::mt19937_64& rng);
  ag::Var encode(const ag::Var& x) const;
  ag::Var decode(const ag::Var& z) const;

 private:
  std::vector<nn::Conv2d> enc_;
  std::vector<nn::Conv2d> dec_pre_;
  std::vector<nn::ConvTranspose2d> dec_up_;
  nn::Conv2d dec_out_;
};

/// Residual block with a per-channel timestep shift.
struct ResBlock {
  ResBlock() = default;
  ResBlock(nn::ParameterStore& store, const std::string& name, int in, int out, int temb, std::mt19937_64& rng);
  ag::Var operator()(const ag::Var& x, const ag::Var& temb) const;

  nn::Conv2d conv1, conv2, skip;
  nn::Linear temb_proj;
  bool has_skip = false;
};

/// Sinusoidal features of timestep t for each batch element, [N, dim].
Tensor timestep_features(const std::vector<int>& t, int dim);

/// Residuals injected by the control module at the denoiser's skip sites
/// (full, half and quarter resolution).
using ControlResiduals = std::array<ag::Var, 3>;

/// Encoder half of the denoiser. The control module is a second instance of
/// the same architecture.
struct UNetEncoder {
  UNetEncoder() = default;
  UNetEncoder(nn::ParameterStore& store, const std::string& prefix, const ModelConfig& config, std::mt19937_64& rng);
  ag::Var embed(const std::vector<int>& t) const;
  /// Returns features at the three injection sites. `extra` is added after the input conv.
  std::array<ag::Var, 3> operator()(const ag::Var& z, const ag::Var& temb, const ag::Var* extra) const;

  int width = 0;
  nn::Linear temb1, temb2;
  nn::Conv2d in_conv, down0, down1;
  ResBlock enc0, enc1, mid;
};

/// Noise predictor eps_theta(z_t, t, residuals).
class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(nn::ParameterStore& store, const ModelConfig& config, std::mt19937_64& rng);
  ag::Var operator()(const ag::Var& z_t, const std::vector<int>& t, const ControlResiduals* control) const;
  const UNetEncoder& encoder() const { return encoder_; }

 private:
  UNetEncoder encoder_;
  ResBlock dec1_, dec0_;
  nn::Conv2d out_;
};

/// ControlNet-style module: a copy of the denoiser encoder that reads the
/// condition through a hint network, with zero-initialised 1x1 output convs.
class ControlModule {
 public:
  ControlModule() = default;
  ControlModule(nn::ParameterStore& store, const ModelConfig& config, std::mt19937_64& rng);
  ControlResiduals operator()(const ag::Var& z_t, const std::vector<int>& t, const ag::Var& condition) const;

  /// Copies the denoiser encoder weights into the control encoder.
  void copy_encoder_from(const nn::ParameterStore& store) const;

 private:
  UNetEncoder encoder_;
  nn::Conv2d hint0_, hint1_, hint_zero_;
  std::array<nn::Conv2d, 3> zero_out_;
};

struct DiffusionState {
  Tensor z;
  int t = 0;
};

/// z_{t-1} = (z_t - sqrt(1 - a_t) / sqrt(1 - abar_t) * eps) / sqrt(a_t).
Tensor reverse_update(const Tensor& z_t, const Tensor& eps, double alpha_t, double alpha_bar_t);

struct SampleOptions {
  int steps = 8;
  std::uint64_t seed = 0;
  /// Adds sqrt(beta_t) * N(0, I) after each update except the last.
  bool stochastic = false;
};

inline constexpr int kMachineSteps = 8;
inline constexpr int kHumanSteps = 50;

/// One update of the reverse process at step t of `schedule`, with the noise
/// prediction eps_theta(z_t, t, C(z_c_hat)). `control` may be null (unconditioned).
/// Throws ValidationError unless 1 <= t <= schedule.steps().
DiffusionState reverse_step(const Denoiser& denoiser, const ControlModule* control, const DiffusionState& state,
                            const DiffLatent& condition, const NoiseSchedule& schedule);

/// Runs the reverse process from seeded noise z_T over strided_timesteps(T, steps)
/// and returns z_0 with the condition's shape.
DiffLatent sample(const Denoiser& denoiser, const ControlModule* control, const DiffLatent& condition,
                  const NoiseSchedule& schedule, const SampleOptions& options);

/// z_c = E(x). The image is reflect-padded to a multiple of f first.
DiffLatent vae_encode(const VaeLite& vae, const ImageTensor& x, int vae_factor);
/// x_hat = D(z_0), clamped to [0, 1].
ImageTensor vae_decode(const VaeLite& vae, const DiffLatent& z);

}  // namespace discover
