// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

namespace discover {

/// Network geometry shared by the codec, the VAE-lite and the denoiser.
/// Stored as JSON inside every model file.
struct ModelConfig {
  int latent_stride = 16;  // s: image -> y
  int hyper_factor = 4;    // k: y -> z
  int vae_factor = 8;      // f: image -> z_c
  int latent_channels = 128;
  int hyper_channels = 64;
  int codec_width = 128;
  int hyper_width = 128;
  int global_width = 64;
  int diffusion_channels = 4;
  int vae_width = 64;
  int unet_width = 64;
  int timesteps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::uint64_t init_seed = 0;

  /// Small widths for CPU-scale experiments (crop 64).
  static ModelConfig desk();
  /// Few channels; used for gradient checks.
  static ModelConfig tiny();

  /// Padding multiple so that y, z and z_c all have integral sizes.
  int pad_multiple() const;
  void validate() const;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace discover
