// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <optional>

#include "discover/archive.hpp"
#include "discover/codec.hpp"
#include "discover/config.hpp"
#include "discover/generation.hpp"
#include "discover/nn.hpp"

namespace discover {

/// Every network of the system over one parameter store:
///   codec.*    g_a, h_a, h_s, prior, global (M), g_s
///   vae.*      VAE-lite encoder / decoder
///   unet.*     denoiser
///   control.*  control module
///
/// The model file is an archive with the config, every parameter and the
/// frozen hyper tables ("hyper_cdf"). Its 16-byte content id is the container
/// model_id.
class Model {
 public:
  explicit Model(const ModelConfig& config);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  static Model from_archive(const Archive& archive);
  static Model load(const std::filesystem::path& path);
  Archive to_archive() const;
  Bytes serialize() const;
  void save(const std::filesystem::path& path) const;
  /// Copies parameter values from an archive (names must match).
  void load_parameters(const Archive& archive);

  ContentId id() const;

  /// Frozen tables when loaded from a file, otherwise computed from the prior.
  U32Table hyper_cdf() const;
  /// Drops the frozen tables after the prior has been trained further.
  void thaw() { frozen_hyper_cdf_.reset(); }

  const ModelConfig& config() const { return config_; }
  nn::ParameterStore& params() { return *store_; }
  const nn::ParameterStore& params() const { return *store_; }
  const Codec& codec() const { return codec_; }
  const VaeLite& vae() const { return vae_; }
  const Denoiser& denoiser() const { return denoiser_; }
  const ControlModule& control() const { return control_; }
  const NoiseSchedule& schedule() const { return schedule_; }

 private:
  ModelConfig config_;
  std::unique_ptr<nn::ParameterStore> store_;
  Codec codec_;
  VaeLite vae_;
  Denoiser denoiser_;
  ControlModule control_;
  NoiseSchedule schedule_;
  std::optional<U32Table> frozen_hyper_cdf_;
};

}  // namespace discover
