// SPDX-License-Identifier: Apache-2.0
#include "discover/config.hpp"

#include <bit>
#include <numeric>

#include "discover/errors.hpp"
#include "json.hpp"

namespace discover {

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.latent_channels = 32;
  c.hyper_channels = 16;
  c.codec_width = 48;
  c.hyper_width = 32;
  c.global_width = 24;
  c.vae_width = 32;
  c.unet_width = 32;
  return c;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.latent_channels = 4;
  c.hyper_channels = 2;
  c.codec_width = 4;
  c.hyper_width = 4;
  c.global_width = 3;
  c.vae_width = 4;
  c.unet_width = 4;
  return c;
}

int ModelConfig::pad_multiple() const { return std::lcm(latent_stride * hyper_factor, vae_factor); }

void ModelConfig::validate() const {
  auto pow2 = [](int v) { return v > 0 && std::has_single_bit(static_cast<unsigned>(v)); };
  if (!pow2(latent_stride) || !pow2(hyper_factor) || !pow2(vae_factor)) {
    throw ValidationError("latent_stride, hyper_factor and vae_factor must be powers of two");
  }
  if (hyper_factor < 2) throw ValidationError("hyper_factor must be >= 2");
  if (latent_stride < vae_factor) throw ValidationError("latent_stride must be >= vae_factor");
  if (latent_channels <= 0 || hyper_channels <= 0 || codec_width <= 0 || hyper_width <= 0 || global_width <= 0 ||
      diffusion_channels <= 0 || vae_width <= 0 || unet_width <= 0) {
    throw ValidationError("channel counts must be positive");
  }
  if (timesteps < 1) throw ValidationError("timesteps must be >= 1");
  if (!(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0)) {
    throw ValidationError("need 0 < beta_start < beta_end < 1");
  }
}

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["latent_stride"] = latent_stride;
  j["hyper_factor"] = hyper_factor;
  j["vae_factor"] = vae_factor;
  j["latent_channels"] = latent_channels;
  j["hyper_channels"] = hyper_channels;
  j["codec_width"] = codec_width;
  j["hyper_width"] = hyper_width;
  j["global_width"] = global_width;
  j["diffusion_channels"] = diffusion_channels;
  j["vae_width"] = vae_width;
  j["unet_width"] = unet_width;
  j["timesteps"] = timesteps;
  j["beta_start"] = beta_start;
  j["beta_end"] = beta_end;
  j["init_seed"] = init_seed;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
  ModelConfig c;
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("latent_stride", c.latent_stride);
  get("hyper_factor", c.hyper_factor);
  get("vae_factor", c.vae_factor);
  get("latent_channels", c.latent_channels);
  get("hyper_channels", c.hyper_channels);
  get("codec_width", c.codec_width);
  get("hyper_width", c.hyper_width);
  get("global_width", c.global_width);
  get("diffusion_channels", c.diffusion_channels);
  get("vae_width", c.vae_width);
  get("unet_width", c.unet_width);
  get("timesteps", c.timesteps);
  get("beta_start", c.beta_start);
  get("beta_end", c.beta_end);
  get("init_seed", c.init_seed);
  c.validate();
  return c;
}

}  // namespace discover
