// SPDX-License-Identifier: Apache-2.0
#include "discover/model.hpp"

#include "discover/errors.hpp"

namespace discover {

Model::Model(const ModelConfig& config) : config_(config), store_(std::make_unique<nn::ParameterStore>()) {
  config.validate();
  std::mt19937_64 rng(config.init_seed);
  codec_ = Codec(*store_, config, rng);
  vae_ = VaeLite(*store_, config, rng);
  denoiser_ = Denoiser(*store_, config, rng);
  control_ = ControlModule(*store_, config, rng);
  control_.copy_encoder_from(*store_);
  schedule_ = NoiseSchedule::linear(config.timesteps, config.beta_start, config.beta_end);
}

Model Model::from_archive(const Archive& archive) {
  Model m(ModelConfig::from_json(archive.config_json));
  m.load_parameters(archive);
  if (const auto* t = archive.table("hyper_cdf")) m.frozen_hyper_cdf_ = *t;
  return m;
}

void Model::load_parameters(const Archive& archive) {
  std::size_t matched = 0;
  for (const auto& [name, value] : archive.arrays) {
    if (!store_->contains(name)) continue;
    ag::Var p = store_->get(name);
    if (p.shape() != value.shape()) {
      throw ParseError("parameter " + name + " has shape " + shape_string(value.shape()) + ", expected " +
                       shape_string(p.shape()));
    }
    p.mutable_value() = value;
    ++matched;
  }
  if (matched != store_->names().size()) {
    throw ParseError("model file provides " + std::to_string(matched) + " of " +
                     std::to_string(store_->names().size()) + " parameters");
  }
}

Model Model::load(const std::filesystem::path& path) { return from_archive(load_archive(path)); }

Archive Model::to_archive() const {
  Archive a;
  a.config_json = config_.to_json();
  for (const auto& name : store_->names()) a.arrays.emplace_back(name, store_->get(name).value());
  a.tables.emplace_back("hyper_cdf", hyper_cdf());
  return a;
}

Bytes Model::serialize() const { return serialize_archive(to_archive()); }

void Model::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

ContentId Model::id() const { return content_id(serialize()); }

U32Table Model::hyper_cdf() const {
  if (frozen_hyper_cdf_) return *frozen_hyper_cdf_;
  return codec_.prior().cdf_tables();
}

}  // namespace discover
