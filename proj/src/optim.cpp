// SPDX-License-Identifier: Apache-2.0
#include "discover/optim.hpp"

#include <cmath>
#include <numbers>

namespace discover::optim {

Adam::Adam(nn::ParameterStore& store, AdamConfig config) : store_(store), config_(config) {}

double Adam::learning_rate() const {
  const double progress = std::min(1.0, static_cast<double>(step_) / std::max(1, config_.total_steps));
  const double floor = config_.learning_rate * config_.final_lr_ratio;
  return floor + 0.5 * (config_.learning_rate - floor) * (1.0 + std::cos(std::numbers::pi * progress));
}

void Adam::step() {
  const auto names = store_.trainable_names();
  double clip_scale = 1.0;
  if (config_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& name : names) {
      auto p = store_.get(name);
      if (!p.has_grad()) continue;
      for (double g : p.grad().values()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > config_.clip_norm) clip_scale = config_.clip_norm / norm;
  }
  const double lr = learning_rate();
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, step_);
  const double bc2 = 1.0 - std::pow(config_.beta2, step_);
  for (const auto& name : names) {
    auto p = store_.get(name);
    if (!p.has_grad()) continue;
    auto& mom = moments_[name];
    if (mom.m.shape() != p.shape()) {
      mom.m = Tensor(p.shape());
      mom.v = Tensor(p.shape());
    }
    Tensor& w = p.mutable_value();
    const Tensor& g = p.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] * clip_scale;
      mom.m[i] = config_.beta1 * mom.m[i] + (1.0 - config_.beta1) * gi;
      mom.v[i] = config_.beta2 * mom.v[i] + (1.0 - config_.beta2) * gi * gi;
      w[i] -= lr * (mom.m[i] / bc1) / (std::sqrt(mom.v[i] / bc2) + config_.epsilon);
    }
  }
}

void Adam::save_state(Archive& out) const {
  out.arrays.emplace_back("adam.step", Tensor({1}, static_cast<double>(step_)));
  for (const auto& [name, mom] : moments_) {
    out.arrays.emplace_back("adam.m." + name, mom.m);
    out.arrays.emplace_back("adam.v." + name, mom.v);
  }
}

void Adam::load_state(const Archive& in) {
  moments_.clear();
  step_ = static_cast<int>(in.array("adam.step")[0]);
  for (const auto& [name, t] : in.arrays) {
    if (name.starts_with("adam.m.")) moments_[name.substr(7)].m = t;
    if (name.starts_with("adam.v.")) moments_[name.substr(7)].v = t;
  }
}

}  // namespace discover::optim
