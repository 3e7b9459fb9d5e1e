// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "discover/archive.hpp"
#include "discover/nn.hpp"

namespace discover::optim {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Cosine decay runs from learning_rate to learning_rate * final_lr_ratio over total_steps.
  int total_steps = 1;
  double final_lr_ratio = 0.0;
  /// Global gradient-norm clip; <= 0 disables.
  double clip_norm = 0.0;
};

/// Adam with cosine learning-rate decay. Updates only parameters that
/// currently require gradients; frozen parameters are never touched.
class Adam {
 public:
  Adam(nn::ParameterStore& store, AdamConfig config);

  void step();
  double learning_rate() const;
  int steps_taken() const { return step_; }

  /// Moments and step count, for checkpoints.
  void save_state(Archive& out) const;
  void load_state(const Archive& in);

 private:
  struct Moments {
    Tensor m, v;
  };
  nn::ParameterStore& store_;
  AdamConfig config_;
  int step_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace discover::optim
