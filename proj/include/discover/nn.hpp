// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "discover/autograd.hpp"

namespace discover::nn {

/// Owns every trainable array of a model under a dotted name
/// ("codec.g_a.0.weight"). Iteration order is insertion order.
class ParameterStore {
 public:
  ag::Var add(const std::string& name, Tensor init);
  ag::Var get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const std::vector<std::string>& names() const { return order_; }

  /// Enables or disables gradients for every parameter whose name starts with `prefix`.
  void set_trainable(std::string_view prefix, bool trainable);
  std::vector<std::string> trainable_names() const;
  void zero_grad();
  std::size_t parameter_count() const;

 private:
  std::map<std::string, ag::Var> params_;
  std::vector<std::string> order_;
};

enum class Init { kUniformFanIn, kZero };

struct Conv2d {
  Conv2d() = default;
  Conv2d(ParameterStore& store, const std::string& name, int in, int out, int kernel, int stride,
         std::mt19937_64& rng, Init init = Init::kUniformFanIn);
  ag::Var operator()(const ag::Var& x) const { return ag::conv2d(x, weight, bias, stride, pad); }

  ag::Var weight, bias;
  int stride = 1;
  int pad = 0;
};

/// Exact 2x upsampling: kernel 4, stride 2, padding 1.
struct ConvTranspose2d {
  ConvTranspose2d() = default;
  ConvTranspose2d(ParameterStore& store, const std::string& name, int in, int out, std::mt19937_64& rng);
  ag::Var operator()(const ag::Var& x) const { return ag::conv_transpose2d(x, weight, bias, 2, 1); }

  ag::Var weight, bias;
};

struct Linear {
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, int in, int out, std::mt19937_64& rng);
  ag::Var operator()(const ag::Var& x) const { return ag::linear(x, weight, bias); }

  ag::Var weight, bias;
};

}  // namespace discover::nn
