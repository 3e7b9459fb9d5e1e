// SPDX-License-Identifier: Apache-2.0
#include "discover/nn.hpp"

#include <cmath>

#include "discover/errors.hpp"

namespace discover::nn {

ag::Var ParameterStore::add(const std::string& name, Tensor init) {
  if (contains(name)) throw ContractError("duplicate parameter " + name);
  ag::Var v(std::move(init), true);
  params_.emplace(name, v);
  order_.push_back(name);
  return v;
}

ag::Var ParameterStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter " + name);
  return it->second;
}

void ParameterStore::set_trainable(std::string_view prefix, bool trainable) {
  for (auto& [name, v] : params_) {
    if (name.starts_with(prefix)) v.set_requires_grad(trainable);
  }
}

std::vector<std::string> ParameterStore::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& name : order_) {
    if (params_.at(name).requires_grad()) out.push_back(name);
  }
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& [_, v] : params_) v.zero_grad();
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, v] : params_) n += v.size();
  return n;
}

Conv2d::Conv2d(ParameterStore& store, const std::string& name, int in, int out, int kernel, int stride_,
               std::mt19937_64& rng, Init init)
    : stride(stride_), pad(kernel / 2) {
  // Even kernels with stride 2 (k=4) halve exactly with pad 1.
  if (kernel % 2 == 0) pad = kernel / 2 - 1;
  // He-uniform weights keep activation scale through deep SiLU stacks.
  const double fan = static_cast<double>(in * kernel * kernel);
  const double bound = std::sqrt(6.0 / fan), bias_bound = 1.0 / std::sqrt(fan);
  if (init == Init::kZero) {
    weight = store.add(name + ".weight", Tensor({out, in, kernel, kernel}));
    bias = store.add(name + ".bias", Tensor({out}));
  } else {
    weight = store.add(name + ".weight", Tensor::uniform({out, in, kernel, kernel}, rng, -bound, bound));
    bias = store.add(name + ".bias", Tensor::uniform({out}, rng, -bias_bound, bias_bound));
  }
}

ConvTranspose2d::ConvTranspose2d(ParameterStore& store, const std::string& name, int in, int out,
                                 std::mt19937_64& rng) {
  // Each output pixel of a stride-2, k=4 transposed conv sees 4 taps per input channel.
  const double fan = static_cast<double>(in * 4);
  weight = store.add(name + ".weight", Tensor::uniform({in, out, 4, 4}, rng, -std::sqrt(6.0 / fan), std::sqrt(6.0 / fan)));
  bias = store.add(name + ".bias", Tensor::uniform({out}, rng, -1.0 / std::sqrt(fan), 1.0 / std::sqrt(fan)));
}

Linear::Linear(ParameterStore& store, const std::string& name, int in, int out, std::mt19937_64& rng) {
  const double fan = static_cast<double>(in);
  weight = store.add(name + ".weight", Tensor::uniform({out, in}, rng, -std::sqrt(6.0 / fan), std::sqrt(6.0 / fan)));
  bias = store.add(name + ".bias", Tensor::uniform({out}, rng, -1.0 / std::sqrt(fan), 1.0 / std::sqrt(fan)));
}

}  // namespace discover::nn
