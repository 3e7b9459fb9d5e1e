// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "discover/autograd.hpp"
#include "discover/nn.hpp"

namespace discover::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  int probes = 0;
  double max_abs_grad = 0.0;  // over the probed entries; 0 means the check was vacuous
};

/// Fills every all-zero tensor under `prefix` with N(0, sd), standing in for
/// trained weights so gradients reach the zero-initialised paths.
inline void randomize_zero_tensors(const nn::ParameterStore& store, const std::string& prefix, std::mt19937_64& rng,
                                   double sd = 0.1) {
  for (const auto& name : store.names()) {
    if (name.rfind(prefix, 0) != 0) continue;
    ag::Var p = store.get(name);
    auto v = p.mutable_value().values();
    if (std::any_of(v.begin(), v.end(), [](double x) { return x != 0.0; })) continue;
    std::normal_distribution<double> n(0.0, sd);
    for (auto& x : v) x = n(rng);
  }
}

/// Compares the tape gradient of `loss` w.r.t. `param` with central differences
/// at `probes` random entries.
inline GradCheck check_gradient(const std::function<ag::Var()>& loss, ag::Var param, int probes, std::uint64_t seed,
                                double h = 1e-5) {
  param.zero_grad();
  loss().backward();
  const Tensor analytic = param.grad();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, param.size() - 1);
  GradCheck out;
  for (int p = 0; p < probes; ++p) {
    const std::size_t i = pick(rng);
    double& v = param.mutable_value()[i];
    const double saved = v;
    v = saved + h;
    const double up = loss().value()[0];
    v = saved - h;
    const double down = loss().value()[0];
    v = saved;
    const double fd = (up - down) / (2 * h);
    const double a = analytic.empty() ? 0.0 : analytic[i];
    const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6});
    out.max_rel_error = std::max(out.max_rel_error, rel);
    out.max_abs_grad = std::max(out.max_abs_grad, std::abs(a));
    ++out.probes;
  }
  return out;
}

}  // namespace discover::testing
