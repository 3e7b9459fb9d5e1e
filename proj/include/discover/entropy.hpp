// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <string>

#include "discover/archive.hpp"
#include "discover/autograd.hpp"
#include "discover/nn.hpp"

namespace discover::entropy {

inline constexpr double kSigmaMin = 0.04;

/// Per-element cost in bits of y under a discretized Gaussian:
///   -log2 max(Phi((y+0.5-mu)/sigma) - Phi((y-0.5-mu)/sigma), 2^-24)
/// Differentiable in y, mu and sigma.
ag::Var gaussian_bits(const ag::Var& y, const ag::Var& mu, const ag::Var& sigma);

/// Learned per-channel univariate density (non-parametric cumulative model
/// with filters 3-3-3). Parameters live in the store under `name`.
class FactorizedPrior {
 public:
  static constexpr int kParamsPerChannel = 43;

  FactorizedPrior() = default;
  FactorizedPrior(nn::ParameterStore& store, const std::string& name, int channels, std::mt19937_64& rng);

  int channels() const { return channels_; }
  /// Per-element bits of z [N, C, H, W], floored at 2^-24 probability.
  ag::Var bits(const ag::Var& z) const;
  /// Continuous CDF of channel c at x (inference only).
  double cdf(int channel, double x) const;
  /// Frozen 16-bit coder tables, one row of 257 entries per channel.
  U32Table cdf_tables() const;

 private:
  ag::Var params_;
  int channels_ = 0;
};

}  // namespace discover::entropy
