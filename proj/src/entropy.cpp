// SPDX-License-Identifier: Apache-2.0
#include "discover/entropy.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "discover/errors.hpp"
#include "discover/rans.hpp"

namespace discover::entropy {
namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;
constexpr double kLn2 = std::numbers::ln2;

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

// Layer dimensions of the cumulative model: 1 -> 3 -> 3 -> 3 -> 1.
constexpr std::array<int, 5> kDims = {1, 3, 3, 3, 1};
constexpr int kLayers = 4;

struct LayerOffsets {
  int matrix, bias, gate;  // gate < 0 for the last layer
};

constexpr std::array<LayerOffsets, kLayers> layer_offsets() {
  std::array<LayerOffsets, kLayers> out{};
  int off = 0;
  for (int k = 0; k < kLayers; ++k) {
    out[k].matrix = off;
    off += kDims[k + 1] * kDims[k];
    out[k].bias = off;
    off += kDims[k + 1];
    if (k + 1 < kLayers) {
      out[k].gate = off;
      off += kDims[k + 1];
    } else {
      out[k].gate = -1;
    }
  }
  return out;
}
constexpr auto kOffsets = layer_offsets();

// Activations of one evaluation of the logit chain.
struct ChainCache {
  std::array<std::array<double, 3>, kLayers + 1> h{};    // inputs to each layer, h[kLayers] = output
  std::array<std::array<double, 3>, kLayers> pre{};      // pre-gate values
};

double chain_forward(const double* p, double x, ChainCache& cache) {
  cache.h[0][0] = x;
  for (int k = 0; k < kLayers; ++k) {
    const auto& o = kOffsets[k];
    for (int i = 0; i < kDims[k + 1]; ++i) {
      double v = p[o.bias + i];
      for (int j = 0; j < kDims[k]; ++j) v += softplus(p[o.matrix + i * kDims[k] + j]) * cache.h[k][j];
      cache.pre[k][i] = v;
      cache.h[k + 1][i] = o.gate >= 0 ? v + std::tanh(p[o.gate + i]) * std::tanh(v) : v;
    }
  }
  return cache.h[kLayers][0];
}

// Accumulates d(logit)/d(params) * seed into dp and returns d(logit)/dx * seed.
double chain_backward(const double* p, const ChainCache& cache, double seed, double* dp) {
  std::array<double, 3> dh{seed, 0.0, 0.0};
  for (int k = kLayers - 1; k >= 0; --k) {
    const auto& o = kOffsets[k];
    std::array<double, 3> dpre{};
    for (int i = 0; i < kDims[k + 1]; ++i) {
      if (o.gate >= 0) {
        const double ta = std::tanh(p[o.gate + i]);
        const double tv = std::tanh(cache.pre[k][i]);
        dpre[i] = dh[i] * (1.0 + ta * (1.0 - tv * tv));
        if (dp) dp[o.gate + i] += dh[i] * tv * (1.0 - ta * ta);
      } else {
        dpre[i] = dh[i];
      }
    }
    std::array<double, 3> dprev{};
    for (int i = 0; i < kDims[k + 1]; ++i) {
      if (dp) dp[o.bias + i] += dpre[i];
      for (int j = 0; j < kDims[k]; ++j) {
        const double raw = p[o.matrix + i * kDims[k] + j];
        if (dp) dp[o.matrix + i * kDims[k] + j] += dpre[i] * cache.h[k][j] * sigmoid(raw);
        dprev[j] += softplus(raw) * dpre[i];
      }
    }
    dh = dprev;
  }
  return dh[0];
}

}  // namespace

ag::Var gaussian_bits(const ag::Var& y, const ag::Var& mu, const ag::Var& sigma) {
  if (y.shape() != mu.shape() || y.shape() != sigma.shape()) {
    throw ContractError("gaussian_bits: y/mu/sigma shapes differ: " + shape_string(y.shape()) + ", " +
                        shape_string(mu.shape()) + ", " + shape_string(sigma.shape()));
  }
  const std::size_t n = y.size();
  Tensor bits(y.shape());
  for (std::size_t i = 0; i < n; ++i) {
    bits[i] = coding::gaussian_symbol_bits(y.value()[i], mu.value()[i], sigma.value()[i]);
  }
  return ag::make_op(std::move(bits), {y, mu, sigma}, [n](ag::Node& out) {
    ag::Node& yn = *out.inputs[0];
    ag::Node& mn = *out.inputs[1];
    ag::Node& sn = *out.inputs[2];
    for (std::size_t i = 0; i < n; ++i) {
      const double s = sn.value[i];
      const double v = yn.value[i] - mn.value[i];
      const double u1 = (v + 0.5) / s, u0 = (v - 0.5) / s;
      const double a = std::abs(v);
      const double p = coding::normal_cdf((0.5 - a) / s) - coding::normal_cdf((-0.5 - a) / s);
      if (p <= coding::kProbabilityFloor) continue;
      const double dbits_dp = -1.0 / (p * kLn2) * out.grad[i];
      const double f1 = normal_pdf(u1), f0 = normal_pdf(u0);
      const double dp_dv = (f1 - f0) / s;
      const double dp_ds = -(u1 * f1 - u0 * f0) / s;
      if (yn.requires_grad) yn.ensure_grad()[i] += dbits_dp * dp_dv;
      if (mn.requires_grad) mn.ensure_grad()[i] -= dbits_dp * dp_dv;
      if (sn.requires_grad) sn.ensure_grad()[i] += dbits_dp * dp_ds;
    }
  });
}

FactorizedPrior::FactorizedPrior(nn::ParameterStore& store, const std::string& name, int channels,
                                 std::mt19937_64& rng)
    : channels_(channels) {
  Tensor init({channels, kParamsPerChannel});
  constexpr double kInitScale = 10.0;
  const double scale = std::pow(kInitScale, 1.0 / (kLayers));
  std::uniform_real_distribution<double> bias_dist(-0.5, 0.5);
  for (int c = 0; c < channels; ++c) {
    double* p = init.data() + static_cast<std::size_t>(c) * kParamsPerChannel;
    for (int k = 0; k < kLayers; ++k) {
      const auto& o = kOffsets[k];
      const double m = std::log(std::expm1(1.0 / scale / kDims[k + 1]));
      for (int i = 0; i < kDims[k + 1] * kDims[k]; ++i) p[o.matrix + i] = m;
      for (int i = 0; i < kDims[k + 1]; ++i) p[o.bias + i] = bias_dist(rng);
      if (o.gate >= 0) {
        for (int i = 0; i < kDims[k + 1]; ++i) p[o.gate + i] = 0.0;
      }
    }
  }
  params_ = store.add(name + ".density", std::move(init));
}

ag::Var FactorizedPrior::bits(const ag::Var& z) const {
  if (z.value().ndim() != 4 || z.dim(1) != channels_) {
    throw ContractError("FactorizedPrior: expected [N," + std::to_string(channels_) + ",H,W], got " +
                        shape_string(z.shape()));
  }
  const int n = z.dim(0), c = z.dim(1);
  const std::size_t plane = static_cast<std::size_t>(z.dim(2)) * z.dim(3);
  Tensor out(z.shape());
  const Tensor& p = params_.value();
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (std::size_t k = 0; k < plane; ++k) {
        const std::size_t i = (static_cast<std::size_t>(b) * c + ch) * plane + k;
        const double* pc = p.data() + static_cast<std::size_t>(ch) * kParamsPerChannel;
        ChainCache cu, cl;
        const double lu = chain_forward(pc, z.value()[i] + 0.5, cu);
        const double ll = chain_forward(pc, z.value()[i] - 0.5, cl);
        const double sgn = (lu + ll) > 0.0 ? -1.0 : 1.0;
        const double lik = std::abs(sigmoid(sgn * lu) - sigmoid(sgn * ll));
        out[i] = -std::log2(std::max(lik, coding::kProbabilityFloor));
      }
  return ag::make_op(std::move(out), {z, params_}, [n, c, plane](ag::Node& o) {
    ag::Node& zn = *o.inputs[0];
    ag::Node& pn = *o.inputs[1];
    double* dparams = pn.requires_grad ? pn.ensure_grad().data() : nullptr;
    for (int b = 0; b < n; ++b)
      for (int ch = 0; ch < c; ++ch)
        for (std::size_t k = 0; k < plane; ++k) {
          const std::size_t i = (static_cast<std::size_t>(b) * c + ch) * plane + k;
          const double* pc = pn.value.data() + static_cast<std::size_t>(ch) * kParamsPerChannel;
          double* dpc = dparams ? dparams + static_cast<std::size_t>(ch) * kParamsPerChannel : nullptr;
          ChainCache cu, cl;
          const double lu = chain_forward(pc, zn.value[i] + 0.5, cu);
          const double ll = chain_forward(pc, zn.value[i] - 0.5, cl);
          const double sgn = (lu + ll) > 0.0 ? -1.0 : 1.0;
          const double su = sigmoid(sgn * lu), sl = sigmoid(sgn * ll);
          const double diff = su - sl;
          const double lik = std::abs(diff);
          if (lik <= coding::kProbabilityFloor) continue;
          const double dbits_dlik = -1.0 / (lik * kLn2) * o.grad[i];
          const double dir = diff >= 0.0 ? 1.0 : -1.0;
          const double d_lu = dbits_dlik * dir * sgn * su * (1.0 - su);
          const double d_ll = -dbits_dlik * dir * sgn * sl * (1.0 - sl);
          const double dx = chain_backward(pc, cu, d_lu, dpc) + chain_backward(pc, cl, d_ll, dpc);
          if (zn.requires_grad) zn.ensure_grad()[i] += dx;
        }
  });
}

double FactorizedPrior::cdf(int channel, double x) const {
  ChainCache cache;
  return sigmoid(chain_forward(params_.value().data() + static_cast<std::size_t>(channel) * kParamsPerChannel, x, cache));
}

U32Table FactorizedPrior::cdf_tables() const {
  U32Table t;
  t.rows = channels_;
  t.cols = coding::kCdfLength;
  t.data.resize(static_cast<std::size_t>(t.rows) * t.cols);
  for (int c = 0; c < channels_; ++c) {
    std::uint32_t* row = t.data.data() + static_cast<std::size_t>(c) * t.cols;
    row[0] = 0;
    for (int i = 1; i < coding::kAlphabetSize; ++i) {
      row[i] = coding::quantize_cdf_value(cdf(c, coding::kAlphabetMin + i - 0.5), i);
    }
    row[coding::kAlphabetSize] = coding::kTotalFrequency;
  }
  return t;
}

}  // namespace discover::entropy
