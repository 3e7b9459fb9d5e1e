// SPDX-License-Identifier: Apache-2.0
#pragma once

// Minimal reverse-mode automatic differentiation over Tensor.
//
// A Var is a handle to a graph node. Ops record a backward closure only when
// gradients are enabled and at least one input requires a gradient, so the
// same network code serves training and inference.

#include <functional>
#include <memory>
#include <vector>

#include "discover/tensor.hpp"

namespace discover::ag {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Tensor& ensure_grad();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad();

  const Shape& shape() const { return node_->value.shape(); }
  int dim(std::size_t axis) const { return node_->value.dim(axis); }
  std::size_t size() const { return node_->value.size(); }

  /// Back-propagates from a single-element Var.
  void backward() const;
  Var detach() const { return Var(node_->value); }

  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds an op result. `backward` receives the result node; it reads
/// `out.grad` and accumulates into `out.inputs[i]->ensure_grad()`.
Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

// Elementwise
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var mul_const(const Var& a, const Tensor& m);
Var silu(const Var& a);
Var softplus(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var square(const Var& a);
/// max(a, bound) with the exact subgradient (zero below the bound).
Var lower_bound(const Var& a, double bound);

// Reductions (results have shape [1])
Var sum(const Var& a);
Var mean(const Var& a);
Var mse(const Var& a, const Var& b);
Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& weights);

// Layout
Var concat_channels(const Var& a, const Var& b);
Var slice_channels(const Var& a, int begin, int end);
Var upsample2x(const Var& a);
/// x[N,C,H,W] + v[N,C] broadcast over H, W.
Var add_channel_bias(const Var& x, const Var& v);

// Layers
Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad);
/// Transposed convolution; w is [C_in, C_out, k, k]. Output spatial size is
/// (in - 1) * stride - 2 * pad + k.
Var conv_transpose2d(const Var& x, const Var& w, const Var& bias, int stride, int pad);
/// x[N,in] * w[out,in]^T + b[out]
Var linear(const Var& x, const Var& w, const Var& bias);

}  // namespace discover::ag
