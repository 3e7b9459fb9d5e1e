// SPDX-License-Identifier: Apache-2.0
#include "discover/autograd.hpp"

#include <cmath>
#include <unordered_set>

#include "discover/errors.hpp"
#include "discover/kernels.hpp"

namespace discover::ag {
namespace {

thread_local bool g_grad_enabled = true;

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ContractError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                        shape_string(b.shape()));
  }
}

void require_4d(const Var& a, const char* op) {
  if (a.value().ndim() != 4) throw ContractError(std::string(op) + ": expected NCHW, got " + shape_string(a.shape()));
}

Node& in(Node& out, std::size_t i) { return *out.inputs[i]; }

template <typename Fwd, typename Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
  Tensor y(a.shape());
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  return make_op(std::move(y), {a}, [deriv](Node& out) {
    Node& xa = in(out, 0);
    if (!xa.requires_grad) return;
    Tensor& g = xa.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * deriv(xa.value[i], out.value[i]);
  });
}

Var scalar_result(double v, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  return make_op(Tensor({1}, v), std::move(inputs), std::move(backward));
}

}  // namespace

Tensor& Node::ensure_grad() {
  if (grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::zero_grad() {
  if (node_ && !node_->grad.empty()) node_->grad.fill(0.0);
}

void Var::backward() const {
  if (!node_ || node_->value.size() != 1) throw ContractError("backward() requires a single-element Var");
  // Iterative post-order DFS restricted to nodes that carry gradients.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->inputs.size()) {
      Node* child = n->inputs[idx++].get();
      if (child->requires_grad && child->backward && !seen.count(child)) {
        seen.insert(child);
        stack.push_back({child, 0});
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  // Release intermediate gradients; leaves (no backward fn) keep theirs.
  for (Node* n : order) {
    if (n->backward) n->grad = Tensor();
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& v : inputs) needs = needs || v.requires_grad();
  }
  Var out(std::move(value), needs);
  if (needs) {
    auto node = out.node();
    for (auto& v : inputs) node->inputs.push_back(v.defined() ? v.node() : std::make_shared<Node>());
    node->backward = std::move(backward);
  }
  return out;
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] + b.value()[i];
  return make_op(std::move(y), {a, b}, [](Node& out) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node& x = in(out, k);
      if (!x.requires_grad) continue;
      Tensor& g = x.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] - b.value()[i];
  return make_op(std::move(y), {a, b}, [](Node& out) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node& x = in(out, k);
      if (!x.requires_grad) continue;
      Tensor& g = x.ensure_grad();
      const double sign = k == 0 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * out.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] * b.value()[i];
  return make_op(std::move(y), {a, b}, [](Node& out) {
    Node& xa = in(out, 0);
    Node& xb = in(out, 1);
    if (xa.requires_grad) {
      Tensor& g = xa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * xb.value[i];
    }
    if (xb.requires_grad) {
      Tensor& g = xb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * xa.value[i];
    }
  });
}

Var scale(const Var& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var mul_const(const Var& a, const Tensor& m) {
  if (a.shape() != m.shape()) throw ContractError("mul_const: shape mismatch");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] * m[i];
  return make_op(std::move(y), {a}, [m](Node& out) {
    Node& x = in(out, 0);
    if (!x.requires_grad) return;
    Tensor& g = x.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * m[i];
  });
}

Var silu(const Var& a) {
  return unary(
      a, [](double x) { return x / (1.0 + std::exp(-x)); },
      [](double x, double) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
      });
}

Var softplus(const Var& a) {
  return unary(
      a, [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var tanh(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, [](double, double y) { return y * (1.0 - y); });
}

Var exp(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var lower_bound(const Var& a, double bound) {
  return unary(
      a, [bound](double x) { return x < bound ? bound : x; }, [bound](double x, double) { return x < bound ? 0.0 : 1.0; });
}

Var sum(const Var& a) {
  double acc = 0.0;
  for (double v : a.value().values()) acc += v;
  return scalar_result(acc, {a}, [](Node& out) {
    Node& x = in(out, 0);
    if (!x.requires_grad) return;
    Tensor& g = x.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[0];
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.size());
  return scale(sum(a), 1.0 / n);
}

Var mse(const Var& a, const Var& b) {
  require_same_shape(a, b, "mse");
  const std::size_t n = a.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a.value()[i] - b.value()[i];
    acc += d * d;
  }
  return scalar_result(acc / static_cast<double>(n), {a, b}, [n](Node& out) {
    Node& xa = in(out, 0);
    Node& xb = in(out, 1);
    const double s = 2.0 * out.grad[0] / static_cast<double>(n);
    if (xa.requires_grad) {
      Tensor& g = xa.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) g[i] += s * (xa.value[i] - xb.value[i]);
    }
    if (xb.requires_grad) {
      Tensor& g = xb.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) g[i] -= s * (xa.value[i] - xb.value[i]);
    }
  });
}

Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& weights) {
  if (terms.size() != weights.size()) throw ContractError("weighted_sum: size mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < terms.size(); ++k) {
    if (terms[k].size() != 1) throw ContractError("weighted_sum: terms must be scalars");
    acc += weights[k] * terms[k].value()[0];
  }
  return scalar_result(acc, terms, [weights](Node& out) {
    for (std::size_t k = 0; k < weights.size(); ++k) {
      Node& x = in(out, k);
      if (x.requires_grad) x.ensure_grad()[0] += weights[k] * out.grad[0];
    }
  });
}

Var concat_channels(const Var& a, const Var& b) {
  require_4d(a, "concat_channels");
  require_4d(b, "concat_channels");
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
  if (b.dim(0) != n || b.dim(2) != h || b.dim(3) != w) throw ContractError("concat_channels: incompatible shapes");
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor y({n, ca + cb, h, w});
  for (int i = 0; i < n; ++i) {
    std::copy_n(a.value().data() + i * ca * plane, ca * plane, y.data() + i * (ca + cb) * plane);
    std::copy_n(b.value().data() + i * cb * plane, cb * plane, y.data() + (i * (ca + cb) + ca) * plane);
  }
  return make_op(std::move(y), {a, b}, [n, ca, cb, plane](Node& out) {
    Node& xa = in(out, 0);
    Node& xb = in(out, 1);
    for (int i = 0; i < n; ++i) {
      if (xa.requires_grad) {
        double* g = xa.ensure_grad().data() + i * ca * plane;
        const double* src = out.grad.data() + i * (ca + cb) * plane;
        for (std::size_t k = 0; k < ca * plane; ++k) g[k] += src[k];
      }
      if (xb.requires_grad) {
        double* g = xb.ensure_grad().data() + i * cb * plane;
        const double* src = out.grad.data() + (i * (ca + cb) + ca) * plane;
        for (std::size_t k = 0; k < cb * plane; ++k) g[k] += src[k];
      }
    }
  });
}

Var slice_channels(const Var& a, int begin, int end) {
  require_4d(a, "slice_channels");
  const int n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  if (begin < 0 || end > c || begin >= end) throw ContractError("slice_channels: bad range");
  const int cs = end - begin;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor y({n, cs, h, w});
  for (int i = 0; i < n; ++i) {
    std::copy_n(a.value().data() + (i * c + begin) * plane, cs * plane, y.data() + i * cs * plane);
  }
  return make_op(std::move(y), {a}, [n, c, cs, begin, plane](Node& out) {
    Node& x = in(out, 0);
    if (!x.requires_grad) return;
    Tensor& g = x.ensure_grad();
    for (int i = 0; i < n; ++i) {
      double* dst = g.data() + (i * c + begin) * plane;
      const double* src = out.grad.data() + i * cs * plane;
      for (std::size_t k = 0; k < cs * plane; ++k) dst[k] += src[k];
    }
  });
}

Var upsample2x(const Var& a) {
  require_4d(a, "upsample2x");
  const int n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  Tensor y({n, c, 2 * h, 2 * w});
  const Tensor& x = a.value();
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (int r = 0; r < 2 * h; ++r)
        for (int q = 0; q < 2 * w; ++q) y.at(i, ch, r, q) = x.at(i, ch, r / 2, q / 2);
  return make_op(std::move(y), {a}, [n, c, h, w](Node& out) {
    Node& xn = in(out, 0);
    if (!xn.requires_grad) return;
    Tensor& g = xn.ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch)
        for (int r = 0; r < 2 * h; ++r)
          for (int q = 0; q < 2 * w; ++q) g.at(i, ch, r / 2, q / 2) += out.grad.at(i, ch, r, q);
  });
}

Var add_channel_bias(const Var& x, const Var& v) {
  require_4d(x, "add_channel_bias");
  const int n = x.dim(0), c = x.dim(1);
  if (v.value().ndim() != 2 || v.dim(0) != n || v.dim(1) != c) {
    throw ContractError("add_channel_bias: bias shape " + shape_string(v.shape()) + " vs " + shape_string(x.shape()));
  }
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor y = x.value();
  for (int i = 0; i < n * c; ++i) {
    const double b = v.value()[i];
    for (std::size_t k = 0; k < plane; ++k) y[i * plane + k] += b;
  }
  return make_op(std::move(y), {x, v}, [n, c, plane](Node& out) {
    Node& xn = in(out, 0);
    Node& vn = in(out, 1);
    if (xn.requires_grad) {
      Tensor& g = xn.ensure_grad();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += out.grad[k];
    }
    if (vn.requires_grad) {
      Tensor& g = vn.ensure_grad();
      for (int i = 0; i < n * c; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < plane; ++k) acc += out.grad[i * plane + k];
        g[i] += acc;
      }
    }
  });
}

Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad) {
  require_4d(x, "conv2d");
  require_4d(w, "conv2d weight");
  kernels::ConvGeometry g;
  g.batch = x.dim(0);
  g.in_channels = x.dim(1);
  g.in_h = x.dim(2);
  g.in_w = x.dim(3);
  g.out_channels = w.dim(0);
  g.kernel = w.dim(2);
  g.stride = stride;
  g.pad = pad;
  if (w.dim(1) != g.in_channels || w.dim(3) != g.kernel) {
    throw ContractError("conv2d: weight " + shape_string(w.shape()) + " incompatible with input " +
                        shape_string(x.shape()));
  }
  if (g.out_h() <= 0 || g.out_w() <= 0) throw ContractError("conv2d: empty output");
  Tensor y({g.batch, g.out_channels, g.out_h(), g.out_w()});
  kernels::parallel::conv2d_forward(g, x.value().data(), w.value().data(),
                                    bias.defined() ? bias.value().data() : nullptr, y.data());
  return make_op(std::move(y), {x, w, bias}, [g](Node& out) {
    Node& xn = in(out, 0);
    Node& wn = in(out, 1);
    Node& bn = in(out, 2);
    if (xn.requires_grad) kernels::parallel::conv2d_backward_input(g, out.grad.data(), wn.value.data(), xn.ensure_grad().data());
    if (wn.requires_grad || bn.requires_grad) {
      Tensor dw_scratch;
      double* dw = nullptr;
      if (wn.requires_grad) {
        dw = wn.ensure_grad().data();
      } else {
        dw_scratch = Tensor(wn.value.shape());
        dw = dw_scratch.data();
      }
      kernels::parallel::conv2d_backward_weight(g, xn.value.data(), out.grad.data(), dw,
                                                bn.requires_grad ? bn.ensure_grad().data() : nullptr);
    }
  });
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& bias, int stride, int pad) {
  require_4d(x, "conv_transpose2d");
  require_4d(w, "conv_transpose2d weight");
  if (w.dim(0) != x.dim(1)) throw ContractError("conv_transpose2d: weight/input channel mismatch");
  // Geometry of the forward convolution this op is the adjoint of.
  kernels::ConvGeometry g;
  g.batch = x.dim(0);
  g.out_channels = x.dim(1);
  g.in_channels = w.dim(1);
  g.kernel = w.dim(2);
  g.stride = stride;
  g.pad = pad;
  g.in_h = (x.dim(2) - 1) * stride - 2 * pad + g.kernel;
  g.in_w = (x.dim(3) - 1) * stride - 2 * pad + g.kernel;
  if (g.out_h() != x.dim(2) || g.out_w() != x.dim(3)) throw ContractError("conv_transpose2d: inconsistent geometry");
  Tensor y({g.batch, g.in_channels, g.in_h, g.in_w});
  kernels::parallel::conv2d_backward_input(g, x.value().data(), w.value().data(), y.data());
  const std::size_t plane = static_cast<std::size_t>(g.in_h) * g.in_w;
  if (bias.defined()) {
    for (int n = 0; n < g.batch; ++n)
      for (int c = 0; c < g.in_channels; ++c) {
        double* p = y.data() + (static_cast<std::size_t>(n) * g.in_channels + c) * plane;
        for (std::size_t k = 0; k < plane; ++k) p[k] += bias.value()[c];
      }
  }
  return make_op(std::move(y), {x, w, bias}, [g, plane](Node& out) {
    Node& xn = in(out, 0);
    Node& wn = in(out, 1);
    Node& bn = in(out, 2);
    if (xn.requires_grad) {
      Tensor dx(xn.value.shape());
      kernels::parallel::conv2d_forward(g, out.grad.data(), wn.value.data(), nullptr, dx.data());
      Tensor& gx = xn.ensure_grad();
      for (std::size_t k = 0; k < gx.size(); ++k) gx[k] += dx[k];
    }
    if (wn.requires_grad) {
      kernels::parallel::conv2d_backward_weight(g, out.grad.data(), xn.value.data(), wn.ensure_grad().data(), nullptr);
    }
    if (bn.requires_grad) {
      Tensor& gb = bn.ensure_grad();
      for (int n = 0; n < g.batch; ++n)
        for (int c = 0; c < g.in_channels; ++c) {
          const double* p = out.grad.data() + (static_cast<std::size_t>(n) * g.in_channels + c) * plane;
          double acc = 0.0;
          for (std::size_t k = 0; k < plane; ++k) acc += p[k];
          gb[c] += acc;
        }
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& bias) {
  if (x.value().ndim() != 2 || w.value().ndim() != 2 || x.dim(1) != w.dim(1)) {
    throw ContractError("linear: shapes " + shape_string(x.shape()) + " x " + shape_string(w.shape()));
  }
  const int n = x.dim(0), fin = x.dim(1), fout = w.dim(0);
  Tensor y({n, fout});
  for (int i = 0; i < n; ++i)
    for (int o = 0; o < fout; ++o) {
      double acc = bias.defined() ? bias.value()[o] : 0.0;
      for (int k = 0; k < fin; ++k) acc += x.value()[i * fin + k] * w.value()[o * fin + k];
      y[i * fout + o] = acc;
    }
  return make_op(std::move(y), {x, w, bias}, [n, fin, fout](Node& out) {
    Node& xn = in(out, 0);
    Node& wn = in(out, 1);
    Node& bn = in(out, 2);
    for (int i = 0; i < n; ++i)
      for (int o = 0; o < fout; ++o) {
        const double d = out.grad[i * fout + o];
        if (xn.requires_grad) {
          Tensor& g = xn.ensure_grad();
          for (int k = 0; k < fin; ++k) g[i * fin + k] += d * wn.value[o * fin + k];
        }
        if (wn.requires_grad) {
          Tensor& g = wn.ensure_grad();
          for (int k = 0; k < fin; ++k) g[o * fin + k] += d * xn.value[i * fin + k];
        }
        if (bn.requires_grad) bn.ensure_grad()[o] += d;
      }
  });
}

}  // namespace discover::ag
