// SPDX-License-Identifier: Apache-2.0
#pragma once

// Convolution and matrix kernels used by the autograd layer.
//
// Two implementations share one signature set:
//   reference::  straightforward serial loops, kept as the oracle for tests
//   parallel::   im2col + OpenMP GEMM, used by the networks
//
// All `*_backward_*` kernels and `conv2d_forward` with a null bias ACCUMULATE
// into their output buffers only where noted; see each declaration.

#include <cstddef>

namespace discover::kernels {

struct ConvGeometry {
  int batch = 1;
  int in_channels = 1;
  int in_h = 1;
  int in_w = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int pad = 1;

  int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
  std::size_t input_size() const { return static_cast<std::size_t>(batch) * in_channels * in_h * in_w; }
  std::size_t output_size() const {
    return static_cast<std::size_t>(batch) * out_channels * out_h() * out_w();
  }
  std::size_t weight_size() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
  }
};

namespace reference {

/// y = conv(x, w) + b. Overwrites y. `bias` may be null.
void conv2d_forward(const ConvGeometry& g, const double* x, const double* w, const double* bias, double* y);
/// dx += conv^T(dy, w).
void conv2d_backward_input(const ConvGeometry& g, const double* dy, const double* w, double* dx);
/// dw += dy (x) x ; dbias += sum(dy) when dbias is non-null.
void conv2d_backward_weight(const ConvGeometry& g, const double* x, const double* dy, double* dw, double* dbias);
/// c[m,n] += a[m,k] * b[k,n]
void gemm(int m, int n, int k, const double* a, const double* b, double* c);

}  // namespace reference

namespace parallel {

void conv2d_forward(const ConvGeometry& g, const double* x, const double* w, const double* bias, double* y);
void conv2d_backward_input(const ConvGeometry& g, const double* dy, const double* w, double* dx);
void conv2d_backward_weight(const ConvGeometry& g, const double* x, const double* dy, double* dw, double* dbias);
void gemm(int m, int n, int k, const double* a, const double* b, double* c);

}  // namespace parallel

}  // namespace discover::kernels
