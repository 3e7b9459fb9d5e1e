// SPDX-License-Identifier: Apache-2.0
#include <omp.h>

#include <algorithm>
#include <cstring>
#include <vector>

#include "discover/kernels.hpp"

namespace discover::kernels::parallel {
namespace {

// col[(ci*k + ky)*k + kx][oy*ow + ox]
void im2col(const ConvGeometry& g, const double* x, double* col) {
  const int oh = g.out_h(), ow = g.out_w(), k = g.kernel;
  for (int ci = 0; ci < g.in_channels; ++ci) {
    const double* plane = x + static_cast<std::size_t>(ci) * g.in_h * g.in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = col + (static_cast<std::size_t>(ci * k + ky) * k + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          double* out = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(out, out + ow, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            out[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* col, double* x) {
  const int oh = g.out_h(), ow = g.out_w(), k = g.kernel;
  for (int ci = 0; ci < g.in_channels; ++ci) {
    double* plane = x + static_cast<std::size_t>(ci) * g.in_h * g.in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col + (static_cast<std::size_t>(ci * k + ky) * k + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * g.in_w;
          const double* src = row + static_cast<std::size_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.in_w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// c[m,n] += a[k,m]^T * b[k,n]
void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c) {
#pragma omp parallel for schedule(static) if (!omp_in_parallel() && m * n > 4096)
  for (int i = 0; i < m; ++i) {
    double* __restrict crow = c + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = a[static_cast<std::size_t>(p) * m + i];
      const double* __restrict brow = b + static_cast<std::size_t>(p) * n;
#pragma omp simd
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m,n] += a[m,k] * b[n,k]^T
void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c) {
#pragma omp parallel for schedule(static) if (!omp_in_parallel() && m * n > 1024)
  for (int i = 0; i < m; ++i) {
    const double* __restrict arow = a + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < n; ++j) {
      const double* __restrict brow = b + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[static_cast<std::size_t>(i) * n + j] += acc;
    }
  }
}

}  // namespace

void gemm(int m, int n, int k, const double* a, const double* b, double* c) {
#pragma omp parallel for schedule(static) if (!omp_in_parallel() && m * n > 4096)
  for (int i = 0; i < m; ++i) {
    double* __restrict crow = c + static_cast<std::size_t>(i) * n;
    const double* __restrict arow = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* __restrict brow = b + static_cast<std::size_t>(p) * n;
#pragma omp simd
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void conv2d_forward(const ConvGeometry& g, const double* x, const double* w, const double* bias, double* y) {
  const int pix = g.out_h() * g.out_w();
  const int kdim = g.in_channels * g.kernel * g.kernel;
  const std::size_t in_stride = static_cast<std::size_t>(g.in_channels) * g.in_h * g.in_w;
  const std::size_t out_stride = static_cast<std::size_t>(g.out_channels) * pix;
#pragma omp parallel if (g.batch > 1)
  {
    std::vector<double> col(static_cast<std::size_t>(kdim) * pix);
#pragma omp for schedule(static)
    for (int n = 0; n < g.batch; ++n) {
      double* yn = y + n * out_stride;
      for (int co = 0; co < g.out_channels; ++co) {
        std::fill(yn + static_cast<std::size_t>(co) * pix, yn + static_cast<std::size_t>(co + 1) * pix,
                  bias ? bias[co] : 0.0);
      }
      im2col(g, x + n * in_stride, col.data());
      gemm(g.out_channels, pix, kdim, w, col.data(), yn);
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, const double* dy, const double* w, double* dx) {
  const int pix = g.out_h() * g.out_w();
  const int kdim = g.in_channels * g.kernel * g.kernel;
  const std::size_t in_stride = static_cast<std::size_t>(g.in_channels) * g.in_h * g.in_w;
  const std::size_t out_stride = static_cast<std::size_t>(g.out_channels) * pix;
#pragma omp parallel if (g.batch > 1)
  {
    std::vector<double> col(static_cast<std::size_t>(kdim) * pix);
#pragma omp for schedule(static)
    for (int n = 0; n < g.batch; ++n) {
      std::fill(col.begin(), col.end(), 0.0);
      gemm_tn(kdim, pix, g.out_channels, w, dy + n * out_stride, col.data());
      col2im_add(g, col.data(), dx + n * in_stride);
    }
  }
}

void conv2d_backward_weight(const ConvGeometry& g, const double* x, const double* dy, double* dw, double* dbias) {
  const int pix = g.out_h() * g.out_w();
  const int kdim = g.in_channels * g.kernel * g.kernel;
  const std::size_t in_stride = static_cast<std::size_t>(g.in_channels) * g.in_h * g.in_w;
  const std::size_t out_stride = static_cast<std::size_t>(g.out_channels) * pix;
  std::vector<double> col(static_cast<std::size_t>(kdim) * pix);
  for (int n = 0; n < g.batch; ++n) {
    const double* dyn = dy + n * out_stride;
    im2col(g, x + n * in_stride, col.data());
    gemm_nt(g.out_channels, kdim, pix, dyn, col.data(), dw);
    if (dbias) {
      for (int co = 0; co < g.out_channels; ++co) {
        double acc = 0.0;
        const double* row = dyn + static_cast<std::size_t>(co) * pix;
        for (int p = 0; p < pix; ++p) acc += row[p];
        dbias[co] += acc;
      }
    }
  }
}

}  // namespace discover::kernels::parallel
