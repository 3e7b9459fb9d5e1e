// SPDX-License-Identifier: Apache-2.0
#include "discover/kernels.hpp"

namespace discover::kernels::reference {

void conv2d_forward(const ConvGeometry& g, const double* x, const double* w, const double* bias, double* y) {
  const int oh = g.out_h(), ow = g.out_w();
  for (int n = 0; n < g.batch; ++n) {
    for (int co = 0; co < g.out_channels; ++co) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double acc = bias ? bias[co] : 0.0;
          for (int ci = 0; ci < g.in_channels; ++ci) {
            for (int ky = 0; ky < g.kernel; ++ky) {
              const int iy = oy * g.stride - g.pad + ky;
              if (iy < 0 || iy >= g.in_h) continue;
              for (int kx = 0; kx < g.kernel; ++kx) {
                const int ix = ox * g.stride - g.pad + kx;
                if (ix < 0 || ix >= g.in_w) continue;
                acc += w[((co * g.in_channels + ci) * g.kernel + ky) * g.kernel + kx] *
                       x[((static_cast<std::size_t>(n) * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix];
              }
            }
          }
          y[((static_cast<std::size_t>(n) * g.out_channels + co) * oh + oy) * ow + ox] = acc;
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, const double* dy, const double* w, double* dx) {
  const int oh = g.out_h(), ow = g.out_w();
  for (int n = 0; n < g.batch; ++n) {
    for (int co = 0; co < g.out_channels; ++co) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const double d = dy[((static_cast<std::size_t>(n) * g.out_channels + co) * oh + oy) * ow + ox];
          for (int ci = 0; ci < g.in_channels; ++ci) {
            for (int ky = 0; ky < g.kernel; ++ky) {
              const int iy = oy * g.stride - g.pad + ky;
              if (iy < 0 || iy >= g.in_h) continue;
              for (int kx = 0; kx < g.kernel; ++kx) {
                const int ix = ox * g.stride - g.pad + kx;
                if (ix < 0 || ix >= g.in_w) continue;
                dx[((static_cast<std::size_t>(n) * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix] +=
                    d * w[((co * g.in_channels + ci) * g.kernel + ky) * g.kernel + kx];
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_weight(const ConvGeometry& g, const double* x, const double* dy, double* dw, double* dbias) {
  const int oh = g.out_h(), ow = g.out_w();
  for (int n = 0; n < g.batch; ++n) {
    for (int co = 0; co < g.out_channels; ++co) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const double d = dy[((static_cast<std::size_t>(n) * g.out_channels + co) * oh + oy) * ow + ox];
          if (dbias) dbias[co] += d;
          for (int ci = 0; ci < g.in_channels; ++ci) {
            for (int ky = 0; ky < g.kernel; ++ky) {
              const int iy = oy * g.stride - g.pad + ky;
              if (iy < 0 || iy >= g.in_h) continue;
              for (int kx = 0; kx < g.kernel; ++kx) {
                const int ix = ox * g.stride - g.pad + kx;
                if (ix < 0 || ix >= g.in_w) continue;
                dw[((co * g.in_channels + ci) * g.kernel + ky) * g.kernel + kx] +=
                    d * x[((static_cast<std::size_t>(n) * g.in_channels + ci) * g.in_h + iy) * g.in_w + ix];
              }
            }
          }
        }
      }
    }
  }
}

void gemm(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a[static_cast<std::size_t>(i) * k + p] * b[static_cast<std::size_t>(p) * n + j];
      c[static_cast<std::size_t>(i) * n + j] += acc;
    }
  }
}

}  // namespace discover::kernels::reference
