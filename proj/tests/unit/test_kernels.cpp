// SPDX-License-Identifier: Apache-2.0
#include <random>
#include <vector>

#include "discover/kernels.hpp"
#include "doctest.h"

using namespace discover::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("parallel conv kernels agree with the serial reference") {
  std::mt19937_64 rng(1);
  const ConvGeometry cases[] = {
      {1, 3, 16, 16, 8, 5, 2, 2}, {2, 4, 9, 7, 5, 3, 1, 1}, {3, 6, 8, 8, 6, 1, 1, 0},
      {1, 2, 5, 6, 3, 4, 2, 1},   {2, 5, 12, 10, 4, 3, 2, 1},
  };
  for (const auto& g : cases) {
    const auto x = random_vec(g.input_size(), rng);
    const auto w = random_vec(g.weight_size(), rng);
    const auto b = random_vec(g.out_channels, rng);
    const auto dy = random_vec(g.output_size(), rng);

    std::vector<double> y_ref(g.output_size()), y_par(g.output_size());
    reference::conv2d_forward(g, x.data(), w.data(), b.data(), y_ref.data());
    parallel::conv2d_forward(g, x.data(), w.data(), b.data(), y_par.data());
    CHECK(max_abs_diff(y_ref, y_par) < 1e-12);

    std::vector<double> dx_ref(g.input_size(), 0.5), dx_par(g.input_size(), 0.5);
    reference::conv2d_backward_input(g, dy.data(), w.data(), dx_ref.data());
    parallel::conv2d_backward_input(g, dy.data(), w.data(), dx_par.data());
    CHECK(max_abs_diff(dx_ref, dx_par) < 1e-12);

    std::vector<double> dw_ref(g.weight_size(), 0.25), dw_par(g.weight_size(), 0.25);
    std::vector<double> db_ref(g.out_channels, 1.0), db_par(g.out_channels, 1.0);
    reference::conv2d_backward_weight(g, x.data(), dy.data(), dw_ref.data(), db_ref.data());
    parallel::conv2d_backward_weight(g, x.data(), dy.data(), dw_par.data(), db_par.data());
    CHECK(max_abs_diff(dw_ref, dw_par) < 1e-11);
    CHECK(max_abs_diff(db_ref, db_par) < 1e-11);
  }
}

TEST_CASE("parallel gemm agrees with the reference and accumulates") {
  std::mt19937_64 rng(2);
  const int m = 13, n = 17, k = 29;
  const auto a = random_vec(static_cast<std::size_t>(m) * k, rng);
  const auto b = random_vec(static_cast<std::size_t>(k) * n, rng);
  std::vector<double> c_ref(static_cast<std::size_t>(m) * n, 1.0), c_par = c_ref;
  reference::gemm(m, n, k, a.data(), b.data(), c_ref.data());
  parallel::gemm(m, n, k, a.data(), b.data(), c_par.data());
  CHECK(max_abs_diff(c_ref, c_par) < 1e-12);
  double expect = 1.0;
  for (int p = 0; p < k; ++p) expect += a[p] * b[static_cast<std::size_t>(p) * n];
  CHECK(c_ref[0] == doctest::Approx(expect).epsilon(1e-14));
}
