// SPDX-License-Identifier: Apache-2.0
#include <random>

#include "discover/autograd.hpp"
#include "discover/entropy.hpp"
#include "discover/nn.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace discover;
using discover::testing::check_gradient;

namespace {

// sum(out * r) with a fixed random r, so every output element matters.
ag::Var project(const ag::Var& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ag::sum(ag::mul_const(out, Tensor::randn(out.shape(), rng)));
}

ag::Var param(Shape s, std::mt19937_64& rng, double scale = 1.0) { return ag::Var(Tensor::randn(std::move(s), rng, scale), true); }

}  // namespace

TEST_CASE("elementwise ops") {
  std::mt19937_64 rng(1);
  auto a = param({2, 3, 4, 5}, rng), b = param({2, 3, 4, 5}, rng);
  const std::function<ag::Var()> f = [&] {
    ag::Var h = ag::add(ag::mul(ag::silu(a), ag::tanh(b)), ag::sub(ag::softplus(a), ag::sigmoid(b)));
    h = ag::add(h, ag::scale(ag::exp(ag::scale(a, 0.3)), 0.7));
    h = ag::add_scalar(ag::add(h, ag::square(b)), 1.5);
    return ag::add(project(h, 7), ag::add(ag::mean(a), ag::mse(a, b)));
  };
  CHECK(check_gradient(f, a, 25, 1).max_rel_error < 1e-6);
  CHECK(check_gradient(f, b, 25, 2).max_rel_error < 1e-6);
}

TEST_CASE("lower_bound has zero gradient below the bound") {
  ag::Var x(Tensor({4}, std::vector<double>{-1.0, 0.01, 0.5, 2.0}), true);
  const ag::Var y = ag::lower_bound(x, 0.04);
  CHECK(y.value()[0] == 0.04);
  CHECK(y.value()[1] == 0.04);
  CHECK(y.value()[2] == 0.5);
  ag::sum(y).backward();
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 0.0);
  CHECK(x.grad()[2] == 1.0);
}

TEST_CASE("layout ops") {
  std::mt19937_64 rng(2);
  auto a = param({2, 3, 4, 4}, rng), b = param({2, 2, 4, 4}, rng), v = param({2, 5}, rng);
  const std::function<ag::Var()> f = [&] {
    ag::Var h = ag::concat_channels(a, b);
    h = ag::add_channel_bias(h, v);
    h = ag::upsample2x(ag::slice_channels(h, 1, 4));
    return project(h, 3);
  };
  CHECK(check_gradient(f, a, 20, 1).max_rel_error < 1e-6);
  CHECK(check_gradient(f, b, 20, 2).max_rel_error < 1e-6);
  CHECK(check_gradient(f, v, 10, 3).max_rel_error < 1e-6);
}

TEST_CASE("convolution, transposed convolution and linear layers") {
  std::mt19937_64 rng(3);
  auto x = param({2, 3, 8, 8}, rng);
  auto w = param({4, 3, 3, 3}, rng, 0.3), bias = param({4}, rng);
  auto wt = param({4, 2, 4, 4}, rng, 0.3), bt = param({2}, rng);
  auto wl = param({3, 6}, rng), bl = param({3}, rng), xl = param({2, 6}, rng);
  const std::function<ag::Var()> f = [&] {
    const ag::Var h = ag::conv_transpose2d(ag::silu(ag::conv2d(x, w, bias, 2, 1)), wt, bt, 2, 1);
    return ag::add(project(h, 5), project(ag::linear(xl, wl, bl), 6));
  };
  for (auto* p : {&x, &w, &bias, &wt, &bt, &wl, &bl, &xl}) CHECK(check_gradient(f, *p, 15, 9).max_rel_error < 1e-6);
  CHECK(ag::conv_transpose2d(x, ag::Var(Tensor({3, 5, 4, 4})), ag::Var(Tensor({5})), 2, 1).shape() == Shape{2, 5, 16, 16});
}

TEST_CASE("discretized gaussian rate is differentiable in y, mu and sigma") {
  std::mt19937_64 rng(4);
  auto y = param({1, 2, 3, 3}, rng, 2.0), mu = param({1, 2, 3, 3}, rng);
  ag::Var sigma(Tensor::uniform({1, 2, 3, 3}, rng, 0.3, 3.0), true);
  const std::function<ag::Var()> f = [&] { return ag::sum(entropy::gaussian_bits(y, mu, sigma)); };
  CHECK(check_gradient(f, y, 15, 1).max_rel_error < 1e-5);
  CHECK(check_gradient(f, mu, 15, 2).max_rel_error < 1e-5);
  CHECK(check_gradient(f, sigma, 15, 3).max_rel_error < 1e-5);
}

TEST_CASE("factorized prior bits are differentiable and its tables are valid") {
  std::mt19937_64 rng(5);
  nn::ParameterStore store;
  entropy::FactorizedPrior prior(store, "prior", 3, rng);
  auto z = param({1, 3, 2, 2}, rng, 2.0);
  auto density = store.get("prior.density");
  const std::function<ag::Var()> f = [&] { return ag::sum(prior.bits(z)); };
  CHECK(check_gradient(f, z, 12, 1).max_rel_error < 1e-5);
  CHECK(check_gradient(f, density, 30, 2).max_rel_error < 1e-5);
  const auto t = prior.cdf_tables();
  CHECK(t.rows == 3);
  CHECK(t.cols == 257);
  CHECK(prior.cdf(0, -1e3) < 1e-6);
  CHECK(prior.cdf(0, 1e3) > 1 - 1e-6);
}

TEST_CASE("no-grad mode records no graph") {
  std::mt19937_64 rng(6);
  auto a = param({3}, rng);
  ag::NoGradGuard guard;
  const ag::Var y = ag::square(a);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->inputs.empty());
}
