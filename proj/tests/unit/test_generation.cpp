// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include "discover/errors.hpp"
#include "discover/generation.hpp"
#include "discover/model.hpp"
#include "doctest.h"

using namespace discover;

TEST_CASE("linear schedule identities") {
  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  CHECK(s.steps() == 1000);
  CHECK(s.beta(1) == doctest::Approx(1e-4));
  CHECK(s.beta(1000) == doctest::Approx(0.02));
  CHECK(s.alpha_bar(0) == 1.0);
  for (int t = 1; t <= 1000; ++t) {
    CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    const double r = std::sqrt(s.alpha_bar(t));
    CHECK(std::abs(r * r + (1 - s.alpha_bar(t)) - 1.0) < 1e-12);
  }
  CHECK(s.alpha_bar(1) == doctest::Approx(1 - 1e-4));
  CHECK_THROWS_AS(s.alpha(0), ValidationError);
  CHECK_THROWS_AS(s.alpha(1001), ValidationError);
}

TEST_CASE("strided subsets end at 1 and respacing spans each stride") {
  CHECK(strided_timesteps(1000, 8) == std::vector<int>{1000, 857, 715, 572, 429, 286, 144, 1});
  CHECK(strided_timesteps(1000, 1) == std::vector<int>{1000});
  CHECK(strided_timesteps(10, 10) == std::vector<int>{10, 9, 8, 7, 6, 5, 4, 3, 2, 1});
  CHECK_THROWS_AS(strided_timesteps(1000, 1001), ValidationError);
  CHECK_THROWS_AS(strided_timesteps(1000, 0), ValidationError);

  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  const auto r = s.respaced(strided_timesteps(1000, 8));
  CHECK(r.steps() == 8);
  CHECK(r.model_timestep(8) == 1000);
  CHECK(r.model_timestep(1) == 1);
  CHECK(r.alpha_bar(8) == s.alpha_bar(1000));
  CHECK(r.alpha(2) == doctest::Approx(s.alpha_bar(144) / s.alpha_bar(1)).epsilon(1e-14));
  CHECK(r.alpha(1) == s.alpha(1));
  const auto full = s.respaced(strided_timesteps(1000, 1000));
  for (int t = 1; t <= 1000; t += 37) CHECK(full.alpha(t) == doctest::Approx(s.alpha(t)).epsilon(1e-12));
}

TEST_CASE("reverse update scalar case and linearity in eps") {
  const Tensor z({1}, 1.0);
  CHECK(reverse_update(z, Tensor({1}, 0.2), 0.99, 0.5)[0] == doctest::Approx(0.97661).epsilon(1e-5));
  CHECK(reverse_update(z, Tensor({1}, 0.0), 1.0, 0.5)[0] == 1.0);
  const double h = 1e-3;
  const double slope =
      (reverse_update(z, Tensor({1}, 0.2 + h), 0.99, 0.5)[0] - reverse_update(z, Tensor({1}, 0.2 - h), 0.99, 0.5)[0]) / (2 * h);
  CHECK(slope == doctest::Approx(-(1 / std::sqrt(0.99)) * (std::sqrt(0.01) / std::sqrt(0.5))).epsilon(1e-9));
}

TEST_CASE("fresh control module contributes exactly zero") {
  Model m(ModelConfig::tiny());
  std::mt19937_64 rng(1);
  const ag::Var z(Tensor::randn({2, 4, 8, 8}, rng));
  const ag::Var cond(Tensor::randn({2, 4, 8, 8}, rng));
  const std::vector<int> t{3, 700};
  ag::NoGradGuard ng;
  const auto res = m.control()(z, t, cond);
  CHECK(res[0].shape() == Shape{2, 4, 8, 8});
  CHECK(res[1].shape() == Shape{2, 8, 4, 4});
  CHECK(res[2].shape() == Shape{2, 8, 2, 2});
  CHECK(m.denoiser()(z, t, &res).value() == m.denoiser()(z, t, nullptr).value());
}

TEST_CASE("control encoder starts as a copy of the denoiser encoder") {
  Model m(ModelConfig::tiny());
  const auto& p = m.params();
  CHECK(p.get("control.enc.enc1.conv1.weight").value() == p.get("unet.enc.enc1.conv1.weight").value());
  CHECK(p.get("control.enc.temb2.bias").value() == p.get("unet.enc.temb2.bias").value());
}

TEST_CASE("sampling is seeded and validates steps") {
  Model m(ModelConfig::tiny());
  std::mt19937_64 rng(2);
  const DiffLatent cond{Tensor::randn({4, 8, 8}, rng), 8};
  SampleOptions o;
  o.steps = 4;
  o.seed = 7;
  const auto a = sample(m.denoiser(), &m.control(), cond, m.schedule(), o);
  const auto b = sample(m.denoiser(), &m.control(), cond, m.schedule(), o);
  CHECK(a.data.shape() == cond.data.shape());
  CHECK(a.data == b.data);
  o.seed = 8;
  CHECK_FALSE(sample(m.denoiser(), &m.control(), cond, m.schedule(), o).data == a.data);
  o.steps = 1001;
  CHECK_THROWS_AS(sample(m.denoiser(), &m.control(), cond, m.schedule(), o), ValidationError);
  DiffusionState st{cond.data, 0};
  CHECK_THROWS_AS(reverse_step(m.denoiser(), nullptr, st, cond, m.schedule()), ValidationError);
}

TEST_CASE("vae-lite shapes and output range") {
  Model m(ModelConfig::tiny());
  std::mt19937_64 rng(3);
  const ImageTensor x{Tensor::uniform({3, 64, 64}, rng, 0, 1)};
  const auto z = vae_encode(m.vae(), x, 8);
  CHECK(z.data.shape() == Shape{4, 8, 8});
  const auto back = vae_decode(m.vae(), z);
  CHECK(back.data.shape() == Shape{3, 64, 64});
  for (double v : back.data.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}
