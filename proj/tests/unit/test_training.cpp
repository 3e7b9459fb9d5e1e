// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <random>

#include "discover/errors.hpp"
#include "discover/fixtures.hpp"
#include "discover/training.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace discover;
namespace fs = std::filesystem;

namespace {

Tensor random_images(int batch, int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Tensor::uniform({batch, 3, size, size}, rng, 0.0, 1.0);
}

ImageDataset scene_dataset(int count) {
  std::vector<ImageTensor> images;
  SceneOptions so;
  so.width = so.height = 64;
  for (int i = 0; i < count; ++i) images.push_back(to_tensor(generate_scene(so, 100 + i, "s").image));
  return ImageDataset(std::move(images));
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("discover_train_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("loss components recombine into the total") {
  TrainConfig cfg;
  cfg.lambda_rate = 4;
  const ag::Var ry(Tensor({1}, 0.3)), rz(Tensor({1}, 0.05));
  std::mt19937_64 rng(2);
  const Tensor eps = Tensor::randn({2, 4, 2, 2}, rng);
  const ag::Var pred(Tensor::randn({2, 4, 2, 2}, rng));
  const Tensor zc = Tensor::randn({2, 4, 2, 2}, rng);
  const ag::Var zc_hat(Tensor::randn({2, 4, 2, 2}, rng));
  const Loss l = combine_loss(ry, rz, pred, eps, zc_hat, zc, cfg);
  const auto& p = l.parts;
  CHECK(p.total == doctest::Approx(4 * (p.rate_y + p.rate_z) + 2 * p.diff_eps + p.latent_mse).epsilon(1e-12));
  CHECK(p.bpp() == doctest::Approx(0.35));

  cfg.lambda_rate = 0;
  const Loss zero_rate = combine_loss(ry, rz, pred, eps, zc_hat, zc, cfg);
  CHECK(zero_rate.parts.total == doctest::Approx(2 * p.diff_eps + p.latent_mse).epsilon(1e-12));

  const Loss perfect = combine_loss(ry, rz, pred, eps, ag::Var(zc), zc, cfg);
  CHECK(perfect.parts.latent_mse == 0.0);
}

TEST_CASE("stage losses on the tiny model are finite and nonnegative") {
  Model m(ModelConfig::tiny());
  TrainConfig cfg;
  const Tensor x = random_images(2, 64, 1);
  std::mt19937_64 rng(5);
  for (const Loss& l : {loss_stage1(m, x, cfg, rng), loss_stage2(m, x, cfg, rng)}) {
    for (double v : {l.parts.rate_y, l.parts.rate_z, l.parts.diff_eps, l.parts.latent_mse, l.parts.total}) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0);
    }
  }
}

TEST_CASE("total-loss gradients match central differences") {
  ModelConfig mc = ModelConfig::tiny();
  mc.init_seed = 11;
  Model m(mc);
  set_stage_trainable(m, Stage::kStage1);
  // Nonzero zero-initialised tensors so gradients reach every control path.
  std::mt19937_64 init(3);
  testing::randomize_zero_tensors(m.params(), "unet.", init);
  testing::randomize_zero_tensors(m.params(), "control.", init);
  TrainConfig cfg;
  const Tensor x = random_images(2, 64, 4);
  std::mt19937_64 rng(9);
  const StepNoise noise = draw_step_noise(m, x.shape(), cfg, Stage::kStage1, rng);
  auto loss = [&] { return codec_loss(m, x, cfg, noise).total; };

  int probed = 0;
  double worst = 0.0;
  std::uint64_t seed = 20;
  for (const char* name : {"codec.g_a.0.weight", "codec.h_a.2.weight", "codec.h_s.out.weight", "codec.global.out.weight",
                           "codec.g_s.in.weight", "codec.g_s.out.bias", "codec.prior.density", "control.hint0.weight",
                           "control.zero0.weight", "control.zero2.weight"}) {
    const auto r = testing::check_gradient(loss, m.params().get(name), 3, seed++);
    INFO(name << " rel " << r.max_rel_error);
    CHECK(r.max_rel_error <= 1e-3);
    CHECK(r.max_abs_grad > 0.0);
    worst = std::max(worst, r.max_rel_error);
    probed += r.probes;
  }
  CHECK(probed >= 20);
  MESSAGE("worst relative error " << worst);
}

TEST_CASE("an all-ones mask reproduces stage 1 and an empty mask kills the y rate") {
  Model m(ModelConfig::tiny());
  TrainConfig cfg;
  const Tensor x = random_images(2, 64, 6);
  std::mt19937_64 rng(8);
  StepNoise noise = draw_step_noise(m, x.shape(), cfg, Stage::kStage1, rng);
  const Loss plain = codec_loss(m, x, cfg, noise);
  noise.mask = Tensor({2, 1, 4, 4}, 1.0);
  const Loss ones = codec_loss(m, x, cfg, noise);
  CHECK(ones.parts.total == plain.parts.total);
  CHECK(ones.parts.rate_y == plain.parts.rate_y);
  noise.mask = Tensor({2, 1, 4, 4}, 0.0);
  const Loss none = codec_loss(m, x, cfg, noise);
  CHECK(none.parts.rate_y == 0.0);
  CHECK(none.parts.rate_z == plain.parts.rate_z);
}

TEST_CASE("stage 2 masks cover the configured fraction range") {
  Model m(ModelConfig::tiny());
  TrainConfig cfg;
  std::mt19937_64 rng(1);
  const StepNoise n = draw_step_noise(m, {16, 3, 128, 128}, cfg, Stage::kStage2, rng);
  REQUIRE(n.mask);
  CHECK(n.mask->shape() == Shape{16, 1, 8, 8});
  for (int b = 0; b < 16; ++b) {
    int kept = 0;
    for (int i = 0; i < 64; ++i) kept += (*n.mask)[b * 64 + i] != 0.0;
    CHECK(kept >= 32);
  }
  CHECK_FALSE(draw_step_noise(m, {1, 3, 64, 64}, cfg, Stage::kStage1, rng).mask);
}

TEST_CASE("noising matches the forward marginal") {
  const auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  const Tensor zc({1, 1, 1, 2}, std::vector<double>{0.8, -1.5});
  std::mt19937_64 rng(3);
  for (int t : {1, 250, 700}) {
    const int draws = 10000;
    double sum[2] = {0, 0}, sq[2] = {0, 0};
    for (int i = 0; i < draws; ++i) {
      const Tensor zt = add_noise(zc, Tensor::randn(zc.shape(), rng), {t}, s);
      for (int k = 0; k < 2; ++k) {
        sum[k] += zt[k];
        sq[k] += zt[k] * zt[k];
      }
    }
    for (int k = 0; k < 2; ++k) {
      const double mean = sum[k] / draws;
      const double var = sq[k] / draws - mean * mean;
      CHECK(std::abs(mean - std::sqrt(s.alpha_bar(t)) * zc[k]) < 0.1);
      CHECK(std::abs(var - (1 - s.alpha_bar(t))) < 0.1);
    }
  }
}

TEST_CASE("stage trainability follows the stage") {
  Model m(ModelConfig::tiny());
  auto trainable = [&](Stage st) {
    set_stage_trainable(m, st);
    return m.params().trainable_names();
  };
  for (const auto& n : trainable(Stage::kVae)) CHECK(n.rfind("vae.", 0) == 0);
  for (const auto& n : trainable(Stage::kDenoiser)) CHECK(n.rfind("unet.", 0) == 0);
  for (const auto& n : trainable(Stage::kStage1)) {
    CHECK((n.rfind("codec.", 0) == 0 || n.rfind("control.", 0) == 0));
  }
  for (const auto& n : trainable(Stage::kStage2)) {
    CHECK((n.rfind("codec.g_s.", 0) == 0 || n.rfind("codec.global.", 0) == 0 || n.rfind("control.", 0) == 0));
  }
  CHECK(parse_stage("stage2") == Stage::kStage2);
  CHECK_THROWS_AS(parse_stage("stage3"), ValidationError);
}

TEST_CASE("stage 2 leaves the encoder and hyper path untouched") {
  Model m(ModelConfig::tiny());
  const ImageDataset data = scene_dataset(4);
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.iterations = 5;
  cfg.learning_rate = 1e-3;
  TrainOptions opt;
  opt.log_every = 0;
  // A few denoiser steps so the zero-initialised U-Net output passes gradient to control.
  opt.out_dir = scratch("stage2_pretrain");
  train(m, data, cfg, Stage::kDenoiser, opt);
  const Archive before = m.to_archive();
  opt.out_dir = scratch("stage2");
  train(m, data, cfg, Stage::kStage2, opt);
  for (const auto& [name, t] : before.arrays) {
    const bool frozen = name.rfind("codec.g_a.", 0) == 0 || name.rfind("codec.h_a.", 0) == 0 ||
                        name.rfind("codec.h_s.", 0) == 0 || name.rfind("codec.prior.", 0) == 0 ||
                        name.rfind("vae.", 0) == 0 || name.rfind("unet.", 0) == 0;
    if (frozen) {
      CHECK_MESSAGE(m.params().get(name).value() == t, name);
    }
  }
  CHECK_FALSE(m.params().get("codec.g_s.out.weight").value() == before.array("codec.g_s.out.weight"));
  CHECK_FALSE(m.params().get("control.zero0.weight").value() == before.array("control.zero0.weight"));
}

TEST_CASE("resume reproduces the uninterrupted run") {
  const ImageDataset data = scene_dataset(4);
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.iterations = 4;
  cfg.learning_rate = 1e-3;
  cfg.seed = 77;
  TrainOptions opt;
  opt.log_every = 0;

  Model straight(ModelConfig::tiny());
  opt.out_dir = scratch("straight");
  const auto full = train(straight, data, cfg, Stage::kStage1, opt);

  Model interrupted(ModelConfig::tiny());
  opt.out_dir = scratch("resumed");
  opt.stop_after = 2;
  const auto head = train(interrupted, data, cfg, Stage::kStage1, opt);
  CHECK(head.rows.size() == 2);

  Model resumed(ModelConfig::tiny());
  opt.stop_after = 0;
  opt.resume = true;
  const auto tail = train(resumed, data, cfg, Stage::kStage1, opt);
  REQUIRE(tail.rows.size() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(tail.rows[i].iteration == full.rows[i + 2].iteration);
    CHECK(tail.rows[i].loss.total == full.rows[i + 2].loss.total);
  }
  for (const auto& name : straight.params().names()) {
    CHECK_MESSAGE(resumed.params().get(name).value() == straight.params().get(name).value(), name);
  }
}

TEST_CASE("training rejects bad inputs") {
  Model m(ModelConfig::tiny());
  TrainConfig cfg;
  cfg.crop = 60;
  CHECK_THROWS_AS(cfg.validate(m.config()), ValidationError);
  cfg.crop = 64;
  cfg.mask_hi = 1.5;
  CHECK_THROWS_AS(cfg.validate(m.config()), ValidationError);
  cfg.mask_hi = 0.5;
  cfg.lambda_rate = -1;
  CHECK_THROWS_AS(cfg.validate(m.config()), ValidationError);
  cfg.lambda_rate = 8;
  CHECK(TrainConfig::from_json(cfg.to_json()).lambda_rate == 8);
  const auto empty = scratch("empty");
  fs::create_directories(empty);
  CHECK_THROWS_AS(ImageDataset::from_directory(empty, 64), ValidationError);
  TrainOptions opt;
  opt.out_dir = scratch("none");
  CHECK_THROWS_AS(train(m, ImageDataset(std::vector<ImageTensor>{}), TrainConfig{}, Stage::kStage1, opt), ValidationError);
}
