// SPDX-License-Identifier: Apache-2.0
#include <random>

#include "discover/codec.hpp"
#include "discover/errors.hpp"
#include "discover/rans.hpp"
#include "doctest.h"

using namespace discover;

namespace {

struct TinyCodec {
  nn::ParameterStore store;
  Codec codec;
  TinyCodec() {
    std::mt19937_64 rng(0);
    codec = Codec(store, ModelConfig::tiny(), rng);
  }
};

ImageTensor random_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return {Tensor::uniform({3, h, w}, rng, 0.0, 1.0)};
}

}  // namespace

TEST_CASE("analysis shapes and determinism") {
  TinyCodec t;
  const auto y = encode_analysis(t.codec, random_image(64, 64, 1));
  CHECK(y.data.shape() == Shape{4, 4, 4});
  CHECK(y.pad_right == 0);
  CHECK(y.data == encode_analysis(t.codec, random_image(64, 64, 1)).data);
  const auto zero = encode_analysis(t.codec, {Tensor({3, 64, 64})});
  CHECK(zero.data.all_finite());
}

TEST_CASE("odd sizes are reflect-padded and recorded") {
  TinyCodec t;
  const auto y = encode_analysis(t.codec, random_image(50, 70, 2));
  CHECK(y.pad_bottom == 14);
  CHECK(y.pad_right == 58);
  CHECK(y.data.shape() == Shape{4, 4, 8});
  int pr = 0, pb = 0;
  const Tensor src({1, 2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  const Tensor p = reflect_pad(src, 4, pr, pb);
  CHECK(p.shape() == Shape{1, 4, 4});
  CHECK(p[3] == 2.0);   // row 0: 1 2 3 | 2
  CHECK(p[8] == 1.0);   // row 2 reflects row 0
  CHECK(crop(p, 2, 3) == src);
}

TEST_CASE("hyper path shapes and sigma clamp") {
  TinyCodec t;
  const auto y = encode_analysis(t.codec, random_image(64, 64, 3));
  const auto z = hyper_encode(t.codec, y);
  CHECK(z.data.shape() == Shape{2, 1, 1});
  for (double v : z.data.values()) CHECK(v == std::nearbyint(v));
  auto params = hyper_decode(t.codec, z);
  CHECK(params.mu.shape() == y.data.shape());
  CHECK(params.sigma.shape() == y.data.shape());

  ag::Var bias = t.store.get("codec.h_s.out.bias");
  for (int c = 4; c < 8; ++c) bias.mutable_value()[c] = -60.0;
  params = hyper_decode(t.codec, z);
  for (double s : params.sigma.values()) CHECK(s == entropy::kSigmaMin);

  LatentGrid bad = y;
  bad.data = Tensor({4, 3, 4});
  CHECK_THROWS_AS(hyper_encode(t.codec, bad), ContractError);
  CHECK_THROWS_AS(hyper_decode(t.codec, HyperLatent{Tensor({5, 1, 1}), 4}), ContractError);
}

TEST_CASE("quantization rules") {
  LatentGrid y;
  y.data = Tensor({1, 1, 4}, std::vector<double>{1.4, -0.5, 0.5, 2.5});
  const auto r = quantize(y, QuantMode::kRound);
  CHECK(r.quantized);
  CHECK(r.data[0] == 1.0);
  CHECK(r.data[1] == 0.0);
  CHECK(r.data[2] == 0.0);
  CHECK(r.data[3] == 2.0);
  std::mt19937_64 rng(4);
  y.data = Tensor::randn({2, 8, 8}, rng, 3.0);
  const auto n = quantize(y, QuantMode::kNoise, &rng);
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    CHECK(n.data[i] - y.data[i] >= -0.5);
    CHECK(n.data[i] - y.data[i] < 0.5);
  }
}

TEST_CASE("rate is nonnegative, additive and floored") {
  LatentGrid y;
  y.data = Tensor({1, 1, 2}, std::vector<double>{0.0, 3.0});
  EntropyParams p{Tensor({1, 1, 2}, std::vector<double>{0.0, -1.0}), Tensor({1, 1, 2}, std::vector<double>{1.0, 2.0})};
  const double one = rate_bits(y, p);
  CHECK(one > 0.0);
  CHECK(one == doctest::Approx(coding::gaussian_symbol_bits(0, 0, 1) + coding::gaussian_symbol_bits(3, -1, 2)));

  LatentGrid y2;
  y2.data = Tensor({1, 1, 4}, std::vector<double>{0.0, 3.0, 0.0, 3.0});
  EntropyParams p2{Tensor({1, 1, 4}, std::vector<double>{0.0, -1.0, 0.0, -1.0}),
                   Tensor({1, 1, 4}, std::vector<double>{1.0, 2.0, 1.0, 2.0})};
  CHECK(rate_bits(y2, p2) == doctest::Approx(2 * one));

  LatentGrid far;
  far.data = Tensor({1, 1, 1}, 90.0);
  CHECK(rate_bits(far, {Tensor({1, 1, 1}), Tensor({1, 1, 1}, 0.04)}) == 24.0);
  CHECK_THROWS_AS(rate_bits(y, p2), ContractError);
}

TEST_CASE("synthesis needs the hyper latent and maps to the diffusion latent") {
  TinyCodec t;
  const auto y = quantize(encode_analysis(t.codec, random_image(64, 64, 5)), QuantMode::kRound);
  const auto z = hyper_encode(t.codec, y);
  const auto zc = decode_synthesis(t.codec, y, z);
  CHECK(zc.data.shape() == Shape{4, 8, 8});
  LatentGrid zero = y;
  zero.data.fill(0.0);
  CHECK(decode_synthesis(t.codec, zero, z).data.all_finite());
  CHECK(decode_synthesis(t.codec, y, z).data == zc.data);
  CHECK_THROWS_AS(decode_synthesis(t.codec, y, std::nullopt), ContractError);
  CHECK(rate_bits_hyper(t.codec, z) >= 0.0);
}
