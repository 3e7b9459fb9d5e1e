// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include "discover/coder_c_api.h"
#include "discover/conformance.hpp"
#include "discover/errors.hpp"
#include "discover/rans.hpp"
#include "doctest.h"

using namespace discover;
using namespace discover::coding;

namespace {

SymbolPlane random_plane(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> mu(-30, 30), ls(std::log(0.04), std::log(60.0));
  SymbolPlane p;
  for (int i = 0; i < n; ++i) {
    GaussianParam g{mu(rng), std::exp(ls(rng))};
    p.params.push_back(g);
    p.symbols.push_back(clamp_symbol(static_cast<int>(std::lround(std::normal_distribution<double>(g.mu, g.sigma)(rng)))));
  }
  return p;
}

}  // namespace

TEST_CASE("empty plane encodes to the initial state") {
  const Bytes b = arith_encode({});
  CHECK(b == Bytes{0x00, 0x00, 0x80, 0x00});
  CHECK(arith_decode(b, {}).empty());
}

TEST_CASE("gaussian tables are strictly increasing with 16-bit total") {
  for (double sigma : {0.04, 0.5, 3.0, 200.0}) {
    for (double mu : {-300.0, -2.3, 0.0, 0.5, 127.9, 400.0}) {
      const auto t = gaussian_cdf_table(mu, sigma);
      CHECK_NOTHROW(validate_cdf(t));
      CHECK(t.front() == 0);
      CHECK(t.back() == 65536);
    }
  }
}

TEST_CASE("validate_cdf rejects flat bins") {
  auto t = gaussian_cdf_table(0, 1);
  t[100] = t[99];
  CHECK_THROWS_AS(validate_cdf(t), ContractError);
}

TEST_CASE("roundtrip over random planes") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const auto plane = random_plane(rng, static_cast<int>(rng() % 200));
    const auto bytes = arith_encode(plane);
    CHECK(arith_decode(bytes, plane.params) == plane.symbols);
  }
}

TEST_CASE("symbols outside the alphabet are clamped and counted") {
  SymbolPlane p{{-500, 0, 900}, {{0, 1}, {0, 1}, {0, 1}}};
  EncodeStats st;
  const auto b = arith_encode(p, &st);
  CHECK(st.clamped_symbols == 2);
  CHECK(arith_decode(b, p.params) == std::vector<std::int32_t>{-127, 0, 128});
}

TEST_CASE("half-probability construction stays within the entropy bound plus overhead") {
  CdfTable t{};
  // Symbols 0 and 1 share all spare mass; every other bin has width 1.
  const std::uint32_t half = (kTotalFrequency - (kAlphabetSize - 2)) / 2;
  std::uint32_t acc = 0;
  for (int i = 0; i < kAlphabetSize; ++i) {
    t[i] = acc;
    const int sym = kAlphabetMin + i;
    acc += (sym == 0 || sym == 1) ? half : 1;
  }
  t[kAlphabetSize] = acc;
  REQUIRE(acc == kTotalFrequency);
  std::vector<std::int32_t> symbols;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) symbols.push_back(static_cast<std::int32_t>(rng() & 1));
  const std::vector<std::uint32_t> idx(symbols.size(), 0);
  const auto bytes = encode_with_tables(symbols, t, idx);
  CHECK(bytes.size() <= 125 + 32);
  CHECK(decode_with_tables(bytes, symbols.size(), t, idx) == symbols);
}

TEST_CASE("table coder matches the gaussian coder byte for byte") {
  std::mt19937_64 rng(5);
  const auto plane = random_plane(rng, 150);
  std::vector<std::uint32_t> tables;
  for (const auto& g : plane.params) {
    const auto t = gaussian_cdf_table(g.mu, g.sigma);
    tables.insert(tables.end(), t.begin(), t.end());
  }
  CHECK(encode_with_tables(plane.symbols, tables, {}) == arith_encode(plane));
}

TEST_CASE("truncated payload reports a byte position") {
  std::mt19937_64 rng(9);
  auto plane = random_plane(rng, 400);
  for (auto& g : plane.params) g.sigma = 20.0;
  auto bytes = arith_encode(plane);
  REQUIRE(bytes.size() > 10);
  bytes.resize(bytes.size() - 3);
  try {
    arith_decode(bytes, plane.params);
    FAIL("expected DecodeError");
  } catch (const DecodeError& e) {
    CHECK(e.byte_position() <= bytes.size());
  }
  CHECK_THROWS_AS(arith_decode(Bytes{1, 2}, plane.params), DecodeError);
}

TEST_CASE("symbol cost matches the closed-form discretized gaussian") {
  const double p = 0.5 * (std::erfc(-0.5 / std::sqrt(2.0)) - std::erfc(0.5 / std::sqrt(2.0)));
  CHECK(gaussian_symbol_bits(0, 0, 1) == doctest::Approx(-std::log2(p)).epsilon(1e-12));
  const double q = 0.5 * (std::erfc(-(2.5 - 1.0) / (3.0 * std::sqrt(2.0))) - std::erfc(-(1.5 - 1.0) / (3.0 * std::sqrt(2.0))));
  CHECK(gaussian_symbol_bits(2, 1, 3) == doctest::Approx(-std::log2(q)).epsilon(1e-12));
  CHECK(gaussian_symbol_bits(100, 0, 0.04) == 24.0);
}

TEST_CASE("c api round trip and buffer sizing") {
  const std::vector<std::int32_t> symbols{0, 3, -2, 7};
  std::vector<std::uint32_t> cdf(DSCV_CDF_LENGTH);
  REQUIRE(dscv_gaussian_cdf(1.0, 2.0, cdf.data()) == DSCV_OK);
  const std::vector<std::uint32_t> idx(symbols.size(), 0);
  std::size_t len = 0;
  CHECK(dscv_encode(symbols.data(), symbols.size(), cdf.data(), 1, idx.data(), nullptr, 0, &len) == DSCV_BUFFER_TOO_SMALL);
  std::vector<std::uint8_t> out(len);
  REQUIRE(dscv_encode(symbols.data(), symbols.size(), cdf.data(), 1, idx.data(), out.data(), out.size(), &len) == DSCV_OK);
  std::vector<std::int32_t> back(symbols.size());
  REQUIRE(dscv_decode(out.data(), len, cdf.data(), 1, idx.data(), back.size(), back.data()) == DSCV_OK);
  CHECK(back == symbols);
  CHECK(dscv_decode(out.data(), 2, cdf.data(), 1, idx.data(), back.size(), back.data()) == DSCV_DECODE_FAILED);
  cdf[5] = cdf[4];
  CHECK(dscv_encode(symbols.data(), symbols.size(), cdf.data(), 1, idx.data(), out.data(), out.size(), &len) == DSCV_INVALID_CDF);
}

TEST_CASE("conformance corpus serializes and replays") {
  const auto cases = make_conformance_corpus(50, 1);
  const auto parsed = parse_corpus(serialize_corpus(cases));
  REQUIRE(parsed.size() == cases.size());
  CHECK(parsed[0].symbols.empty());
  CHECK(parsed[0].payload.size() == 4);
  for (const auto& c : parsed) {
    CHECK(encode_with_tables(c.symbols, c.tables, c.indexes) == c.payload);
    CHECK(decode_with_tables(c.payload, c.symbols.size(), c.tables, c.indexes) == c.symbols);
  }
}
