// SPDX-License-Identifier: Apache-2.0
#include <random>

#include "discover/container.hpp"
#include "discover/errors.hpp"
#include "doctest.h"

using namespace discover;

namespace {

struct Fixture {
  ContainerHeader header;
  LatentGrid y;
  HyperLatent z;
  GroupTable table;
  EntropyParams params;
  U32Table hyper;

  Fixture() {
    ElementSet es{"two", 64, 64, {}};
    es.elements.push_back({0, {0, 0, 16, 32}, 0.9});
    es.elements.push_back({1, {40, 40, 64, 64}, 0.7});
    table = build_group_table(es, 16);
    header.width = 64;
    header.height = 64;
    header.model_id.fill(0xAB);
    std::mt19937_64 rng(3);
    y.data = Tensor({5, 4, 4});
    params = {Tensor::randn({5, 4, 4}, rng, 2.0), Tensor::uniform({5, 4, 4}, rng, 0.1, 4.0)};
    for (std::size_t i = 0; i < y.data.size(); ++i) {
      y.data[i] = std::nearbyint(std::normal_distribution<double>(params.mu[i], params.sigma[i])(rng));
    }
    y.quantized = true;
    z.data = Tensor({2, 1, 1}, std::vector<double>{-3.0, 4.0});
    z.hyper_factor = 4;
    hyper.rows = 2;
    hyper.cols = coding::kCdfLength;
    for (double mu : {0.0, 2.0}) {
      const auto t = coding::gaussian_cdf_table(mu, 3.0);
      hyper.data.insert(hyper.data.end(), t.begin(), t.end());
    }
  }

  Bytes encode(const std::set<std::uint16_t>& keep) const {
    return serialize_container(encode_container(header, y, z, table, params, hyper, keep));
  }
};

LatentGrid decode(const Bytes& b, const EntropyParams& p, const std::set<std::uint16_t>* keep = nullptr) {
  return decode_latent(parse_container(b), p, keep);
}

}  // namespace

TEST_CASE("header layout") {
  Fixture f;
  const Bytes b = f.encode({0, 1, 2});
  CHECK(std::string(b.begin(), b.begin() + 4) == "DSCV");
  CHECK(b[4] == 1);
  CHECK(b[5] == 64);
  CHECK(b[13] == 0);
  CHECK(b[15] == 16);
  CHECK(b[16] == 8);
  CHECK(b[17] == 0xAB);
  CHECK(b[33] == 3);
  // group 1 entry: id 1, label 0, bbox 0,0,16,32
  const std::size_t e1 = kHeaderSize + kGroupEntrySize;
  CHECK(b[e1] == 1);
  CHECK(b[e1 + 2] == 0);
  CHECK(b[e1 + 8] == 16);
  CHECK(b[e1 + 10] == 32);
  CHECK(b[kHeaderSize + 2] == 0xFF);
}

TEST_CASE("full roundtrip and hyper latent") {
  Fixture f;
  const Bytes b = f.encode({0, 1, 2});
  const auto c = parse_container(b);
  CHECK(decode_latent(c, f.params).data == f.y.data);
  CHECK(decode_hyper_latent(c, f.hyper, 4).data == f.z.data);
  CHECK(b == f.encode({0, 1, 2}));
}

TEST_CASE("empty keep gives a hyper-only stream") {
  Fixture f;
  const Bytes b = f.encode({});
  const auto c = parse_container(b);
  CHECK(c.y_region.empty());
  CHECK(c.entries.size() == 3);
  const auto y = decode_latent(c, f.params);
  for (double v : y.data.values()) CHECK(v == 0.0);
  CHECK(decode_hyper_latent(c, f.hyper, 4).data == f.z.data);
}

TEST_CASE("extraction equals decoding with the same keep set for every subset") {
  Fixture f;
  const Bytes full = f.encode({0, 1, 2});
  for (int mask = 0; mask < 8; ++mask) {
    std::set<std::uint16_t> keep;
    for (int g = 0; g < 3; ++g)
      if (mask & (1 << g)) keep.insert(static_cast<std::uint16_t>(g));
    const Bytes part = extract_partial(full, keep);
    CHECK(decode(part, f.params).data == decode(full, f.params, &keep).data);
    CHECK(decode(part, f.params).data == select_groups(f.y, f.table, keep).data);
    CHECK(extract_partial(part, keep) == part);
    CHECK(part.size() <= full.size());
    CHECK(part == f.encode(keep));
  }
}

TEST_CASE("background-only extraction size") {
  Fixture f;
  const Bytes full = f.encode({0, 1, 2});
  const auto c = parse_container(full);
  const Bytes bg = extract_partial(full, {0});
  CHECK(bg.size() == kHeaderSize + 3 * kGroupEntrySize + 4 + c.z_payload.size() + c.payload(0).size());
}

TEST_CASE("missing groups are reported") {
  Fixture f;
  const Bytes part = f.encode({1});
  CHECK_THROWS_AS(extract_partial(part, {0, 1}), ValidationError);
  const std::set<std::uint16_t> want{2};
  CHECK_THROWS_AS(decode(part, f.params, &want), ValidationError);
  CHECK_THROWS_AS(f.encode({7}), ValidationError);
}

TEST_CASE("corrupting one group leaves the others intact") {
  Fixture f;
  Bytes b = f.encode({0, 1, 2});
  const auto c = parse_container(b);
  const std::size_t y_start = b.size() - c.y_region.size();
  const auto& e2 = c.entries[2];
  for (std::uint32_t i = 0; i < e2.payload_len; ++i) b[y_start + e2.payload_offset + i] ^= 0x5A;
  const auto damaged = parse_container(b);
  const std::set<std::uint16_t> others{0, 1};
  CHECK(decode_latent(damaged, f.params, &others).data == select_groups(f.y, f.table, others).data);
}

TEST_CASE("malformed containers are rejected") {
  Fixture f;
  Bytes b = f.encode({0, 1, 2});
  Bytes bad = b;
  bad[0] = 'X';
  CHECK_THROWS_AS(parse_container(bad), ParseError);
  bad = b;
  bad[4] = 2;
  CHECK_THROWS_AS(parse_container(bad), ParseError);
  bad.assign(b.begin(), b.begin() + 40);
  CHECK_THROWS_AS(parse_container(bad), ParseError);
  bad = b;
  bad.resize(bad.size() - 1);
  CHECK_THROWS_AS(parse_container(bad), ParseError);
}

TEST_CASE("bits per pixel") {
  CHECK(bpp_from_bits(4096, 64 * 64) == 1.0);
  CHECK(bpp_from_bytes(512, 64 * 64) == 1.0);
  CHECK_THROWS_AS(bpp_from_bytes(10, 0), ValidationError);
  CHECK(aggregate_bpp({{100, 100}, {300, 900}}) == doctest::Approx(3200.0 / 1000.0));
}
