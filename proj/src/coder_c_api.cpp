// SPDX-License-Identifier: Apache-2.0
#include "discover/coder_c_api.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "discover/conformance.hpp"
#include "discover/errors.hpp"
#include "discover/rans.hpp"

using namespace discover;

extern "C" int dscv_encode(const int32_t* symbols, size_t count, const uint32_t* cdfs, size_t num_tables,
                           const uint32_t* indexes, uint8_t* out, size_t out_capacity, size_t* out_len) {
  if ((count > 0 && !symbols) || !cdfs || num_tables == 0 || !out_len) return DSCV_INVALID_ARGUMENT;
  if (!indexes && num_tables < count) return DSCV_INVALID_ARGUMENT;
  try {
    const std::span<const std::uint32_t> idx = indexes ? std::span(indexes, count) : std::span<const std::uint32_t>{};
    const Bytes b = coding::encode_with_tables(std::span(symbols, count), std::span(cdfs, num_tables * DSCV_CDF_LENGTH), idx);
    *out_len = b.size();
    if (b.size() > out_capacity) return DSCV_BUFFER_TOO_SMALL;
    if (!b.empty()) std::memcpy(out, b.data(), b.size());
    return DSCV_OK;
  } catch (const ContractError&) {
    return DSCV_INVALID_CDF;
  } catch (const std::exception&) {
    return DSCV_INVALID_ARGUMENT;
  }
}

extern "C" int dscv_decode(const uint8_t* data, size_t len, const uint32_t* cdfs, size_t num_tables,
                           const uint32_t* indexes, size_t count, int32_t* out_symbols) {
  if (!data || !cdfs || num_tables == 0 || (count > 0 && !out_symbols)) return DSCV_INVALID_ARGUMENT;
  if (!indexes && num_tables < count) return DSCV_INVALID_ARGUMENT;
  try {
    const std::span<const std::uint32_t> idx = indexes ? std::span(indexes, count) : std::span<const std::uint32_t>{};
    const auto s = coding::decode_with_tables(std::span(data, len), count, std::span(cdfs, num_tables * DSCV_CDF_LENGTH), idx);
    std::copy(s.begin(), s.end(), out_symbols);
    return DSCV_OK;
  } catch (const ContractError&) {
    return DSCV_INVALID_CDF;
  } catch (const DecodeError&) {
    return DSCV_DECODE_FAILED;
  } catch (const std::exception&) {
    return DSCV_INVALID_ARGUMENT;
  }
}

extern "C" int dscv_gaussian_cdf(double mu, double sigma, uint32_t* out_cdf) {
  if (!out_cdf || !(sigma > 0.0) || !std::isfinite(mu)) return DSCV_INVALID_ARGUMENT;
  const auto t = coding::gaussian_cdf_table(mu, sigma);
  std::copy(t.begin(), t.end(), out_cdf);
  return DSCV_OK;
}

namespace discover::coding {

std::vector<ConformanceCase> make_conformance_corpus(std::size_t num_cases, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> n_tables(1, 4), n_symbols(0, 96);
  std::uniform_real_distribution<double> mu_d(-20.0, 20.0), log_sigma(std::log(0.04), std::log(40.0)), unit(0.0, 1.0);
  std::vector<ConformanceCase> cases;
  cases.reserve(num_cases);
  for (std::size_t k = 0; k < num_cases; ++k) {
    ConformanceCase c;
    const int nt = n_tables(rng);
    std::vector<GaussianParam> params;
    for (int t = 0; t < nt; ++t) {
      params.push_back({mu_d(rng), std::exp(log_sigma(rng))});
      const auto table = gaussian_cdf_table(params.back().mu, params.back().sigma);
      c.tables.insert(c.tables.end(), table.begin(), table.end());
    }
    const int count = k == 0 ? 0 : n_symbols(rng);
    for (int i = 0; i < count; ++i) {
      const auto t = std::uniform_int_distribution<int>(0, nt - 1)(rng);
      const auto& p = params[t];
      double v = unit(rng) < 0.02 ? mu_d(rng) * 10.0 : std::normal_distribution<double>(p.mu, p.sigma)(rng);
      c.indexes.push_back(static_cast<std::uint32_t>(t));
      c.symbols.push_back(clamp_symbol(static_cast<std::int32_t>(std::lround(std::clamp(v, -1e6, 1e6)))));
    }
    c.payload = encode_with_tables(c.symbols, c.tables, c.indexes);
    cases.push_back(std::move(c));
  }
  return cases;
}

Bytes serialize_corpus(const std::vector<ConformanceCase>& cases) {
  ByteWriter w;
  w.str("DSCVCONF");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(cases.size()));
  for (const auto& c : cases) {
    w.u32(static_cast<std::uint32_t>(c.tables.size() / kCdfLength));
    w.u32(static_cast<std::uint32_t>(c.symbols.size()));
    for (auto v : c.tables) w.u32(v);
    for (auto v : c.indexes) w.u32(v);
    for (auto v : c.symbols) w.u32(static_cast<std::uint32_t>(v));
    w.u32(static_cast<std::uint32_t>(c.payload.size()));
    w.bytes(c.payload);
  }
  return w.take();
}

std::vector<ConformanceCase> parse_corpus(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.str(8) != "DSCVCONF") throw ParseError("not a conformance corpus");
  if (r.u32() != 1) throw ParseError("unsupported corpus version");
  const auto n = r.u32();
  std::vector<ConformanceCase> cases(n);
  for (auto& c : cases) {
    const auto nt = r.u32();
    const auto count = r.u32();
    c.tables.resize(static_cast<std::size_t>(nt) * kCdfLength);
    for (auto& v : c.tables) v = r.u32();
    c.indexes.resize(count);
    for (auto& v : c.indexes) v = r.u32();
    c.symbols.resize(count);
    for (auto& v : c.symbols) v = static_cast<std::int32_t>(r.u32());
    const auto len = r.u32();
    const auto p = r.bytes(len);
    c.payload.assign(p.begin(), p.end());
  }
  return cases;
}

}  // namespace discover::coding
