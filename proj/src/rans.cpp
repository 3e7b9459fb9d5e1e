// SPDX-License-Identifier: Apache-2.0
#include "discover/rans.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "discover/errors.hpp"

namespace discover::coding {
namespace {

constexpr std::uint32_t kSpread = kTotalFrequency - kAlphabetSize;

struct Range {
  std::uint32_t start;
  std::uint32_t freq;
};

// A model maps (position, symbol index) to a quantized range and inverts it.
class GaussianModel {
 public:
  explicit GaussianModel(std::span<const GaussianParam> params) : params_(params) {}
  std::size_t size() const { return params_.size(); }

  std::uint32_t cdf(std::size_t pos, int index) const {
    if (index <= 0) return 0;
    if (index >= kAlphabetSize) return kTotalFrequency;
    const auto& p = params_[pos];
    const double edge = kAlphabetMin + index - 0.5;
    return quantize_cdf_value(normal_cdf((edge - p.mu) / p.sigma), index);
  }
  Range range(std::size_t pos, int index) const {
    const auto lo = cdf(pos, index);
    return {lo, cdf(pos, index + 1) - lo};
  }
  int find(std::size_t pos, std::uint32_t target) const {
    int lo = 0, hi = kAlphabetSize;  // invariant: cdf(lo) <= target < cdf(hi)
    while (hi - lo > 1) {
      const int mid = (lo + hi) / 2;
      if (cdf(pos, mid) <= target) lo = mid; else hi = mid;
    }
    return lo;
  }

 private:
  std::span<const GaussianParam> params_;
};

class TableModel {
 public:
  TableModel(std::span<const std::uint32_t> tables, std::span<const std::uint32_t> indexes, std::size_t count)
      : tables_(tables), indexes_(indexes), count_(count) {
    if (tables.size() % kCdfLength != 0) throw ContractError("cdf buffer length is not a multiple of 257");
    const std::size_t n_tables = tables.size() / kCdfLength;
    for (std::size_t t = 0; t < n_tables; ++t) validate_cdf(tables.subspan(t * kCdfLength, kCdfLength));
    if (indexes.empty()) {
      if (count > 0 && n_tables != count) throw ContractError("need one cdf table per symbol when no indexes are given");
    } else {
      if (indexes.size() != count) throw ContractError("index count does not match symbol count");
      for (auto i : indexes) {
        if (i >= n_tables) throw ContractError("cdf table index out of range");
      }
    }
  }
  std::size_t size() const { return count_; }
  const std::uint32_t* table(std::size_t pos) const {
    const std::size_t t = indexes_.empty() ? pos : indexes_[pos];
    return tables_.data() + t * kCdfLength;
  }
  Range range(std::size_t pos, int index) const {
    const auto* c = table(pos);
    return {c[index], c[index + 1] - c[index]};
  }
  int find(std::size_t pos, std::uint32_t target) const {
    const auto* c = table(pos);
    return static_cast<int>(std::upper_bound(c, c + kCdfLength, target) - c) - 1;
  }

 private:
  std::span<const std::uint32_t> tables_;
  std::span<const std::uint32_t> indexes_;
  std::size_t count_;
};

template <typename Model>
Bytes encode_impl(std::span<const std::int32_t> symbols, const Model& model, EncodeStats* stats) {
  Bytes rev;
  rev.reserve(symbols.size() / 2 + 8);
  std::uint32_t x = kStateLower;
  std::size_t clamped = 0;
  for (std::size_t i = symbols.size(); i-- > 0;) {
    const int s = clamp_symbol(symbols[i]);
    if (s != symbols[i]) ++clamped;
    const Range r = model.range(i, s - kAlphabetMin);
    const std::uint32_t x_max = ((kStateLower >> kPrecisionBits) << 8) * r.freq;
    while (x >= x_max) {
      rev.push_back(static_cast<std::uint8_t>(x & 0xff));
      x >>= 8;
    }
    x = ((x / r.freq) << kPrecisionBits) + (x % r.freq) + r.start;
  }
  for (int shift = 24; shift >= 0; shift -= 8) rev.push_back(static_cast<std::uint8_t>(x >> shift));
  std::reverse(rev.begin(), rev.end());
  if (stats) stats->clamped_symbols += clamped;
  return rev;
}

template <typename Model>
std::vector<std::int32_t> decode_impl(std::span<const std::uint8_t> bytes, const Model& model) {
  if (bytes.size() < 4) throw DecodeError("entropy payload shorter than the 4-byte state", bytes.size());
  std::size_t pos = 0;
  std::uint32_t x = 0;
  for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(bytes[pos++]) << (8 * i);
  std::vector<std::int32_t> out(model.size());
  constexpr std::uint32_t kMask = kTotalFrequency - 1;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::uint32_t target = x & kMask;
    const int index = model.find(i, target);
    const Range r = model.range(i, index);
    out[i] = index + kAlphabetMin;
    x = r.freq * (x >> kPrecisionBits) + target - r.start;
    while (x < kStateLower) {
      if (pos >= bytes.size()) throw DecodeError("entropy payload truncated", pos);
      x = (x << 8) | bytes[pos++];
    }
  }
  if (x != kStateLower || pos != bytes.size()) throw DecodeError("entropy payload corrupt or has trailing bytes", pos);
  return out;
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0); }

std::uint32_t quantize_cdf_value(double cdf, int index) {
  const double c = std::clamp(cdf, 0.0, 1.0);
  return static_cast<std::uint32_t>(std::floor(c * kSpread)) + static_cast<std::uint32_t>(index);
}

CdfTable gaussian_cdf_table(double mu, double sigma) {
  CdfTable t{};
  t[0] = 0;
  for (int i = 1; i < kAlphabetSize; ++i) {
    t[i] = quantize_cdf_value(normal_cdf((kAlphabetMin + i - 0.5 - mu) / sigma), i);
  }
  t[kAlphabetSize] = kTotalFrequency;
  return t;
}

void validate_cdf(std::span<const std::uint32_t> cdf) {
  if (cdf.size() != kCdfLength) throw ContractError("cdf table must have 257 entries");
  if (cdf.front() != 0 || cdf.back() != kTotalFrequency) throw ContractError("cdf table must span [0, 65536]");
  for (std::size_t i = 1; i < cdf.size(); ++i) {
    if (cdf[i] <= cdf[i - 1]) throw ContractError("cdf table is not strictly increasing at bin " + std::to_string(i));
  }
}

int clamp_symbol(std::int32_t s) { return std::clamp<std::int32_t>(s, kAlphabetMin, kAlphabetMax); }

Bytes arith_encode(const SymbolPlane& plane, EncodeStats* stats) {
  if (plane.symbols.size() != plane.params.size()) throw ContractError("symbol/param count mismatch");
  return encode_impl(plane.symbols, GaussianModel(plane.params), stats);
}

std::vector<std::int32_t> arith_decode(std::span<const std::uint8_t> bytes, std::span<const GaussianParam> params) {
  return decode_impl(bytes, GaussianModel(params));
}

Bytes encode_with_tables(std::span<const std::int32_t> symbols, std::span<const std::uint32_t> tables,
                         std::span<const std::uint32_t> indexes, EncodeStats* stats) {
  return encode_impl(symbols, TableModel(tables, indexes, symbols.size()), stats);
}

std::vector<std::int32_t> decode_with_tables(std::span<const std::uint8_t> bytes, std::size_t count,
                                             std::span<const std::uint32_t> tables,
                                             std::span<const std::uint32_t> indexes) {
  return decode_impl(bytes, TableModel(tables, indexes, count));
}

double gaussian_symbol_bits(double symbol, double mu, double sigma) {
  const double v = std::abs(symbol - mu);
  const double p = normal_cdf((0.5 - v) / sigma) - normal_cdf((-0.5 - v) / sigma);
  return -std::log2(std::max(p, kProbabilityFloor));
}

}  // namespace discover::coding
