// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reference entropy coder: byte-wise rANS with a 32-bit state and 16-bit
// quantized cumulative frequency tables over the alphabet [-127, 128].
//
// Quantized CDF rule (shared with every compatible coder):
//   cdf[0] = 0, cdf[256] = 65536
//   cdf[i] = floor(F(-127 + i - 0.5) * (65536 - 256)) + i     for 0 < i < 256
// where F is the model's continuous CDF. Every bin therefore has width >= 1.
//
// Stream layout: the final 32-bit coder state little-endian, followed by the
// renormalisation bytes. An empty plane encodes to the 4-byte initial state.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "discover/bytes.hpp"

namespace discover::coding {

inline constexpr int kAlphabetMin = -127;
inline constexpr int kAlphabetMax = 128;
inline constexpr int kAlphabetSize = kAlphabetMax - kAlphabetMin + 1;
inline constexpr int kPrecisionBits = 16;
inline constexpr std::uint32_t kTotalFrequency = 1u << kPrecisionBits;
inline constexpr int kCdfLength = kAlphabetSize + 1;
inline constexpr std::uint32_t kStateLower = 1u << 23;

using CdfTable = std::array<std::uint32_t, kCdfLength>;

struct GaussianParam {
  double mu = 0.0;
  double sigma = 1.0;
};

/// Symbols paired with their (mu, sigma), in coding order.
struct SymbolPlane {
  std::vector<std::int32_t> symbols;
  std::vector<GaussianParam> params;
};

struct EncodeStats {
  std::size_t clamped_symbols = 0;
};

double normal_cdf(double x);

/// Quantizes a continuous CDF value at lower edge `index` (0 < index < 256).
std::uint32_t quantize_cdf_value(double cdf, int index);
CdfTable gaussian_cdf_table(double mu, double sigma);
/// Throws ContractError unless cdf[0]=0, cdf[256]=65536 and strictly increasing.
void validate_cdf(std::span<const std::uint32_t> cdf);
int clamp_symbol(std::int32_t s);

Bytes arith_encode(const SymbolPlane& plane, EncodeStats* stats = nullptr);
std::vector<std::int32_t> arith_decode(std::span<const std::uint8_t> bytes, std::span<const GaussianParam> params);

/// Explicit-table variant. `tables` holds kCdfLength entries per table; symbol
/// i uses table `indexes[i]`, or table i when `indexes` is empty.
Bytes encode_with_tables(std::span<const std::int32_t> symbols, std::span<const std::uint32_t> tables,
                         std::span<const std::uint32_t> indexes, EncodeStats* stats = nullptr);
std::vector<std::int32_t> decode_with_tables(std::span<const std::uint8_t> bytes, std::size_t count,
                                             std::span<const std::uint32_t> tables,
                                             std::span<const std::uint32_t> indexes);

/// Ideal cost in bits of `symbol` under a discretized Gaussian, floored at 2^-24.
double gaussian_symbol_bits(double symbol, double mu, double sigma);
inline constexpr double kProbabilityFloor = 1.0 / 16777216.0;  // 2^-24

}  // namespace discover::coding
