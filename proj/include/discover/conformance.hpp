// SPDX-License-Identifier: Apache-2.0
#pragma once

// Conformance corpus for alternative coder implementations.
//
//   "DSCVCONF" | version u32 = 1 | num_cases u32
//   per case:
//     num_tables u32 | count u32 |
//     tables u32 * 257 * num_tables | indexes u32 * count | symbols i32 * count |
//     payload_len u32 | payload bytes
//
// Payloads come from the reference encoder; a conforming coder reproduces them
// byte for byte and decodes them back to `symbols`.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "discover/bytes.hpp"

namespace discover::coding {

struct ConformanceCase {
  std::vector<std::uint32_t> tables;
  std::vector<std::uint32_t> indexes;
  std::vector<std::int32_t> symbols;
  Bytes payload;
};

/// Fuzzed cases from Gaussian tables with random (mu, sigma), symbols drawn
/// near mu with occasional outliers (clamped to the alphabet).
std::vector<ConformanceCase> make_conformance_corpus(std::size_t num_cases, std::uint64_t seed);

Bytes serialize_corpus(const std::vector<ConformanceCase>& cases);
std::vector<ConformanceCase> parse_corpus(std::span<const std::uint8_t> bytes);

}  // namespace discover::coding
