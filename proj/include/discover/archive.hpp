// SPDX-License-Identifier: Apache-2.0
#pragma once

// Versioned binary array archive. Model files, training checkpoints and
// debugging dumps (z_0) all share this layout:
//
//   "DSCVMODL"            8 bytes magic
//   version               u32 (= 1)
//   config_len, config    u32 + UTF-8 JSON
//   num_arrays            u32
//     name_len, name      u16 + bytes
//     ndim, dims          u8 + u32 * ndim
//     data                f64 * numel
//   num_tables            u32
//     name_len, name      u16 + bytes
//     rows, cols          u32, u32
//     data                u32 * rows * cols
//
// All integers little-endian.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "discover/bytes.hpp"
#include "discover/tensor.hpp"

namespace discover {

struct U32Table {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint32_t> data;
};

struct Archive {
  std::string config_json;
  std::vector<std::pair<std::string, Tensor>> arrays;
  std::vector<std::pair<std::string, U32Table>> tables;

  const Tensor& array(const std::string& name) const;
  const U32Table* table(const std::string& name) const;
};

inline constexpr std::uint32_t kArchiveVersion = 1;

Bytes serialize_archive(const Archive& archive);
Archive parse_archive(std::span<const std::uint8_t> data);

void save_archive(const Archive& archive, const std::filesystem::path& path);
Archive load_archive(const std::filesystem::path& path);

}  // namespace discover
