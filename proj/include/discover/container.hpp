// SPDX-License-Identifier: Apache-2.0
#pragma once

// Structured bitstream. All integers little-endian.
//
//   header (35 bytes)
//     "DSCV" | version u8 = 1 | width u32 | height u32 | pad_right u8 |
//     pad_bottom u8 | latent_stride u8 | vae_factor u8 | model_id 16 bytes |
//     num_groups u16
//   group table (20 bytes per group, ordered by group_id, group 0 = background)
//     group_id u16 | label_id u16 (0xFFFF background) | bbox x0,y0,x1,y1 u16 |
//     payload_offset u32 | payload_len u32 (0 = not transmitted)
//   z payload: length u32 + bytes (always present)
//   y payload region: group payloads, offsets relative to the region start
//
// Each transmitted group is an independent rANS stream over its cells in
// row-major order with channels minor. The z payload is one stream over the
// hyper latent in channel-major order, coded with the model's frozen
// per-channel tables.

#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "discover/archive.hpp"
#include "discover/bytes.hpp"
#include "discover/codec.hpp"
#include "discover/disentangle.hpp"
#include "discover/rans.hpp"

namespace discover {

inline constexpr std::uint8_t kContainerVersion = 1;
inline constexpr std::size_t kHeaderSize = 35;
inline constexpr std::size_t kGroupEntrySize = 20;

struct ContainerHeader {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint8_t pad_right = 0;
  std::uint8_t pad_bottom = 0;
  std::uint8_t latent_stride = 16;
  std::uint8_t vae_factor = 8;
  ContentId model_id{};
  std::uint16_t num_groups = 1;

  int padded_width() const { return static_cast<int>(width) + pad_right; }
  int padded_height() const { return static_cast<int>(height) + pad_bottom; }
  int rows() const { return padded_height() / latent_stride; }
  int cols() const { return padded_width() / latent_stride; }
};

struct GroupEntry {
  std::uint16_t group_id = 0;
  std::uint16_t label_id = kBackgroundLabel;
  PixelBox bbox;
  std::uint32_t payload_offset = 0;
  std::uint32_t payload_len = 0;
};

struct Container {
  ContainerHeader header;
  std::vector<GroupEntry> entries;
  Bytes z_payload;
  Bytes y_region;

  std::set<std::uint16_t> transmitted() const;
  std::span<const std::uint8_t> payload(std::uint16_t group_id) const;
  /// Cell partition recomputed from the entries' boxes.
  GroupTable group_table() const;
  void validate() const;
};

Bytes serialize_container(const Container& c);
Container parse_container(std::span<const std::uint8_t> bytes);

/// Encodes y_hat (quantized) grouped by `table`; only groups in `keep` carry a payload.
Container encode_container(ContainerHeader header, const LatentGrid& y_hat, const HyperLatent& z_hat,
                           const GroupTable& table, const EntropyParams& params, const U32Table& hyper_cdf,
                           const std::set<std::uint16_t>& keep, coding::EncodeStats* stats = nullptr);

/// Decodes the hyper latent: channels = hyper_cdf.rows, spatial = grid / hyper_factor.
HyperLatent decode_hyper_latent(const Container& c, const U32Table& hyper_cdf, int hyper_factor);

/// Decodes the groups in `keep` (all transmitted groups when null); other cells are zero.
/// Throws ValidationError if a requested group was not transmitted.
LatentGrid decode_latent(const Container& c, const EntropyParams& params, const std::set<std::uint16_t>* keep = nullptr);

/// Keeps the payloads of `keep` verbatim and drops the rest. Throws
/// ValidationError listing requested groups that carry no payload.
Bytes extract_partial(std::span<const std::uint8_t> bytes, const std::set<std::uint16_t>& keep);

double bpp_from_bytes(std::size_t bytes, std::size_t pixels);
double bpp_from_bits(double bits, std::size_t pixels);

struct StreamSize {
  std::size_t bytes = 0;
  std::size_t pixels = 0;
};
/// Total bits over total pixels.
double aggregate_bpp(const std::vector<StreamSize>& streams);

/// Bytes per section of a container.
struct SectionSizes {
  std::size_t header = 0;
  std::size_t table = 0;
  std::size_t z = 0;
  std::size_t y = 0;
};
SectionSizes section_sizes(const Container& c);

}  // namespace discover
