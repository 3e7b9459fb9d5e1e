// SPDX-License-Identifier: Apache-2.0
#pragma once

// Partition of the latent grid into object groups and a background group.

#include <cstdint>
#include <set>
#include <vector>

#include "discover/codec.hpp"
#include "discover/semantics.hpp"

namespace discover {

inline constexpr std::uint16_t kBackgroundLabel = 0xFFFF;

struct LatentCell {
  int row = 0;
  int col = 0;
  friend auto operator<=>(const LatentCell&, const LatentCell&) = default;
};

/// Cells whose s x s pixel block intersects `bbox` after clipping to the image.
/// The grid is ceil(height / s) x ceil(width / s).
std::vector<LatentCell> bbox_to_cells(const PixelBox& bbox, int image_width, int image_height, int stride);

struct Group {
  std::uint16_t group_id = 0;
  std::uint16_t label_id = kBackgroundLabel;
  PixelBox bbox;
  /// Sorted flattened indices row * cols + col.
  std::vector<int> cell_ids;
};

struct GroupTable {
  int rows = 0;
  int cols = 0;
  std::vector<Group> groups;

  /// Group id of every cell, row-major.
  std::vector<std::uint16_t> assignment() const;
  std::set<std::uint16_t> ids() const;
  std::set<std::uint16_t> object_ids() const;
  void validate() const;
};

/// Each cell goes to the first element of the canonical order that covers it,
/// otherwise to background group 0. Elements that win no cell are dropped and
/// ids are compacted. `rows` x `cols` may exceed the image footprint (padding).
GroupTable build_group_table(const ElementSet& es, int stride, int rows, int cols);
GroupTable build_group_table(const ElementSet& es, int stride);

/// Rebuilds cell lists from (label, bbox) entries ordered by group id, using the
/// same first-cover rule. Entry 0 must be background.
GroupTable table_from_boxes(const std::vector<std::pair<std::uint16_t, PixelBox>>& entries, int image_width,
                            int image_height, int stride, int rows, int cols);

/// Copies the kept groups' cells and zeros everything else.
LatentGrid select_groups(const LatentGrid& y_hat, const GroupTable& table, const std::set<std::uint16_t>& keep);

/// true = kept cell.
struct LatentMask {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> cells;

  std::size_t kept() const;
};

/// Masks round(u * cells) cells, u ~ U[lo, hi], as one rectangle plus a partial
/// column strip at a random position.
LatentMask random_training_mask(int rows, int cols, double fraction_lo, double fraction_hi, std::uint64_t seed);

LatentMask mask_from_groups(const GroupTable& table, const std::set<std::uint16_t>& keep);

}  // namespace discover
