// SPDX-License-Identifier: Apache-2.0
#include "discover/disentangle.hpp"

#include <algorithm>
#include <functional>
#include <cmath>
#include <random>

#include "discover/errors.hpp"

namespace discover {
namespace {

PixelBox clip(const PixelBox& b, int width, int height) {
  return {std::clamp(b.x0, 0, width), std::clamp(b.y0, 0, height), std::clamp(b.x1, 0, width),
          std::clamp(b.y1, 0, height)};
}

void cover(const PixelBox& raw, int width, int height, int stride, int rows, int cols,
           const std::function<void(int, int)>& visit) {
  const PixelBox b = clip(raw, width, height);
  if (b.empty()) return;
  const int r1 = std::min(rows, (b.y1 + stride - 1) / stride);
  const int c1 = std::min(cols, (b.x1 + stride - 1) / stride);
  for (int r = b.y0 / stride; r < r1; ++r)
    for (int c = b.x0 / stride; c < c1; ++c) visit(r, c);
}

GroupTable assign(const std::vector<std::pair<std::uint16_t, PixelBox>>& boxes, int width, int height, int stride,
                  int rows, int cols, bool drop_empty) {
  if (stride <= 0 || rows <= 0 || cols <= 0) throw ValidationError("latent grid must be non-empty");
  if (rows * stride < height || cols * stride < width) throw ContractError("latent grid does not cover the image");
  std::vector<int> owner(static_cast<std::size_t>(rows) * cols, -1);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    cover(boxes[i].second, width, height, stride, rows, cols, [&](int r, int c) {
      int& o = owner[static_cast<std::size_t>(r) * cols + c];
      if (o < 0) o = static_cast<int>(i);
    });
  }
  GroupTable t{rows, cols, {}};
  t.groups.push_back({0, kBackgroundLabel, {}, {}});
  std::vector<int> group_of(boxes.size(), -1);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const bool used = std::find(owner.begin(), owner.end(), static_cast<int>(i)) != owner.end();
    if (!used && drop_empty) continue;
    group_of[i] = static_cast<int>(t.groups.size());
    t.groups.push_back({static_cast<std::uint16_t>(t.groups.size()), boxes[i].first, clip(boxes[i].second, width, height), {}});
  }
  for (std::size_t cell = 0; cell < owner.size(); ++cell) {
    const int g = owner[cell] < 0 ? 0 : group_of[owner[cell]];
    t.groups[g].cell_ids.push_back(static_cast<int>(cell));
  }
  return t;
}

}  // namespace

std::vector<LatentCell> bbox_to_cells(const PixelBox& bbox, int image_width, int image_height, int stride) {
  if (stride <= 0) throw ValidationError("stride must be positive");
  std::vector<LatentCell> out;
  const int rows = (image_height + stride - 1) / stride, cols = (image_width + stride - 1) / stride;
  cover(bbox, image_width, image_height, stride, rows, cols, [&](int r, int c) { out.push_back({r, c}); });
  return out;
}

std::vector<std::uint16_t> GroupTable::assignment() const {
  std::vector<std::uint16_t> out(static_cast<std::size_t>(rows) * cols, 0);
  for (const auto& g : groups)
    for (int cell : g.cell_ids) out[cell] = g.group_id;
  return out;
}

std::set<std::uint16_t> GroupTable::ids() const {
  std::set<std::uint16_t> out;
  for (const auto& g : groups) out.insert(g.group_id);
  return out;
}

std::set<std::uint16_t> GroupTable::object_ids() const {
  std::set<std::uint16_t> out;
  for (const auto& g : groups)
    if (g.group_id != 0) out.insert(g.group_id);
  return out;
}

void GroupTable::validate() const {
  if (groups.empty() || groups[0].group_id != 0 || groups[0].label_id != kBackgroundLabel) {
    throw ContractError("group table must start with the background group");
  }
  std::vector<int> seen(static_cast<std::size_t>(rows) * cols, 0);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (groups[i].group_id != i) throw ContractError("group ids must be contiguous from 0");
    if (!std::is_sorted(groups[i].cell_ids.begin(), groups[i].cell_ids.end())) {
      throw ContractError("group cell ids must be sorted");
    }
    for (int c : groups[i].cell_ids) {
      if (c < 0 || c >= static_cast<int>(seen.size()) || seen[c]++) throw ContractError("groups do not partition the grid");
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw ContractError("groups do not cover the grid");
}

GroupTable build_group_table(const ElementSet& es, int stride, int rows, int cols) {
  es.validate();
  ElementSet sorted = es;
  sorted.canonicalize();
  std::vector<std::pair<std::uint16_t, PixelBox>> boxes;
  for (const auto& e : sorted.elements) boxes.emplace_back(static_cast<std::uint16_t>(e.label_id), e.bbox);
  return assign(boxes, es.width, es.height, stride, rows, cols, true);
}

GroupTable build_group_table(const ElementSet& es, int stride) {
  return build_group_table(es, stride, (es.height + stride - 1) / stride, (es.width + stride - 1) / stride);
}

GroupTable table_from_boxes(const std::vector<std::pair<std::uint16_t, PixelBox>>& entries, int image_width,
                            int image_height, int stride, int rows, int cols) {
  if (entries.empty() || entries[0].first != kBackgroundLabel) throw ParseError("group table must start with background");
  std::vector<std::pair<std::uint16_t, PixelBox>> boxes(entries.begin() + 1, entries.end());
  GroupTable t = assign(boxes, image_width, image_height, stride, rows, cols, false);
  return t;
}

LatentGrid select_groups(const LatentGrid& y_hat, const GroupTable& table, const std::set<std::uint16_t>& keep) {
  if (y_hat.rows() != table.rows || y_hat.cols() != table.cols) {
    throw ContractError("group table grid " + std::to_string(table.rows) + "x" + std::to_string(table.cols) +
                        " does not match latent " + shape_string(y_hat.data.shape()));
  }
  const auto ids = table.ids();
  for (auto k : keep) {
    if (!ids.count(k)) throw ValidationError("unknown group id " + std::to_string(k));
  }
  const auto owner = table.assignment();
  LatentGrid out = y_hat;
  const std::size_t plane = owner.size();
  for (int c = 0; c < y_hat.channels(); ++c)
    for (std::size_t cell = 0; cell < plane; ++cell) {
      if (!keep.count(owner[cell])) out.data[c * plane + cell] = 0.0;
    }
  return out;
}

std::size_t LatentMask::kept() const { return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), 1)); }

LatentMask random_training_mask(int rows, int cols, double fraction_lo, double fraction_hi, std::uint64_t seed) {
  if (!(0.0 <= fraction_lo && fraction_lo <= fraction_hi && fraction_hi <= 1.0)) {
    throw ValidationError("mask fraction range must lie within [0, 1]");
  }
  if (rows <= 0 || cols <= 0) throw ValidationError("mask grid must be non-empty");
  LatentMask m{rows, cols, std::vector<std::uint8_t>(static_cast<std::size_t>(rows) * cols, 1)};
  std::mt19937_64 rng(seed);
  const double u = fraction_lo == fraction_hi ? fraction_lo : std::uniform_real_distribution<double>(fraction_lo, fraction_hi)(rng);
  const int total = rows * cols;
  const int n = std::clamp(static_cast<int>(std::lround(u * total)), 0, total);
  if (n == 0) return m;
  const int h_lo = (n + cols - 1) / cols, h_hi = std::min(rows, n);
  const int h = std::uniform_int_distribution<int>(h_lo, h_hi)(rng);
  const int w = n / h, rest = n - h * w;
  const int box_w = w + (rest > 0 ? 1 : 0);
  const int r0 = std::uniform_int_distribution<int>(0, rows - h)(rng);
  const int c0 = std::uniform_int_distribution<int>(0, cols - box_w)(rng);
  for (int r = r0; r < r0 + h; ++r)
    for (int c = c0; c < c0 + w; ++c) m.cells[static_cast<std::size_t>(r) * cols + c] = 0;
  for (int r = r0; r < r0 + rest; ++r) m.cells[static_cast<std::size_t>(r) * cols + c0 + w] = 0;
  return m;
}

LatentMask mask_from_groups(const GroupTable& table, const std::set<std::uint16_t>& keep) {
  LatentMask m{table.rows, table.cols, {}};
  for (auto g : table.assignment()) m.cells.push_back(keep.count(g) ? 1 : 0);
  return m;
}

}  // namespace discover
