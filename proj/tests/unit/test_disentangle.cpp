// SPDX-License-Identifier: Apache-2.0
#include <random>

#include "discover/disentangle.hpp"
#include "discover/errors.hpp"
#include "doctest.h"

using namespace discover;

namespace {

ElementSet two_boxes() {
  ElementSet es{"two", 64, 64, {}};
  es.elements.push_back({0, {0, 0, 16, 32}, 0.9});
  es.elements.push_back({1, {40, 40, 64, 64}, 0.7});
  return es;
}

}  // namespace

TEST_CASE("any-overlap cell geometry") {
  const auto cells = bbox_to_cells({16, 16, 48, 48}, 64, 64, 16);
  CHECK(cells == std::vector<LatentCell>{{1, 1}, {1, 2}, {2, 1}, {2, 2}});
  CHECK(bbox_to_cells({0, 0, 64, 64}, 64, 64, 16).size() == 16);
  CHECK(bbox_to_cells({0, 0, 1, 1}, 64, 64, 16) == std::vector<LatentCell>{{0, 0}});
  CHECK(bbox_to_cells({17, 5, 17, 40}, 64, 64, 16).empty());
  CHECK(bbox_to_cells({15, 15, 17, 17}, 64, 64, 16).size() == 4);
}

TEST_CASE("empty element set is a single background group") {
  const auto t = build_group_table({"e", 64, 64, {}}, 16);
  REQUIRE(t.groups.size() == 1);
  CHECK(t.groups[0].label_id == kBackgroundLabel);
  CHECK(t.groups[0].cell_ids.size() == 16);
  CHECK_NOTHROW(t.validate());
}

TEST_CASE("two boxes give three groups with additive counts") {
  const auto t = build_group_table(two_boxes(), 16);
  REQUIRE(t.groups.size() == 3);
  CHECK(t.groups[1].cell_ids == std::vector<int>{0, 4});
  CHECK(t.groups[2].cell_ids == std::vector<int>{10, 11, 14, 15});
  CHECK(t.groups[0].cell_ids.size() + 2 + 4 == 16);
  CHECK_NOTHROW(t.validate());
}

TEST_CASE("higher score wins contested cells and empty groups are dropped") {
  ElementSet es{"c", 64, 64, {}};
  es.elements.push_back({2, {16, 16, 48, 48}, 0.8});
  es.elements.push_back({5, {16, 16, 48, 48}, 0.9});
  const auto t = build_group_table(es, 16);
  REQUIRE(t.groups.size() == 2);
  CHECK(t.groups[1].label_id == 5);
  CHECK(t.groups[1].cell_ids.size() == 4);
}

TEST_CASE("decoder-side rebuild matches the encoder partition") {
  const auto t = build_group_table(two_boxes(), 16, 5, 6);
  std::vector<std::pair<std::uint16_t, PixelBox>> boxes;
  for (const auto& g : t.groups) boxes.emplace_back(g.label_id, g.bbox);
  const auto r = table_from_boxes(boxes, 64, 64, 16, 5, 6);
  CHECK(r.assignment() == t.assignment());
  CHECK(t.groups[0].cell_ids.size() == 30 - 6);
}

TEST_CASE("select_groups keeps exactly the chosen cells") {
  const auto t = build_group_table(two_boxes(), 16);
  std::mt19937_64 rng(1);
  LatentGrid y;
  y.data = Tensor({3, 4, 4});
  for (auto& v : y.data.values()) v = 1.0 + static_cast<double>(rng() % 5);
  CHECK(select_groups(y, t, {0, 1, 2}).data == y.data);
  const auto none = select_groups(y, t, {});
  for (double v : none.data.values()) CHECK(v == 0.0);
  const auto one = select_groups(y, t, {1});
  const auto owner = t.assignment();
  for (int c = 0; c < 3; ++c)
    for (int cell = 0; cell < 16; ++cell) CHECK((one.data[c * 16 + cell] != 0.0) == (owner[cell] == 1));
  CHECK_THROWS_AS(select_groups(y, t, {3}), ValidationError);
}

TEST_CASE("training masks") {
  const auto full = random_training_mask(8, 8, 0.0, 0.0, 1);
  CHECK(full.kept() == 64);
  const auto a = random_training_mask(32, 32, 0.0, 0.5, 42);
  CHECK(a.cells == random_training_mask(32, 32, 0.0, 0.5, 42).cells);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto m = random_training_mask(32, 32, 0.5, 0.5, seed);
    CHECK(1024 - m.kept() == 512);
  }
  CHECK_THROWS_AS(random_training_mask(4, 4, 0.2, 1.5, 0), ValidationError);
}
