// SPDX-License-Identifier: Apache-2.0
#pragma once

// Procedural annotated scenes: smooth backgrounds with soft-edged shapes
// labelled "ellipse", "rectangle" or "triangle".

#include <cstdint>
#include <filesystem>
#include <vector>

#include "discover/image_io.hpp"
#include "discover/semantics.hpp"

namespace discover {

TaskSpec shapes_task();

struct SceneOptions {
  int width = 96;
  int height = 96;
  int min_objects = 1;
  int max_objects = 3;
  /// Object extent as a fraction of the shorter image side.
  double min_extent = 0.2;
  double max_extent = 0.45;
};

struct Scene {
  RgbImage image;
  /// Boxes with score 1, in the annotation schema.
  Annotation annotation;
};

Scene generate_scene(const SceneOptions& options, std::uint64_t seed, const std::string& image_id);

/// Writes `<dir>/<id>.png` and `<dir>/<id>.json` for `count` scenes, plus labels.json.
void write_fixture_set(const std::filesystem::path& dir, int count, const SceneOptions& options, std::uint64_t seed);

}  // namespace discover
