// SPDX-License-Identifier: Apache-2.0
#include "discover/fixtures.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "discover/errors.hpp"

namespace discover {
namespace {

using Color = std::array<double, 3>;

double smoothstep_edge(double signed_distance, double softness) {
  return 1.0 / (1.0 + std::exp(signed_distance / softness));
}

Color random_color(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 0.95);
  return {u(rng), u(rng), u(rng)};
}

}  // namespace

TaskSpec shapes_task() { return {"shape detection", "locate the geometric objects in synthetic scenes", {"ellipse", "rectangle", "triangle"}}; }

Scene generate_scene(const SceneOptions& o, std::uint64_t seed, const std::string& image_id) {
  if (o.width <= 0 || o.height <= 0 || o.min_objects < 0 || o.max_objects < o.min_objects) {
    throw ValidationError("invalid scene options");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int w = o.width, h = o.height;
  std::vector<Color> canvas(static_cast<std::size_t>(w) * h);

  const std::array<Color, 4> corners{random_color(rng), random_color(rng), random_color(rng), random_color(rng)};
  const double fx = 0.5 + 2.5 * u(rng), fy = 0.5 + 2.5 * u(rng), phase = 2 * std::numbers::pi * u(rng);
  const double amp = 0.06 * u(rng);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double a = static_cast<double>(x) / std::max(1, w - 1), b = static_cast<double>(y) / std::max(1, h - 1);
      const double wave = amp * std::sin(2 * std::numbers::pi * (fx * a + fy * b) + phase);
      auto& px = canvas[static_cast<std::size_t>(y) * w + x];
      for (int c = 0; c < 3; ++c) {
        px[c] = (1 - a) * (1 - b) * corners[0][c] + a * (1 - b) * corners[1][c] + (1 - a) * b * corners[2][c] +
                a * b * corners[3][c] + wave;
      }
    }

  Scene scene;
  scene.annotation = {image_id, w, h, {}};
  const TaskSpec task = shapes_task();
  const int n = std::uniform_int_distribution<int>(o.min_objects, o.max_objects)(rng);
  const double side = std::min(w, h);
  for (int k = 0; k < n; ++k) {
    const int kind = std::uniform_int_distribution<int>(0, 2)(rng);
    const double ew = side * (o.min_extent + (o.max_extent - o.min_extent) * u(rng));
    const double eh = side * (o.min_extent + (o.max_extent - o.min_extent) * u(rng));
    const double cx = ew / 2 + (w - ew) * u(rng), cy = eh / 2 + (h - eh) * u(rng);
    const Color fill = random_color(rng), accent = random_color(rng);
    const double stripe = 2 * std::numbers::pi / (4.0 + 10.0 * u(rng)), stripe_amp = u(rng) < 0.5 ? 0.0 : 0.5 * u(rng);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double px = x + 0.5 - cx, py = y + 0.5 - cy;
        double d = 0;
        if (kind == 0) {
          const double r = std::hypot(px / (ew / 2), py / (eh / 2));
          d = (r - 1.0) * std::min(ew, eh) / 2;
        } else if (kind == 1) {
          d = std::max(std::abs(px) - ew / 2, std::abs(py) - eh / 2);
        } else {
          // Upward triangle inscribed in the box.
          const double t = (py + eh / 2) / eh;
          d = std::max({std::abs(px) - ew / 2 * t, py - eh / 2, -py - eh / 2});
        }
        const double cover = smoothstep_edge(d, 0.7);
        if (cover < 1e-4) continue;
        const double s = 0.5 + 0.5 * std::sin(stripe * (px + py));
        auto& dst = canvas[static_cast<std::size_t>(y) * w + x];
        for (int c = 0; c < 3; ++c) {
          const double obj = fill[c] * (1 - stripe_amp * s) + accent[c] * stripe_amp * s;
          dst[c] = (1 - cover) * dst[c] + cover * obj;
        }
      }
    const double x0 = std::max(0.0, std::floor(cx - ew / 2)), y0 = std::max(0.0, std::floor(cy - eh / 2));
    const double x1 = std::min<double>(w, std::ceil(cx + ew / 2)), y1 = std::min<double>(h, std::ceil(cy + eh / 2));
    scene.annotation.detections.push_back({task.label_list[kind], x0, y0, x1, y1, 1.0});
  }

  scene.image = {w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * 3)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(canvas[static_cast<std::size_t>(y) * w + x][c], 0.0, 1.0);
        scene.image.at(x, y, c) = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  return scene;
}

void write_fixture_set(const std::filesystem::path& dir, int count, const SceneOptions& options, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  const TaskSpec task = shapes_task();
  const std::string labels = labels_to_json(task);
  write_file(dir / "labels.json", std::span(reinterpret_cast<const std::uint8_t*>(labels.data()), labels.size()));
  for (int i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "scene_%04d", i);
    const Scene s = generate_scene(options, seed * 1000003ULL + static_cast<std::uint64_t>(i), id);
    save_png(s.image, dir / (std::string(id) + ".png"));
    const ElementSet es = filter_detections(s.annotation.detections, id, s.image.width, s.image.height, task, 0.0);
    const std::string json = annotation_to_json(es, task);
    write_file(dir / (std::string(id) + ".json"), std::span(reinterpret_cast<const std::uint8_t*>(json.data()), json.size()));
  }
}

}  // namespace discover
