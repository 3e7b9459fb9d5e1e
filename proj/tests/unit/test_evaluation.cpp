// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <fstream>

#include "discover/errors.hpp"
#include "discover/evaluation.hpp"
#include "discover/fixtures.hpp"
#include "doctest.h"

using namespace discover;
namespace fs = std::filesystem;

namespace {

RDCurve curve(std::string name, std::vector<double> bpp, std::vector<double> metric) {
  RDCurve c{std::move(name), "psnr", {}};
  for (std::size_t i = 0; i < bpp.size(); ++i) c.points.push_back({bpp[i], metric[i]});
  return c;
}

RgbImage solid(int w, int h, std::uint8_t v) {
  RgbImage img{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * 3, v)};
  return img;
}

}  // namespace

TEST_CASE("bd-rate of identical and halved-rate curves") {
  const auto a = curve("a", {0.1, 0.2, 0.4, 0.8}, {28, 31, 33.5, 35.2});
  CHECK(std::abs(bd_rate(a, a)) < 1e-9);
  CHECK(std::abs(bd_metric(a, a)) < 1e-9);
  auto half = a;
  for (auto& p : half.points) p.bpp /= 2;
  CHECK(bd_rate(a, half) == doctest::Approx(-50.0).epsilon(0.1 / 50));
  CHECK(bd_rate(half, a) == doctest::Approx(100.0).epsilon(1e-9));
  auto up = a;
  for (auto& p : up.points) p.metric += 1.0;
  CHECK(std::abs(bd_metric(a, up) - 1.0) < 0.01);
}

TEST_CASE("bd deltas on a four-point case match the frozen numeric oracle") {
  // Oracle: independent monotone-cubic interpolation with adaptive quadrature.
  const auto a = curve("anchor", {0.1, 0.2, 0.4, 0.8}, {28, 31, 33.5, 35.2});
  const auto t = curve("test", {0.08, 0.17, 0.3, 0.7}, {28.5, 31.2, 33.0, 36.0});
  CHECK(bd_rate(a, t) == doctest::Approx(-19.7099015772).epsilon(1e-3));
  CHECK(bd_metric(a, t) == doctest::Approx(0.7534828013).epsilon(1e-3));
}

TEST_CASE("bd inputs are validated") {
  const auto a = curve("a", {0.1, 0.2, 0.4}, {28, 31, 33});
  CHECK_THROWS_AS(bd_rate(a, curve("far", {0.1, 0.2}, {40, 41})), ValidationError);
  CHECK_THROWS_AS(bd_rate(a, curve("bumpy", {0.1, 0.2, 0.3}, {28, 32, 30})), ValidationError);
  CHECK_THROWS_AS(bd_rate(a, curve("one", {0.1}, {30})), ValidationError);
  CHECK_THROWS_AS(bd_rate(a, curve("zero", {0.0, 0.2}, {28, 30})), ValidationError);
  auto other = a;
  other.metric_name = "fid";
  CHECK_THROWS_AS(bd_rate(a, other), ValidationError);
  // Decreasing metrics (lower is better) are monotone too.
  const auto fid = curve("fid", {0.1, 0.2, 0.4}, {30, 20, 12});
  CHECK(std::abs(bd_metric(fid, fid)) < 1e-12);
}

TEST_CASE("pchip interpolates, preserves monotonicity and integrates cubics exactly") {
  const Pchip line({0, 1, 3, 4}, {1, 3, 7, 9});
  CHECK(line(2.0) == doctest::Approx(5.0));
  CHECK(line.integral(0.5, 3.5) == doctest::Approx(15.0).epsilon(1e-12));
  const Pchip step({0, 1, 2, 3}, {0, 0, 1, 1});
  for (double x = 0; x <= 3; x += 0.01) {
    CHECK(step(x) >= -1e-12);
    CHECK(step(x) <= 1 + 1e-12);
  }
  // Trapezoid check of the piecewise integral.
  const Pchip p({0, 0.5, 2, 3}, {1, 2, 2.5, 5});
  double trap = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x0 = 0.2 + 2.6 * i / n, x1 = 0.2 + 2.6 * (i + 1) / n;
    trap += 0.5 * (p(x0) + p(x1)) * (x1 - x0);
  }
  CHECK(p.integral(0.2, 2.8) == doctest::Approx(trap).epsilon(1e-9));
}

TEST_CASE("psnr on 8-bit images and region masks") {
  const RgbImage a = solid(4, 4, 100);
  RgbImage b = a;
  CHECK(std::isinf(psnr(a, b)));
  for (auto& v : b.pixels) v = 101;
  CHECK(psnr(a, b) == doctest::Approx(10 * std::log10(255.0 * 255.0)));
  ElementSet es{"x", 4, 4, {{0, {0, 0, 2, 2}, 1.0}}};
  RgbImage c = a;
  c.at(3, 3, 0) = 110;
  const auto r = region_fidelity(a, c, es, 0.5, "task");
  CHECK(std::isinf(r.psnr_in_bbox));
  CHECK(r.psnr_background == doctest::Approx(10 * std::log10(255.0 * 255.0 / (100.0 / 36))));
  const auto mask = object_mask(es, 4, 4);
  CHECK(std::count(mask.begin(), mask.end(), 1) == 4);
  ElementSet none{"y", 4, 4, {}};
  CHECK(std::isnan(region_fidelity(a, c, none, 0.5, "full").psnr_in_bbox));
}

TEST_CASE("keep policies") {
  GroupTable t;
  t.rows = 1;
  t.cols = 3;
  t.groups = {{0, kBackgroundLabel, {}, {0}}, {1, 2, {}, {1}}, {2, 0, {}, {2}}};
  CHECK(keep_set(KeepPolicy::kFull, t) == std::set<std::uint16_t>{0, 1, 2});
  CHECK(keep_set(KeepPolicy::kTask, t) == std::set<std::uint16_t>{1, 2});
  CHECK(keep_set(KeepPolicy::kBackground, t) == std::set<std::uint16_t>{0});
  CHECK(parse_keep_policy("background-only") == KeepPolicy::kBackground);
  CHECK_THROWS_AS(parse_keep_policy("some"), ValidationError);
}

TEST_CASE("pipeline round trip, partial extraction and model binding") {
  ModelConfig cfg = ModelConfig::tiny();
  const Model model(cfg);
  const Pipeline pipe(model);
  SceneOptions so;
  so.width = 70;
  so.height = 50;
  const Scene scene = generate_scene(so, 4, "scene");
  ElementSet es{"scene", 70, 50, {{0, {0, 0, 16, 32}, 0.9}, {1, {40, 20, 70, 50}, 0.7}}};
  const ImageTensor x = to_tensor(scene.image);
  const Container full = pipe.encode(x, es, KeepPolicy::kFull);
  CHECK(full.header.width == 70);
  CHECK(full.header.pad_right == 58);
  CHECK(full.header.pad_bottom == 14);
  CHECK(full.header.model_id == model.id());
  const Bytes bytes = serialize_container(full);
  const auto a = pipe.decode(parse_container(bytes));
  const auto b = pipe.decode(parse_container(bytes));
  CHECK(a.image.data == b.image.data);
  CHECK(a.image.height() == 50);
  CHECK(a.image.width() == 70);

  for (const std::set<std::uint16_t>& keep : {std::set<std::uint16_t>{0}, std::set<std::uint16_t>{1, 2}}) {
    DecodeOptions opt;
    opt.keep = keep;
    const auto direct = pipe.decode(full, opt);
    const auto extracted = pipe.decode(parse_container(extract_partial(bytes, keep)));
    CHECK(direct.image.data == extracted.image.data);
    CHECK(serialize_container(pipe.encode(x, es, keep)) == extract_partial(bytes, keep));
  }

  ModelConfig other = cfg;
  other.init_seed = 9;
  const Model m2(other);
  CHECK_THROWS_AS(Pipeline(m2).decode(full), ValidationError);
}

TEST_CASE("evaluation rows and the aggregate use total bits over total pixels") {
  const Model model(ModelConfig::tiny());
  const Pipeline pipe(model);
  TaskSpec task{"t", "d", {"ellipse", "rectangle", "triangle"}};
  std::vector<EvalImage> images;
  SceneOptions so;
  for (int i = 0; i < 3; ++i) {
    so.width = 64 + 16 * i;
    so.height = 48 + 8 * i;
    images.push_back({"img" + std::to_string(i), generate_scene(so, i, "img").image});
  }
  const auto rows = evaluate(pipe, images, task, HeuristicProvider{}, EvalOptions{});
  REQUIRE(rows.size() == 4);
  std::size_t bytes = 0, pixels = 0;
  for (int i = 0; i < 3; ++i) {
    CHECK_FALSE(rows[i].failed);
    bytes += rows[i].bytes;
    pixels += rows[i].pixels;
  }
  CHECK(rows[3].image_id == "aggregate");
  CHECK(rows[3].bpp == 8.0 * bytes / pixels);
  const auto csv = fs::temp_directory_path() / "discover_eval.csv";
  write_eval_csv(rows, csv);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("image_id,keep,status,pixels,bytes,bpp,psnr", 0) == 0);

  struct Broken : GroundingProvider {
    std::vector<RawDetection> detect(const RgbImage&, const std::string&, const TaskSpec&) const override {
      throw TransportError("offline");
    }
  };
  const auto failed = evaluate(pipe, images, task, Broken{}, EvalOptions{});
  CHECK(failed[0].failed);
  CHECK(failed.back().failed);
}

TEST_CASE("rd csv round trip and plotting") {
  const auto path = fs::temp_directory_path() / "discover_rd.csv";
  write_rd_csv({curve("ours", {0.1, 0.2}, {30, 32}), curve("anchor", {0.15, 0.3, 0.5}, {29, 31, 33})}, path);
  const auto back = read_rd_csv(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].codec_name == "ours");
  CHECK(back[1].points.size() == 3);
  CHECK(back[1].points[2].metric == 33);
  CHECK(back[0].metric_name == "psnr");

  std::ofstream(path) << "codec,rate,psnr\nx,1,2\n";
  CHECK_THROWS_AS(read_rd_csv(path), ParseError);
  std::ofstream(path) << "codec,bpp,psnr\nx,abc,2\n";
  CHECK_THROWS_AS(read_rd_csv(path), ParseError);

  const RgbImage img = plot_rd(back, {320, 240, "rd"});
  CHECK(img.width == 320);
  CHECK(img.height == 240);
  std::size_t colored = 0;
  for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
    colored += img.pixels[i] != img.pixels[i + 1] || img.pixels[i + 1] != img.pixels[i + 2];
  }
  CHECK(colored > 100);
  CHECK_THROWS_AS(plot_rd({}), ValidationError);
}
