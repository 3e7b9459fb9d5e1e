// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>
#include <thread>

#include "discover/errors.hpp"
#include "discover/semantics.hpp"
#include "doctest.h"
#include "httplib.h"
#include "json.hpp"

using namespace discover;
namespace fs = std::filesystem;

namespace {

TaskSpec pets() { return {"detection", "locate objects", {"dog", "cat", "bird"}}; }

RgbImage blank(int w, int h) { return {w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * 3, 128)}; }

fs::path temp_file(const std::string& name, const std::string& text) {
  const auto dir = fs::temp_directory_path() / "discover_semantics_test";
  fs::create_directories(dir);
  const auto p = dir / name;
  std::ofstream(p) << text;
  return p;
}

const char* kThreeBoxes = R"({"image_id": "img", "width": 64, "height": 64, "elements": [
  {"label": "cat", "bbox": [0, 0, 20, 20], "score": 0.5},
  {"label": "Dog", "bbox": [10, 10, 70, 40], "score": 0.9},
  {"label": "bird", "bbox": [30, 30, 40, 50], "score": 0.5}]})";

}  // namespace

TEST_CASE("prompt rendering") {
  const std::string p = render_prompt(pets());
  CHECK(p.find("detection") != std::string::npos);
  CHECK(p.find("locate objects") != std::string::npos);
  CHECK(p.find("should not be fewer than 100") != std::string::npos);
  for (const char* item : {"1. ", "2. ", "3. ", "4. ", "5. ", "6. "}) CHECK(p.find(item) != std::string::npos);
  CHECK(p == render_prompt(pets()));
  TaskSpec t = pets();
  t.task_name = "";
  CHECK_THROWS_AS(render_prompt(t), ValidationError);
  t = pets();
  t.task_description = "";
  CHECK_THROWS_AS(render_prompt(t), ValidationError);
}

TEST_CASE("label files are normalized and deduplicated") {
  const auto t = parse_labels(R"({"task": "d", "description": "x", "labels": ["Dog", " dog ", "cat"]})");
  CHECK(t.label_list == std::vector<std::string>{"dog", "cat"});
  CHECK_THROWS_AS(parse_labels(""), ParseError);
  CHECK_THROWS_AS(parse_labels("{\"labels\": 3}"), ParseError);
  CHECK_THROWS_AS(parse_labels("{\"labels\": []}"), ValidationError);
  CHECK(parse_labels(labels_to_json(t)).label_list == t.label_list);
}

TEST_CASE("the 120-label detection list round-trips") {
  const auto t = load_labels(fs::path(DISCOVER_TEST_DATA) / "detection_labels.json");
  CHECK(t.label_list.size() == 120);
  CHECK(t.label_list.front() == "person");
  CHECK(t.label_list.back() == "pig");
  CHECK(load_labels(temp_file("labels.json", labels_to_json(t))).label_list == t.label_list);
}

TEST_CASE("file provider with thresholds") {
  const auto path = temp_file("img.json", kThreeBoxes);
  const FileAnnotationProvider provider(path);
  const auto all = ground(blank(64, 64), "img", pets(), provider, 0.0);
  REQUIRE(all.elements.size() == 3);
  CHECK(all.elements[0].label_id == 0);
  CHECK(all.elements[0].bbox == PixelBox{10, 10, 64, 40});
  CHECK(all.elements[1].label_id == 1);
  CHECK(all.elements[2].label_id == 2);
  CHECK(ground(blank(64, 64), "img", pets(), provider, 1.0).elements.empty());
  CHECK(ground(blank(64, 64), "img", pets(), provider, 0.6).elements.size() == 1);
  CHECK_THROWS_AS(ground(blank(64, 64), "img", pets(), provider, 1.5), ValidationError);
  CHECK(ground(blank(64, 64), "img", pets(), FileAnnotationProvider(path.parent_path()), 0.0).elements == all.elements);
}

TEST_CASE("grounding drops unknown labels and is order invariant") {
  std::vector<RawDetection> d{{"cat", 0, 0, 10, 10, 0.4}, {"horse", 0, 0, 5, 5, 0.9}, {"dog", 5, 5, 9, 9, 0.4},
                              {"dog", -5, -5, 3, 3, 0.8}, {"bird", 70, 70, 90, 90, 0.9}};
  const auto a = filter_detections(d, "x", 64, 64, pets(), 0.0);
  std::reverse(d.begin(), d.end());
  const auto b = filter_detections(d, "x", 64, 64, pets(), 0.0);
  CHECK(a.elements == b.elements);
  REQUIRE(a.elements.size() == 3);
  CHECK(a.elements[0].bbox == PixelBox{0, 0, 3, 3});
  std::size_t previous = a.elements.size();
  for (double th : {0.1, 0.4, 0.5, 0.8, 0.9}) {
    const auto n = filter_detections(d, "x", 64, 64, pets(), th).elements.size();
    CHECK(n <= previous);
    previous = n;
  }
}

TEST_CASE("heuristic provider returns the centered half box") {
  const auto es = ground(blank(64, 64), "h", pets(), HeuristicProvider{}, 0.3);
  REQUIRE(es.elements.size() == 1);
  CHECK(es.elements[0].bbox == PixelBox{16, 16, 48, 48});
  CHECK(es.elements[0].score == 1.0);
  CHECK(es.elements[0].label_id == 0);
}

TEST_CASE("remote provider talks the annotation schema over http") {
  httplib::Server server;
  std::string seen_labels;
  server.Post("/ground", [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    seen_labels = body.at("labels").dump();
    CHECK_FALSE(body.at("image").get<std::string>().empty());
    res.set_content(kThreeBoxes, "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  const RemoteProvider provider("http://127.0.0.1:" + std::to_string(port) + "/ground", std::chrono::milliseconds(2000));
  const auto es = ground(blank(64, 64), "img", pets(), provider, 0.0);
  server.stop();
  th.join();
  CHECK(es.elements.size() == 3);
  CHECK(seen_labels == R"(["dog","cat","bird"])");

  const RemoteProvider dead("http://127.0.0.1:1/ground", std::chrono::milliseconds(300));
  CHECK_THROWS_AS(ground(blank(64, 64), "img", pets(), dead, 0.0), TransportError);
}

TEST_CASE("annotation output round-trips through the file provider") {
  const auto es = filter_detections({{"bird", 1, 2, 30, 40, 0.75}}, "rt", 64, 64, pets(), 0.0);
  const auto path = temp_file("rt.json", annotation_to_json(es, pets()));
  CHECK(ground(blank(64, 64), "rt", pets(), FileAnnotationProvider(path), 0.0).elements == es.elements);
}
