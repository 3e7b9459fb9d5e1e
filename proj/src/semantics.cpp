// SPDX-License-Identifier: Apache-2.0
#include "discover/semantics.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

#include "discover/errors.hpp"
#include "httplib.h"
#include "json.hpp"

namespace discover {
namespace {

using nlohmann::json;

json parse_json(const std::string& text, const char* what) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw ParseError(std::string(what) + " is empty");
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string(what) + ": " + e.what());
  }
}

std::string read_text(const std::filesystem::path& path) {
  const Bytes b = read_file(path);
  return std::string(b.begin(), b.end());
}

}  // namespace

std::string normalize_label(const std::string& label) {
  const auto begin = label.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = label.find_last_not_of(" \t\r\n");
  std::string out = label.substr(begin, end - begin + 1);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

std::optional<int> TaskSpec::find(const std::string& label) const {
  const std::string n = normalize_label(label);
  for (std::size_t i = 0; i < label_list.size(); ++i) {
    if (label_list[i] == n) return static_cast<int>(i);
  }
  return std::nullopt;
}

void TaskSpec::validate() const {
  if (label_list.empty()) throw ValidationError("task '" + task_name + "' has no labels");
  std::set<std::string> seen;
  for (const auto& l : label_list) {
    if (l.empty() || l != normalize_label(l)) throw ValidationError("label '" + l + "' is not normalized");
    if (!seen.insert(l).second) throw ValidationError("duplicate label '" + l + "'");
  }
}

void ElementSet::canonicalize() {
  std::sort(elements.begin(), elements.end(), [](const SemanticElement& a, const SemanticElement& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.label_id != b.label_id) return a.label_id < b.label_id;
    return a.bbox < b.bbox;
  });
}

void ElementSet::validate() const {
  if (width <= 0 || height <= 0) throw ValidationError("element set has no image size");
  for (const auto& e : elements) {
    const auto& b = e.bbox;
    if (!(0 <= b.x0 && b.x0 < b.x1 && b.x1 <= width && 0 <= b.y0 && b.y0 < b.y1 && b.y1 <= height)) {
      throw ValidationError("bbox outside image");
    }
    if (!(e.score >= 0.0 && e.score <= 1.0)) throw ValidationError("score outside [0, 1]");
  }
}

std::string render_prompt(const TaskSpec& task) {
  if (task.task_name.empty()) throw ValidationError("task name is empty");
  if (task.task_description.empty()) throw ValidationError("task description is empty");
  std::ostringstream out;
  out << "1. Suppose you are an AI assistant and now need to generate task-related object labels based on the task.\n"
      << "2. The number of labels should not be fewer than 100, and the labels should cover a wide range of "
         "categories while maintaining appropriate granularity.\n"
      << "3. First, you should determine the granularity required by the task, and then generate the "
         "corresponding labels.\n"
      << "4. For example:\n"
      << "   - For some tasks, something that can't be detected, such as the sky or rivers, shouldn't be included "
         "as labels.\n"
      << "   - For some tasks, it is necessary to include more comprehensive information about the image, and it "
         "needs overly general categories.\n"
      << "5. I am working on the " << task.task_name << " and need a representative label list.\n"
      << "6. The task description is as " << task.task_description << ".\n";
  return out.str();
}

TaskSpec parse_labels(const std::string& json_text) {
  const json j = parse_json(json_text, "label file");
  TaskSpec t;
  try {
    if (!j.is_object() || !j.contains("labels") || !j.at("labels").is_array()) {
      throw ParseError("label file needs a \"labels\" array");
    }
    t.task_name = j.value("task", std::string{});
    t.task_description = j.value("description", std::string{});
    std::set<std::string> seen;
    for (const auto& item : j.at("labels")) {
      const std::string n = normalize_label(item.get<std::string>());
      if (n.empty()) throw ParseError("label file contains an empty label");
      if (!seen.insert(n).second) {
        spdlog::warn("duplicate label '{}' after normalization; keeping first occurrence", n);
        continue;
      }
      t.label_list.push_back(n);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("label file: ") + e.what());
  }
  t.validate();
  return t;
}

TaskSpec load_labels(const std::filesystem::path& path) { return parse_labels(read_text(path)); }

std::string labels_to_json(const TaskSpec& task) {
  nlohmann::ordered_json j;
  j["task"] = task.task_name;
  j["description"] = task.task_description;
  j["labels"] = task.label_list;
  return j.dump(2) + "\n";
}

Annotation parse_annotation(const std::string& json_text) {
  const json j = parse_json(json_text, "annotation");
  Annotation a;
  try {
    a.image_id = j.value("image_id", std::string{});
    a.width = j.at("width").get<int>();
    a.height = j.at("height").get<int>();
    for (const auto& e : j.at("elements")) {
      const auto& b = e.at("bbox");
      if (!b.is_array() || b.size() != 4) throw ParseError("annotation bbox must have 4 numbers");
      a.detections.push_back({e.at("label").get<std::string>(), b[0].get<double>(), b[1].get<double>(),
                              b[2].get<double>(), b[3].get<double>(), e.value("score", 1.0)});
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("annotation: ") + e.what());
  }
  return a;
}

Annotation load_annotation(const std::filesystem::path& path) { return parse_annotation(read_text(path)); }

std::string annotation_to_json(const ElementSet& es, const TaskSpec& task) {
  nlohmann::ordered_json j;
  j["image_id"] = es.image_id;
  j["width"] = es.width;
  j["height"] = es.height;
  j["elements"] = nlohmann::ordered_json::array();
  for (const auto& e : es.elements) {
    nlohmann::ordered_json item;
    item["label"] = task.label_list.at(e.label_id);
    item["bbox"] = {e.bbox.x0, e.bbox.y0, e.bbox.x1, e.bbox.y1};
    item["score"] = e.score;
    j["elements"].push_back(item);
  }
  return j.dump(2) + "\n";
}

std::vector<RawDetection> FileAnnotationProvider::detect(const RgbImage& image, const std::string& image_id,
                                                         const TaskSpec&) const {
  const auto path = std::filesystem::is_directory(source_) ? source_ / (image_id + ".json") : source_;
  const Annotation a = load_annotation(path);
  if (a.width != image.width || a.height != image.height) {
    throw ValidationError("annotation " + path.string() + " is for a " + std::to_string(a.width) + "x" +
                          std::to_string(a.height) + " image");
  }
  return a.detections;
}

std::vector<RawDetection> HeuristicProvider::detect(const RgbImage& image, const std::string&,
                                                    const TaskSpec& task) const {
  task.validate();
  return {{task.label_list.front(), static_cast<double>(image.width / 4), static_cast<double>(image.height / 4),
           static_cast<double>(3 * image.width / 4), static_cast<double>(3 * image.height / 4), 1.0}};
}

RemoteProvider::RemoteProvider(std::string endpoint, std::chrono::milliseconds timeout) : timeout_(timeout) {
  const auto scheme = endpoint.find("://");
  const auto slash = endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  base_ = slash == std::string::npos ? endpoint : endpoint.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : endpoint.substr(slash);
  if (base_.empty()) throw ValidationError("remote provider endpoint is empty");
}

std::vector<RawDetection> RemoteProvider::detect(const RgbImage& image, const std::string& image_id,
                                                 const TaskSpec& task) const {
  httplib::Client client(base_);
  if (!client.is_valid()) throw TransportError("invalid endpoint " + base_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);
  nlohmann::ordered_json body;
  body["image_id"] = image_id;
  body["image"] = base64_encode(encode_png(image));
  body["labels"] = task.label_list;
  const auto res = client.Post(path_, body.dump(), "application/json");
  if (!res) throw TransportError("grounding request to " + base_ + path_ + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw TransportError("grounding service returned HTTP " + std::to_string(res->status));
  }
  return parse_annotation(res->body).detections;
}

ElementSet filter_detections(const std::vector<RawDetection>& detections, const std::string& image_id, int width,
                             int height, const TaskSpec& task, double score_threshold) {
  if (!(score_threshold >= 0.0 && score_threshold <= 1.0)) throw ValidationError("score threshold outside [0, 1]");
  ElementSet es{image_id, width, height, {}};
  for (const auto& d : detections) {
    const auto label = task.find(d.label);
    if (!label) {
      spdlog::warn("dropping detection with label '{}' not in the task label list", d.label);
      continue;
    }
    const double score = std::clamp(d.score, 0.0, 1.0);
    PixelBox b{static_cast<int>(std::floor(std::clamp(d.x0, 0.0, static_cast<double>(width)))),
               static_cast<int>(std::floor(std::clamp(d.y0, 0.0, static_cast<double>(height)))),
               static_cast<int>(std::ceil(std::clamp(d.x1, 0.0, static_cast<double>(width)))),
               static_cast<int>(std::ceil(std::clamp(d.y1, 0.0, static_cast<double>(height))))};
    if (b.empty()) continue;
    if (score < score_threshold) continue;
    es.elements.push_back({*label, b, score});
  }
  es.canonicalize();
  return es;
}

ElementSet ground(const RgbImage& image, const std::string& image_id, const TaskSpec& task,
                  const GroundingProvider& provider, double score_threshold) {
  return filter_detections(provider.detect(image, image_id, task), image_id, image.width, image.height, task,
                           score_threshold);
}

}  // namespace discover
