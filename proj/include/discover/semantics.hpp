// SPDX-License-Identifier: Apache-2.0
#pragma once

// Task labels, grounded semantic elements and the providers that produce them.

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "discover/image_io.hpp"

namespace discover {

struct TaskSpec {
  std::string task_name;
  std::string task_description;
  std::vector<std::string> label_list;

  /// Index of a normalized label, or nullopt.
  std::optional<int> find(const std::string& label) const;
  void validate() const;
};

/// Trims surrounding whitespace and lowercases ASCII.
std::string normalize_label(const std::string& label);

/// Pixel rectangle, [x0, x1) x [y0, y1).
struct PixelBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool empty() const { return x1 <= x0 || y1 <= y0; }
  friend auto operator<=>(const PixelBox&, const PixelBox&) = default;
};

struct SemanticElement {
  int label_id = 0;
  PixelBox bbox;
  double score = 0.0;

  friend bool operator==(const SemanticElement&, const SemanticElement&) = default;
};

struct ElementSet {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<SemanticElement> elements;

  /// Sorts by descending score, then label_id, then bbox.
  void canonicalize();
  void validate() const;
};

std::string render_prompt(const TaskSpec& task);

/// Label file: {"task": str, "description": str, "labels": [str...]}.
TaskSpec parse_labels(const std::string& json_text);
TaskSpec load_labels(const std::filesystem::path& path);
std::string labels_to_json(const TaskSpec& task);

/// Detection as returned by a provider, before filtering.
struct RawDetection {
  std::string label;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double score = 0.0;
};

struct Annotation {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<RawDetection> detections;
};

/// Annotation file: {"image_id", "width", "height", "elements": [{"label", "bbox", "score"}]}.
Annotation parse_annotation(const std::string& json_text);
Annotation load_annotation(const std::filesystem::path& path);
/// Writes an ElementSet in the annotation schema (labels resolved through `task`).
std::string annotation_to_json(const ElementSet& es, const TaskSpec& task);

class GroundingProvider {
 public:
  virtual ~GroundingProvider() = default;
  virtual std::vector<RawDetection> detect(const RgbImage& image, const std::string& image_id,
                                           const TaskSpec& task) const = 0;
};

/// Reads `<dir>/<image_id>.json`, or a single fixed file.
class FileAnnotationProvider : public GroundingProvider {
 public:
  explicit FileAnnotationProvider(std::filesystem::path source) : source_(std::move(source)) {}
  std::vector<RawDetection> detect(const RgbImage& image, const std::string& image_id,
                                   const TaskSpec& task) const override;

 private:
  std::filesystem::path source_;
};

/// Centered half-size box (W/4, H/4, 3W/4, 3H/4), score 1, first label.
class HeuristicProvider : public GroundingProvider {
 public:
  std::vector<RawDetection> detect(const RgbImage& image, const std::string& image_id,
                                   const TaskSpec& task) const override;
};

/// POSTs {"image_id", "image": base64 PNG, "labels": [...]} to `endpoint` and
/// expects the annotation schema back. Failures raise TransportError.
class RemoteProvider : public GroundingProvider {
 public:
  RemoteProvider(std::string endpoint, std::chrono::milliseconds timeout);
  std::vector<RawDetection> detect(const RgbImage& image, const std::string& image_id,
                                   const TaskSpec& task) const override;

 private:
  std::string base_;
  std::string path_;
  std::chrono::milliseconds timeout_;
};

inline constexpr double kDefaultScoreThreshold = 0.3;

/// Clips to the image, drops unknown labels (with a warning) and empty boxes,
/// keeps score >= threshold and returns the canonical order.
ElementSet ground(const RgbImage& image, const std::string& image_id, const TaskSpec& task,
                  const GroundingProvider& provider, double score_threshold = kDefaultScoreThreshold);
/// Filtering step of ground() over already-detected boxes.
ElementSet filter_detections(const std::vector<RawDetection>& detections, const std::string& image_id, int width,
                             int height, const TaskSpec& task, double score_threshold);

}  // namespace discover
