// SPDX-License-Identifier: Apache-2.0
#pragma once

// Encode/decode pipelines, fidelity metrics and Bjontegaard deltas.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "discover/container.hpp"
#include "discover/image_io.hpp"
#include "discover/model.hpp"
#include "discover/semantics.hpp"

namespace discover {

enum class KeepPolicy { kFull, kTask, kBackground };
KeepPolicy parse_keep_policy(const std::string& name);
std::string keep_policy_name(KeepPolicy policy);
/// full: every group; task: object groups; background: group 0 only.
std::set<std::uint16_t> keep_set(KeepPolicy policy, const GroupTable& table);

struct DecodeOptions {
  int steps = kMachineSteps;
  std::uint64_t seed = 0;
  bool stochastic = false;
  /// Decode only these groups (must be transmitted); all transmitted groups when empty.
  std::optional<std::set<std::uint16_t>> keep;
};

struct DecodeResult {
  ImageTensor image;
  DiffLatent zc_hat;
  DiffLatent z0;
};

/// Binds a model and caches its id for container headers.
class Pipeline {
 public:
  explicit Pipeline(const Model& model);

  const Model& model() const { return model_; }
  const ContentId& model_id() const { return id_; }

  Container encode(const ImageTensor& image, const ElementSet& elements, const std::set<std::uint16_t>& keep) const;
  Container encode(const ImageTensor& image, const ElementSet& elements, KeepPolicy keep) const;
  /// Decodes every transmitted group. Throws ValidationError when the
  /// container names another model.
  DecodeResult decode(const Container& container, const DecodeOptions& options = {}) const;

 private:
  const Model& model_;
  ContentId id_;
  U32Table hyper_cdf_;
};

/// PSNR in dB between 8-bit renderings; `mask` (row-major, H*W) selects pixels.
/// Infinity when identical, NaN when the mask is empty.
double psnr(const RgbImage& reference, const RgbImage& test, const std::vector<std::uint8_t>* mask = nullptr);
/// Union of the object groups' boxes, clipped to the image.
std::vector<std::uint8_t> object_mask(const ElementSet& elements, int width, int height);

struct RegionFidelityReport {
  double psnr_in_bbox = 0.0;
  double psnr_background = 0.0;
  double bpp_transmitted = 0.0;
  std::string keep;
};
RegionFidelityReport region_fidelity(const RgbImage& reference, const RgbImage& test, const ElementSet& elements,
                                     double bpp, const std::string& keep);

struct EvalRow {
  std::string image_id;
  std::string keep;
  bool failed = false;
  std::string error;
  std::size_t pixels = 0;
  std::size_t bytes = 0;
  double bpp = 0.0;
  double psnr = 0.0;
  double psnr_in_bbox = 0.0;
  double psnr_background = 0.0;
  int groups_kept = 0;
  SectionSizes sections;
};

struct EvalImage {
  std::string image_id;
  RgbImage image;
};

struct EvalOptions {
  KeepPolicy keep = KeepPolicy::kFull;
  DecodeOptions decode;
  double score_threshold = kDefaultScoreThreshold;
};

/// One row per image plus a final "aggregate" row (total bits / total pixels,
/// mean PSNR over successful images). Grounding failures mark the row failed.
std::vector<EvalRow> evaluate(const Pipeline& pipeline, const std::vector<EvalImage>& images, const TaskSpec& task,
                              const GroundingProvider& provider, const EvalOptions& options);
/// Header: image_id,keep,status,pixels,bytes,bpp,psnr,psnr_in_bbox,psnr_background,groups_kept,header_bytes,table_bytes,z_bytes,y_bytes
void write_eval_csv(const std::vector<EvalRow>& rows, const std::filesystem::path& path);

struct RDPoint {
  double bpp = 0.0;
  double metric = 0.0;
};

struct RDCurve {
  std::string codec_name;
  std::string metric_name = "psnr";
  std::vector<RDPoint> points;

  /// >= 2 points, bpp > 0 and strictly increasing, metric strictly monotone.
  void validate() const;
};

/// Average rate change of `test` against `anchor` at equal metric, in percent.
double bd_rate(const RDCurve& anchor, const RDCurve& test);
/// Average metric change of `test` against `anchor` at equal log-rate.
double bd_metric(const RDCurve& anchor, const RDCurve& test);

/// Monotone piecewise-cubic Hermite interpolant.
class Pchip {
 public:
  Pchip(std::vector<double> x, std::vector<double> y);
  double operator()(double x) const;
  /// Exact integral over [a, b] within the knot range.
  double integral(double a, double b) const;

 private:
  std::vector<double> x_, y_, d_;
};

/// CSV with header `codec,bpp,<metric>`; rows of one codec form a curve.
std::vector<RDCurve> read_rd_csv(const std::filesystem::path& path);
void write_rd_csv(const std::vector<RDCurve>& curves, const std::filesystem::path& path);

struct PlotOptions {
  int width = 640;
  int height = 480;
  std::string title;
};
/// Renders curves (bpp on x, metric on y) with axes, ticks and a legend.
RgbImage plot_rd(const std::vector<RDCurve>& curves, const PlotOptions& options = {});

}  // namespace discover
