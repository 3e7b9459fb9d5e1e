// SPDX-License-Identifier: Apache-2.0
#include "discover/evaluation.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "discover/errors.hpp"

namespace discover {

KeepPolicy parse_keep_policy(const std::string& name) {
  if (name == "full") return KeepPolicy::kFull;
  if (name == "task") return KeepPolicy::kTask;
  if (name == "background" || name == "background-only") return KeepPolicy::kBackground;
  throw ValidationError("unknown keep policy '" + name + "' (full, task, background-only)");
}

std::string keep_policy_name(KeepPolicy policy) {
  switch (policy) {
    case KeepPolicy::kFull: return "full";
    case KeepPolicy::kTask: return "task";
    case KeepPolicy::kBackground: return "background-only";
  }
  return "?";
}

std::set<std::uint16_t> keep_set(KeepPolicy policy, const GroupTable& table) {
  std::set<std::uint16_t> keep;
  for (const auto& g : table.groups) {
    const bool background = g.group_id == 0;
    if (policy == KeepPolicy::kFull || (policy == KeepPolicy::kTask && !background) ||
        (policy == KeepPolicy::kBackground && background)) {
      keep.insert(g.group_id);
    }
  }
  return keep;
}

Pipeline::Pipeline(const Model& model) : model_(model), id_(model.id()), hyper_cdf_(model.hyper_cdf()) {}

Container Pipeline::encode(const ImageTensor& image, const ElementSet& elements,
                           const std::set<std::uint16_t>& keep) const {
  image.validate();
  if (elements.width != image.width() || elements.height != image.height()) {
    throw ValidationError("element set is for a " + std::to_string(elements.width) + "x" +
                          std::to_string(elements.height) + " image, got " + std::to_string(image.width()) + "x" +
                          std::to_string(image.height()));
  }
  const auto& cfg = model_.config();
  const auto& codec = model_.codec();
  const LatentGrid y = encode_analysis(codec, image);
  const HyperLatent z = hyper_encode(codec, y);
  const EntropyParams params = hyper_decode(codec, z);
  const LatentGrid y_hat = quantize(y, QuantMode::kRound);

  const GroupTable table = build_group_table(elements, cfg.latent_stride, y.rows(), y.cols());
  ContainerHeader h;
  h.width = static_cast<std::uint32_t>(image.width());
  h.height = static_cast<std::uint32_t>(image.height());
  h.pad_right = static_cast<std::uint8_t>(y.pad_right);
  h.pad_bottom = static_cast<std::uint8_t>(y.pad_bottom);
  h.latent_stride = static_cast<std::uint8_t>(cfg.latent_stride);
  h.vae_factor = static_cast<std::uint8_t>(cfg.vae_factor);
  h.model_id = id_;
  h.num_groups = static_cast<std::uint16_t>(table.groups.size());
  coding::EncodeStats stats;
  Container c = encode_container(h, y_hat, z, table, params, hyper_cdf_, keep, &stats);
  if (stats.clamped_symbols > 0) spdlog::warn("{} latent symbols clamped to the coder alphabet", stats.clamped_symbols);
  return c;
}

Container Pipeline::encode(const ImageTensor& image, const ElementSet& elements, KeepPolicy keep) const {
  const auto& cfg = model_.config();
  int pr = 0, pb = 0;
  const int m = cfg.pad_multiple();
  pr = (m - image.width() % m) % m;
  pb = (m - image.height() % m) % m;
  const GroupTable table = build_group_table(elements, cfg.latent_stride, (image.height() + pb) / cfg.latent_stride,
                                             (image.width() + pr) / cfg.latent_stride);
  return encode(image, elements, keep_set(keep, table));
}

DecodeResult Pipeline::decode(const Container& c, const DecodeOptions& options) const {
  c.validate();
  if (c.header.model_id != id_) {
    throw ValidationError("container was encoded with model " + to_hex(c.header.model_id) + ", loaded model is " +
                          to_hex(id_));
  }
  const auto& cfg = model_.config();
  if (c.header.latent_stride != cfg.latent_stride || c.header.vae_factor != cfg.vae_factor) {
    throw ValidationError("container geometry does not match the model");
  }
  const auto& codec = model_.codec();
  const HyperLatent z = decode_hyper_latent(c, hyper_cdf_, cfg.hyper_factor);
  const EntropyParams params = hyper_decode(codec, z);
  const LatentGrid y = decode_latent(c, params, options.keep ? &*options.keep : nullptr);
  DecodeResult out;
  out.zc_hat = decode_synthesis(codec, y, z);
  SampleOptions so;
  so.steps = options.steps;
  so.seed = options.seed;
  so.stochastic = options.stochastic;
  out.z0 = sample(model_.denoiser(), &model_.control(), out.zc_hat, model_.schedule(), so);
  const ImageTensor full = vae_decode(model_.vae(), out.z0);
  out.image.data = crop(full.data, static_cast<int>(c.header.height), static_cast<int>(c.header.width));
  return out;
}

double psnr(const RgbImage& reference, const RgbImage& test, const std::vector<std::uint8_t>* mask) {
  if (reference.width != test.width || reference.height != test.height) {
    throw ContractError("psnr: image sizes differ");
  }
  const std::size_t n = static_cast<std::size_t>(reference.width) * reference.height;
  if (mask && mask->size() != n) throw ContractError("psnr: mask size mismatch");
  double se = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask && !(*mask)[i]) continue;
    for (int c = 0; c < 3; ++c) {
      const double d = static_cast<double>(reference.pixels[i * 3 + c]) - test.pixels[i * 3 + c];
      se += d * d;
    }
    count += 3;
  }
  if (count == 0) return std::numeric_limits<double>::quiet_NaN();
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / (se / count));
}

std::vector<std::uint8_t> object_mask(const ElementSet& elements, int width, int height) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(width) * height, 0);
  for (const auto& e : elements.elements) {
    const int x0 = std::clamp(e.bbox.x0, 0, width), x1 = std::clamp(e.bbox.x1, 0, width);
    const int y0 = std::clamp(e.bbox.y0, 0, height), y1 = std::clamp(e.bbox.y1, 0, height);
    for (int y = y0; y < y1; ++y) std::fill(mask.begin() + y * width + x0, mask.begin() + y * width + x1, 1);
  }
  return mask;
}

RegionFidelityReport region_fidelity(const RgbImage& reference, const RgbImage& test, const ElementSet& elements,
                                     double bpp, const std::string& keep) {
  auto mask = object_mask(elements, reference.width, reference.height);
  RegionFidelityReport r;
  r.psnr_in_bbox = psnr(reference, test, &mask);
  for (auto& m : mask) m = !m;
  r.psnr_background = psnr(reference, test, &mask);
  r.bpp_transmitted = bpp;
  r.keep = keep;
  return r;
}

std::vector<EvalRow> evaluate(const Pipeline& pipeline, const std::vector<EvalImage>& images, const TaskSpec& task,
                              const GroundingProvider& provider, const EvalOptions& options) {
  std::vector<EvalRow> rows;
  const std::string keep_name = keep_policy_name(options.keep);
  for (const auto& item : images) {
    EvalRow row;
    row.image_id = item.image_id;
    row.keep = keep_name;
    row.pixels = static_cast<std::size_t>(item.image.width) * item.image.height;
    try {
      const ElementSet es = ground(item.image, item.image_id, task, provider, options.score_threshold);
      const ImageTensor x = to_tensor(item.image);
      const Container c = pipeline.encode(x, es, options.keep);
      const Bytes bytes = serialize_container(c);
      const auto decoded = pipeline.decode(c, options.decode);
      const RgbImage rec = to_rgb(decoded.image);
      row.bytes = bytes.size();
      row.bpp = bpp_from_bytes(bytes.size(), row.pixels);
      row.psnr = psnr(item.image, rec);
      const auto region = region_fidelity(item.image, rec, es, row.bpp, keep_name);
      row.psnr_in_bbox = region.psnr_in_bbox;
      row.psnr_background = region.psnr_background;
      row.groups_kept = static_cast<int>(c.transmitted().size());
      row.sections = section_sizes(c);
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
      spdlog::error("{}: {}", item.image_id, e.what());
    }
    rows.push_back(std::move(row));
  }

  EvalRow agg;
  agg.image_id = "aggregate";
  agg.keep = keep_name;
  std::vector<StreamSize> streams;
  double sum_psnr = 0.0, sum_in = 0.0, sum_bg = 0.0;
  int n = 0, n_in = 0, n_bg = 0;
  for (const auto& r : rows) {
    if (r.failed) {
      agg.failed = true;
      continue;
    }
    streams.push_back({r.bytes, r.pixels});
    agg.pixels += r.pixels;
    agg.bytes += r.bytes;
    agg.groups_kept += r.groups_kept;
    agg.sections.header += r.sections.header;
    agg.sections.table += r.sections.table;
    agg.sections.z += r.sections.z;
    agg.sections.y += r.sections.y;
    sum_psnr += r.psnr;
    ++n;
    if (std::isfinite(r.psnr_in_bbox)) sum_in += r.psnr_in_bbox, ++n_in;
    if (std::isfinite(r.psnr_background)) sum_bg += r.psnr_background, ++n_bg;
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  agg.bpp = streams.empty() ? nan : aggregate_bpp(streams);
  agg.psnr = n ? sum_psnr / n : nan;
  agg.psnr_in_bbox = n_in ? sum_in / n_in : nan;
  agg.psnr_background = n_bg ? sum_bg / n_bg : nan;
  if (agg.failed) agg.error = "some images failed";
  rows.push_back(agg);
  return rows;
}

void write_eval_csv(const std::vector<EvalRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(8);
  out << "image_id,keep,status,pixels,bytes,bpp,psnr,psnr_in_bbox,psnr_background,groups_kept,header_bytes,"
         "table_bytes,z_bytes,y_bytes\n";
  for (const auto& r : rows) {
    out << r.image_id << ',' << r.keep << ',' << (r.failed ? "failed" : "ok") << ',' << r.pixels << ',' << r.bytes
        << ',' << r.bpp << ',' << r.psnr << ',' << r.psnr_in_bbox << ',' << r.psnr_background << ','
        << r.groups_kept << ',' << r.sections.header << ',' << r.sections.table << ',' << r.sections.z << ','
        << r.sections.y << '\n';
  }
}

// ---------------------------------------------------------------------------
// Bjontegaard deltas

void RDCurve::validate() const {
  if (points.size() < 2) throw ValidationError("curve '" + codec_name + "' needs at least 2 points");
  int direction = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!(points[i].bpp > 0.0) || !std::isfinite(points[i].bpp) || !std::isfinite(points[i].metric)) {
      throw ValidationError("curve '" + codec_name + "' has a non-positive or non-finite point");
    }
    if (i == 0) continue;
    if (!(points[i].bpp > points[i - 1].bpp)) {
      throw ValidationError("curve '" + codec_name + "' is not strictly increasing in bpp");
    }
    const double dm = points[i].metric - points[i - 1].metric;
    const int d = dm > 0 ? 1 : (dm < 0 ? -1 : 0);
    if (d == 0 || (direction != 0 && d != direction)) {
      throw ValidationError("curve '" + codec_name + "' is not monotone in " + metric_name);
    }
    direction = d;
  }
}

Pchip::Pchip(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
  const std::size_t n = x_.size();
  if (n < 2 || y_.size() != n) throw ContractError("pchip: need >= 2 matching knots");
  for (std::size_t i = 1; i < n; ++i) {
    if (!(x_[i] > x_[i - 1])) throw ContractError("pchip: knots must be strictly increasing");
  }
  std::vector<double> h(n - 1), del(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = x_[i + 1] - x_[i];
    del[i] = (y_[i + 1] - y_[i]) / h[i];
  }
  d_.assign(n, 0.0);
  if (n == 2) {
    d_[0] = d_[1] = del[0];
    return;
  }
  for (std::size_t k = 1; k + 1 < n; ++k) {
    if (del[k - 1] * del[k] > 0.0) {
      const double w1 = 2 * h[k] + h[k - 1], w2 = h[k] + 2 * h[k - 1];
      d_[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
    }
  }
  auto edge = [](double h0, double h1, double m0, double m1) {
    double d = ((2 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if (std::signbit(d) != std::signbit(m0) || m0 == 0.0) {
      d = 0.0;
    } else if (std::signbit(m0) != std::signbit(m1) && std::abs(d) > 3 * std::abs(m0)) {
      d = 3 * m0;
    }
    return d;
  };
  d_[0] = edge(h[0], h[1], del[0], del[1]);
  d_[n - 1] = edge(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
}

double Pchip::operator()(double x) const {
  const std::size_t n = x_.size();
  std::size_t k = std::upper_bound(x_.begin(), x_.end(), x) - x_.begin();
  k = std::clamp<std::size_t>(k, 1, n - 1) - 1;
  const double h = x_[k + 1] - x_[k];
  const double t = (x - x_[k]) / h;
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * y_[k] + (t3 - 2 * t2 + t) * h * d_[k] + (-2 * t3 + 3 * t2) * y_[k + 1] +
         (t3 - t2) * h * d_[k + 1];
}

double Pchip::integral(double a, double b) const {
  if (a > b) return -integral(b, a);
  if (a < x_.front() - 1e-12 || b > x_.back() + 1e-12) throw ContractError("pchip: integral outside knot range");
  // Three-point Gauss-Legendre is exact for the cubic pieces.
  static constexpr double kNodes[3] = {-0.7745966692414834, 0.0, 0.7745966692414834};
  static constexpr double kWeights[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < x_.size(); ++k) {
    const double lo = std::max(a, x_[k]), hi = std::min(b, x_[k + 1]);
    if (!(hi > lo)) continue;
    const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    for (int q = 0; q < 3; ++q) total += kWeights[q] * half * (*this)(mid + half * kNodes[q]);
  }
  return total;
}

namespace {

struct Series {
  std::vector<double> x, y;
};

Series make_series(const RDCurve& c, bool rate_on_y) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& p : c.points) {
    const double lr = std::log(p.bpp);
    pts.emplace_back(rate_on_y ? p.metric : lr, rate_on_y ? lr : p.metric);
  }
  std::sort(pts.begin(), pts.end());
  Series s;
  for (const auto& [x, y] : pts) {
    s.x.push_back(x);
    s.y.push_back(y);
  }
  return s;
}

double average_gap(const RDCurve& anchor, const RDCurve& test, bool rate_on_y) {
  anchor.validate();
  test.validate();
  if (anchor.metric_name != test.metric_name) {
    throw ValidationError("curves use different metrics: " + anchor.metric_name + " vs " + test.metric_name);
  }
  const Series a = make_series(anchor, rate_on_y), t = make_series(test, rate_on_y);
  const double lo = std::max(a.x.front(), t.x.front());
  const double hi = std::min(a.x.back(), t.x.back());
  if (!(hi > lo)) {
    throw ValidationError(std::string("curves do not overlap in ") + (rate_on_y ? anchor.metric_name : "rate"));
  }
  const Pchip pa(a.x, a.y), pt(t.x, t.y);
  return (pt.integral(lo, hi) - pa.integral(lo, hi)) / (hi - lo);
}

}  // namespace

double bd_rate(const RDCurve& anchor, const RDCurve& test) {
  return (std::exp(average_gap(anchor, test, true)) - 1.0) * 100.0;
}

double bd_metric(const RDCurve& anchor, const RDCurve& test) { return average_gap(anchor, test, false); }

std::vector<RDCurve> read_rd_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
      cells.push_back(cell);
    }
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty RD file");
  const auto header = split(line);
  if (header.size() != 3 || header[0] != "codec" || header[1] != "bpp") {
    throw ParseError(path.string() + ": header must be codec,bpp,<metric>");
  }
  std::vector<RDCurve> curves;
  std::map<std::string, std::size_t> index;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() != 3) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected 3 columns");
    RDPoint p;
    try {
      std::size_t used = 0;
      p.bpp = std::stod(cells[1], &used);
      if (used != cells[1].size()) throw std::invalid_argument("bpp");
      p.metric = std::stod(cells[2], &used);
      if (used != cells[2].size()) throw std::invalid_argument("metric");
    } catch (const std::exception&) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad number");
    }
    auto [it, inserted] = index.emplace(cells[0], curves.size());
    if (inserted) curves.push_back({cells[0], header[2], {}});
    curves[it->second].points.push_back(p);
  }
  for (auto& c : curves) {
    std::sort(c.points.begin(), c.points.end(), [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
  }
  if (curves.empty()) throw ParseError(path.string() + ": no points");
  return curves;
}

void write_rd_csv(const std::vector<RDCurve>& curves, const std::filesystem::path& path) {
  if (curves.empty()) throw ValidationError("no curves to write");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(10);
  out << "codec,bpp," << curves.front().metric_name << '\n';
  for (const auto& c : curves) {
    for (const auto& p : c.points) out << c.codec_name << ',' << p.bpp << ',' << p.metric << '\n';
  }
}

}  // namespace discover
