// SPDX-License-Identifier: Apache-2.0
// discover: command-line front end for labels, grounding, coding, training and evaluation.

#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>

#include "discover/conformance.hpp"
#include "discover/errors.hpp"
#include "discover/evaluation.hpp"
#include "discover/fixtures.hpp"
#include "discover/training.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace discover;

namespace {

// Keys: model, labels, annotations, provider, score_threshold, steps, seed, mode.
struct Settings {
  nlohmann::json json = nlohmann::json::object();

  template <typename T>
  void fill(T& target, const char* key) const {
    if (json.contains(key)) target = json.at(key).get<T>();
  }
};

Settings load_settings(const std::string& flag_path) {
  std::string path = flag_path;
  if (path.empty()) {
    if (const char* env = std::getenv("DSCV_CONFIG")) path = env;
  }
  Settings s;
  if (path.empty()) return s;
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    s.json = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config " + path + ": " + e.what());
  }
  return s;
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ValidationError(std::string("missing ") + what);
  if (!fs::exists(path)) throw IoError(std::string(what) + " " + path + " does not exist");
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
}

std::unique_ptr<GroundingProvider> make_provider(const std::string& provider, const std::string& annotations) {
  if (!annotations.empty()) {
    require_file(annotations, "annotations");
    return std::make_unique<FileAnnotationProvider>(annotations);
  }
  if (provider.empty()) throw ValidationError("missing --annotations or --provider");
  if (provider == "heuristic") return std::make_unique<HeuristicProvider>();
  if (provider.rfind("http://", 0) == 0 || provider.rfind("https://", 0) == 0) {
    return std::make_unique<RemoteProvider>(provider, std::chrono::milliseconds(30000));
  }
  const std::string path = provider.rfind("file:", 0) == 0 ? provider.substr(5) : provider;
  require_file(path, "annotations");
  return std::make_unique<FileAnnotationProvider>(path);
}

/// Task labels from --labels, or the distinct labels of an annotation file.
TaskSpec resolve_task(const std::string& labels, const std::string& annotations, const std::string& image_id) {
  if (!labels.empty()) {
    require_file(labels, "labels");
    return load_labels(labels);
  }
  if (annotations.empty()) throw ValidationError("missing --labels");
  fs::path file = annotations;
  if (fs::is_directory(file)) {
    if (fs::exists(file / "labels.json")) return load_labels(file / "labels.json");
    file /= image_id + ".json";
  }
  const Annotation a = load_annotation(file);
  TaskSpec task;
  task.task_name = "annotation";
  task.task_description = "labels present in " + file.filename().string();
  for (const auto& d : a.detections) {
    const std::string l = normalize_label(d.label);
    if (std::find(task.label_list.begin(), task.label_list.end(), l) == task.label_list.end()) task.label_list.push_back(l);
  }
  std::sort(task.label_list.begin(), task.label_list.end());
  if (task.label_list.empty()) task.label_list.push_back("object");
  return task;
}

std::set<std::uint16_t> parse_groups(const std::string& text) {
  std::set<std::uint16_t> out;
  if (text.empty()) return out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(tok, &used);
      if (used != tok.size() || v < 0 || v > 0xFFFF) throw std::out_of_range(tok);
      out.insert(static_cast<std::uint16_t>(v));
    } catch (const std::exception&) {
      throw ValidationError("bad group id '" + tok + "'");
    }
  }
  return out;
}

std::vector<EvalImage> load_images(const std::string& dir) {
  require_file(dir, "image directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no PNG images in " + dir);
  std::vector<EvalImage> out;
  for (const auto& f : files) out.push_back({f.stem().string(), load_png(f)});
  return out;
}

int steps_for(const std::string& mode, int steps) {
  if (steps > 0) return steps;
  if (mode == "human") return kHumanSteps;
  if (mode == "machine" || mode.empty()) return kMachineSteps;
  throw ValidationError("unknown mode '" + mode + "' (machine, human)");
}

std::string two_decimals(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"discover: semantic-disentangled image coding with a diffusion decoder"};
  app.require_subcommand(1);
  std::string config_path;
  bool verbose = false;
  app.add_option("--config", config_path, "JSON config (default: $DSCV_CONFIG)");
  app.add_flag("-v,--verbose", verbose, "debug logging");
  std::function<int(const Settings&)> action;

  // labels
  auto* labels = app.add_subcommand("labels", "task label lists");
  labels->require_subcommand(1);
  std::string lab_file, lab_task, lab_desc, lab_out;
  auto* lab_render = labels->add_subcommand("render", "print the label-generation prompt");
  lab_render->add_option("--task", lab_task, "task name");
  lab_render->add_option("--description", lab_desc, "task description");
  lab_render->add_option("--labels", lab_file, "label file supplying task and description");
  lab_render->callback([&] {
    action = [&](const Settings&) {
      TaskSpec t;
      if (!lab_file.empty()) {
        require_file(lab_file, "labels");
        t = load_labels(lab_file);
      }
      if (!lab_task.empty()) t.task_name = lab_task;
      if (!lab_desc.empty()) t.task_description = lab_desc;
      if (t.task_name.empty()) throw ValidationError("missing --task");
      std::cout << render_prompt(t);
      return 0;
    };
  });
  auto* lab_load = labels->add_subcommand("load", "validate and normalize a label file");
  lab_load->add_option("file", lab_file, "label file")->required();
  lab_load->add_option("--out", lab_out, "write the normalized list here instead of stdout");
  lab_load->callback([&] {
    action = [&](const Settings&) {
      require_file(lab_file, "labels");
      const std::string json = labels_to_json(load_labels(lab_file));
      if (lab_out.empty()) {
        std::cout << json << '\n';
      } else {
        write_text(lab_out, json + "\n");
      }
      return 0;
    };
  });

  // shared coding options
  std::string image, model_path, annotations, provider, labels_path, out, in, keep = "full", groups, mode, dump_z0;
  double threshold = -1.0;
  int steps = 0;
  std::uint64_t seed = 0;
  bool seed_set = false, stochastic = false;

  auto* ground_cmd = app.add_subcommand("ground", "detect task elements in an image");
  ground_cmd->add_option("--image", image, "input PNG")->required();
  ground_cmd->add_option("--labels", labels_path, "label file");
  ground_cmd->add_option("--annotations", annotations, "annotation file or directory");
  ground_cmd->add_option("--provider", provider, "heuristic | file:<path> | http(s)://endpoint");
  ground_cmd->add_option("--threshold", threshold, "score threshold");
  ground_cmd->add_option("--out", out, "output element JSON (stdout if omitted)");
  ground_cmd->callback([&] {
    action = [&](const Settings& s) {
      s.fill(labels_path, "labels");
      if (annotations.empty() && provider.empty()) s.fill(provider, "provider");
      if (threshold < 0) threshold = kDefaultScoreThreshold, s.fill(threshold, "score_threshold");
      require_file(image, "image");
      const std::string id = fs::path(image).stem().string();
      const TaskSpec task = resolve_task(labels_path, annotations, id);
      const auto prov = make_provider(provider, annotations);
      const ElementSet es = ground(load_png(image), id, task, *prov, threshold);
      const std::string json = annotation_to_json(es, task);
      if (out.empty()) {
        std::cout << json << '\n';
      } else {
        write_text(out, json + "\n");
      }
      return 0;
    };
  });

  auto* encode_cmd = app.add_subcommand("encode", "compress an image into a container");
  encode_cmd->add_option("--image", image, "input PNG")->required();
  encode_cmd->add_option("--model", model_path, "model file");
  encode_cmd->add_option("--labels", labels_path, "label file");
  encode_cmd->add_option("--annotations", annotations, "annotation file or directory");
  encode_cmd->add_option("--provider", provider, "heuristic | file:<path> | http(s)://endpoint");
  encode_cmd->add_option("--threshold", threshold, "score threshold");
  encode_cmd->add_option("--keep", keep, "full | task | background-only")->check(CLI::IsMember({"full", "task", "background-only", "background"}));
  encode_cmd->add_option("--groups", groups, "explicit comma-separated group ids (overrides --keep)");
  encode_cmd->add_option("--out", out, "output container")->required();
  encode_cmd->callback([&] {
    action = [&](const Settings& s) {
      s.fill(model_path, "model");
      s.fill(labels_path, "labels");
      if (annotations.empty() && provider.empty()) s.fill(annotations, "annotations");
      if (annotations.empty() && provider.empty()) s.fill(provider, "provider");
      if (threshold < 0) threshold = kDefaultScoreThreshold, s.fill(threshold, "score_threshold");
      require_file(image, "image");
      require_file(model_path, "model");
      const std::string id = fs::path(image).stem().string();
      const TaskSpec task = resolve_task(labels_path, annotations, id);
      const auto prov = make_provider(provider, annotations);
      const RgbImage rgb = load_png(image);
      const ElementSet es = ground(rgb, id, task, *prov, threshold);
      const Model model = Model::load(model_path);
      const Pipeline pipeline(model);
      const Container c = groups.empty() ? pipeline.encode(to_tensor(rgb), es, parse_keep_policy(keep))
                                         : pipeline.encode(to_tensor(rgb), es, parse_groups(groups));
      const Bytes bytes = serialize_container(c);
      write_file(out, bytes);
      const auto sec = section_sizes(c);
      spdlog::info("{} groups ({} sent), {} bytes, {:.4f} bpp [header {} table {} z {} y {}]", c.entries.size(),
                   c.transmitted().size(), bytes.size(), bpp_from_bytes(bytes.size(), static_cast<std::size_t>(rgb.width) * rgb.height),
                   sec.header, sec.table, sec.z, sec.y);
      return 0;
    };
  });

  auto* extract_cmd = app.add_subcommand("extract", "keep a subset of groups without re-encoding");
  extract_cmd->add_option("--in", in, "input container")->required();
  extract_cmd->add_option("--groups", groups, "comma-separated group ids")->required();
  extract_cmd->add_option("--out", out, "output container")->required();
  extract_cmd->callback([&] {
    action = [&](const Settings&) {
      require_file(in, "container");
      write_file(out, extract_partial(read_file(in), parse_groups(groups)));
      return 0;
    };
  });

  auto* decode_cmd = app.add_subcommand("decode", "reconstruct an image from a container");
  decode_cmd->add_option("input", in, "container file");
  decode_cmd->add_option("--in", in, "container file");
  decode_cmd->add_option("--model", model_path, "model file");
  decode_cmd->add_option("--out", out, "output PNG (default: <input>.png)");
  decode_cmd->add_option("--mode", mode, "machine (8 steps) | human (50 steps)");
  decode_cmd->add_option("--steps", steps, "sampling steps (overrides --mode)");
  decode_cmd->add_option("--seed", seed, "sampling seed")->each([&](const std::string&) { seed_set = true; });
  decode_cmd->add_flag("--stochastic", stochastic, "add posterior noise between steps");
  decode_cmd->add_option("--dump-z0", dump_z0, "write z_0 as a model-format archive");
  decode_cmd->callback([&] {
    action = [&](const Settings& s) {
      s.fill(model_path, "model");
      if (mode.empty()) s.fill(mode, "mode");
      if (steps == 0) s.fill(steps, "steps");
      if (!seed_set) s.fill(seed, "seed");
      require_file(in, "container");
      require_file(model_path, "model");
      const Model model = Model::load(model_path);
      const Pipeline pipeline(model);
      const Container c = parse_container(read_file(in));
      DecodeOptions opt;
      opt.steps = steps_for(mode, steps);
      opt.seed = seed;
      opt.stochastic = stochastic;
      const auto result = pipeline.decode(c, opt);
      const fs::path target = out.empty() ? fs::path(in).replace_extension(".png") : fs::path(out);
      save_png(to_rgb(result.image), target);
      if (!dump_z0.empty()) {
        Archive a;
        a.config_json = model.config().to_json();
        a.arrays.emplace_back("z0", result.z0.data);
        a.arrays.emplace_back("zc_hat", result.zc_hat.data);
        save_archive(a, dump_z0);
      }
      spdlog::info("decoded {} groups into {}", c.transmitted().size(), target.string());
      return 0;
    };
  });

  // train
  auto* train_cmd = app.add_subcommand("train", "run one optimisation stage");
  std::string stage_name_arg, data_dir, train_config, init = "desk";
  std::optional<double> lambda_rate;
  std::optional<int> iterations, batch, crop;
  bool resume = false;
  train_cmd->add_option("stage", stage_name_arg, "vae | denoiser | stage1 | stage2")
      ->required()
      ->check(CLI::IsMember({"vae", "denoiser", "stage1", "stage2"}));
  train_cmd->add_option("--data", data_dir, "directory of training PNGs")->required();
  train_cmd->add_option("--model", model_path, "starting model (fresh model when omitted)");
  train_cmd->add_option("--init", init, "fresh model geometry: desk | tiny")->check(CLI::IsMember({"desk", "tiny"}));
  train_cmd->add_option("--train-config", train_config, "TrainConfig JSON");
  train_cmd->add_option("--lambda-rate", lambda_rate, "rate weight");
  train_cmd->add_option("--iterations", iterations, "iterations");
  train_cmd->add_option("--batch", batch, "batch size");
  train_cmd->add_option("--crop", crop, "crop size");
  train_cmd->add_option("--seed", seed, "seed")->each([&](const std::string&) { seed_set = true; });
  train_cmd->add_option("--out", out, "output directory")->required();
  train_cmd->add_flag("--resume", resume, "continue from <out>/checkpoint.bin");
  train_cmd->callback([&] {
    action = [&](const Settings& s) {
      TrainConfig tc;
      if (s.json.contains("train")) tc = TrainConfig::from_json(s.json.at("train").dump());
      if (!train_config.empty()) {
        require_file(train_config, "train config");
        tc = TrainConfig::from_json(read_text(train_config));
      }
      if (lambda_rate) tc.lambda_rate = *lambda_rate;
      if (iterations) tc.iterations = *iterations;
      if (batch) tc.batch_size = *batch;
      if (crop) tc.crop = *crop;
      if (seed_set) tc.seed = seed;
      Model model = [&] {
        if (model_path.empty()) return Model(init == "tiny" ? ModelConfig::tiny() : ModelConfig::desk());
        require_file(model_path, "model");
        return Model::load(model_path);
      }();
      require_file(data_dir, "data directory");
      const auto data = ImageDataset::from_directory(data_dir, tc.crop);
      TrainOptions opt;
      opt.out_dir = out;
      opt.resume = resume;
      const auto report = train(model, data, tc, parse_stage(stage_name_arg), opt);
      write_text(fs::path(out) / ("train_config_" + stage_name_arg + ".json"), tc.to_json() + "\n");
      if (!report.rows.empty()) {
        const auto& l = report.rows.back().loss;
        spdlog::info("{} done: total={:.5f} bpp={:.4f} -> {}", stage_name_arg, l.total, l.bpp(),
                     report.model_path.string());
      }
      return 0;
    };
  });

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "rate-distortion evaluation");
  eval_cmd->require_subcommand(1);
  std::vector<std::string> models;
  std::string images_dir, name = "ours", metric = "psnr", anchor, test;
  bool metric_delta = false;
  auto add_eval_inputs = [&](CLI::App* c) {
    c->add_option("--images", images_dir, "directory of PNGs")->required();
    c->add_option("--labels", labels_path, "label file");
    c->add_option("--annotations", annotations, "annotation directory");
    c->add_option("--provider", provider, "heuristic | file:<path> | http(s)://endpoint");
    c->add_option("--threshold", threshold, "score threshold");
    c->add_option("--keep", keep, "full | task | background-only")
        ->check(CLI::IsMember({"full", "task", "background-only", "background"}));
    c->add_option("--mode", mode, "machine | human");
    c->add_option("--steps", steps, "sampling steps");
    c->add_option("--seed", seed, "sampling seed")->each([&](const std::string&) { seed_set = true; });
  };
  auto eval_setup = [&](const Settings& s) {
    s.fill(labels_path, "labels");
    if (annotations.empty() && provider.empty()) s.fill(annotations, "annotations");
    if (annotations.empty() && provider.empty()) s.fill(provider, "provider");
    if (threshold < 0) threshold = kDefaultScoreThreshold, s.fill(threshold, "score_threshold");
    if (mode.empty()) s.fill(mode, "mode");
    if (steps == 0) s.fill(steps, "steps");
    if (!seed_set) s.fill(seed, "seed");
    EvalOptions eo;
    eo.keep = parse_keep_policy(keep);
    eo.decode.steps = steps_for(mode, steps);
    eo.decode.seed = seed;
    eo.score_threshold = threshold;
    return eo;
  };

  auto* eval_report = eval_cmd->add_subcommand("report", "per-image bpp / PSNR / region fidelity");
  add_eval_inputs(eval_report);
  eval_report->add_option("--model", model_path, "model file");
  eval_report->add_option("--out", out, "report CSV")->required();
  eval_report->callback([&] {
    action = [&](const Settings& s) {
      const EvalOptions eo = eval_setup(s);
      s.fill(model_path, "model");
      require_file(model_path, "model");
      const auto imgs = load_images(images_dir);
      const TaskSpec task = resolve_task(labels_path, annotations, imgs.front().image_id);
      const auto prov = make_provider(provider, annotations);
      const Model model = Model::load(model_path);
      const auto rows = evaluate(Pipeline(model), imgs, task, *prov, eo);
      write_eval_csv(rows, out);
      const auto& agg = rows.back();
      std::cout << "bpp " << agg.bpp << " psnr " << agg.psnr << " psnr_in_bbox " << agg.psnr_in_bbox
                << " psnr_background " << agg.psnr_background << '\n';
      return agg.failed ? 1 : 0;
    };
  });

  auto* eval_rd = eval_cmd->add_subcommand("rd", "one RD point per model");
  add_eval_inputs(eval_rd);
  eval_rd->add_option("--model", models, "model files (one point each)")->required();
  eval_rd->add_option("--name", name, "codec name in the CSV");
  eval_rd->add_option("--metric", metric, "psnr | psnr_in_bbox | psnr_background")
      ->check(CLI::IsMember({"psnr", "psnr_in_bbox", "psnr_background"}));
  eval_rd->add_option("--out", out, "RD CSV")->required();
  eval_rd->callback([&] {
    action = [&](const Settings& s) {
      const EvalOptions eo = eval_setup(s);
      const auto imgs = load_images(images_dir);
      const TaskSpec task = resolve_task(labels_path, annotations, imgs.front().image_id);
      const auto prov = make_provider(provider, annotations);
      RDCurve curve{name, metric, {}};
      bool failed = false;
      for (const auto& m : models) {
        require_file(m, "model");
        const Model model = Model::load(m);
        const auto rows = evaluate(Pipeline(model), imgs, task, *prov, eo);
        const auto& agg = rows.back();
        failed = failed || agg.failed;
        const double v = metric == "psnr" ? agg.psnr : metric == "psnr_in_bbox" ? agg.psnr_in_bbox : agg.psnr_background;
        curve.points.push_back({agg.bpp, v});
        spdlog::info("{}: bpp {:.4f} {} {:.3f}", m, agg.bpp, metric, v);
      }
      std::sort(curve.points.begin(), curve.points.end(),
                [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
      write_rd_csv({curve}, out);
      return failed ? 1 : 0;
    };
  });

  auto* eval_bd = eval_cmd->add_subcommand("bd", "Bjontegaard delta of test against anchor");
  eval_bd->add_option("--anchor", anchor, "anchor RD CSV")->required();
  eval_bd->add_option("--test", test, "test RD CSV")->required();
  eval_bd->add_flag("--metric-delta", metric_delta, "report the metric delta instead of the rate change");
  eval_bd->callback([&] {
    action = [&](const Settings&) {
      require_file(anchor, "anchor");
      require_file(test, "test");
      const auto a = read_rd_csv(anchor);
      const auto t = read_rd_csv(test);
      for (const auto& curve : t) {
        const double v = metric_delta ? bd_metric(a.front(), curve) : bd_rate(a.front(), curve);
        const std::string text = two_decimals(v) + (metric_delta ? "" : "%");
        if (t.size() == 1) {
          std::cout << text << '\n';
        } else {
          std::cout << curve.codec_name << ": " << text << '\n';
        }
      }
      return 0;
    };
  });

  // plot
  auto* plot_cmd = app.add_subcommand("plot", "render figures");
  plot_cmd->require_subcommand(1);
  std::vector<std::string> plot_inputs;
  std::string title;
  int width = 640, height = 480;
  auto* plot_rd_cmd = plot_cmd->add_subcommand("rd", "RD curves to PNG");
  plot_rd_cmd->add_option("--in", plot_inputs, "RD CSV files")->required();
  plot_rd_cmd->add_option("--out", out, "output PNG")->required();
  plot_rd_cmd->add_option("--title", title, "title");
  plot_rd_cmd->add_option("--width", width, "pixels");
  plot_rd_cmd->add_option("--height", height, "pixels");
  plot_rd_cmd->callback([&] {
    action = [&](const Settings&) {
      std::vector<RDCurve> curves;
      for (const auto& f : plot_inputs) {
        require_file(f, "RD CSV");
        for (auto& c : read_rd_csv(f)) curves.push_back(std::move(c));
      }
      save_png(plot_rd(curves, {width, height, title}), out);
      return 0;
    };
  });

  // fixtures
  auto* fixtures = app.add_subcommand("fixtures", "synthetic annotated scenes");
  fixtures->require_subcommand(1);
  int count = 200, size = 96;
  auto* fx_gen = fixtures->add_subcommand("generate", "write PNG + annotation pairs and labels.json");
  fx_gen->add_option("--out", out, "output directory")->required();
  fx_gen->add_option("--count", count, "number of scenes")->check(CLI::PositiveNumber);
  fx_gen->add_option("--size", size, "square image size")->check(CLI::PositiveNumber);
  fx_gen->add_option("--seed", seed, "seed");
  fx_gen->callback([&] {
    action = [&](const Settings&) {
      SceneOptions so;
      so.width = so.height = size;
      write_fixture_set(out, count, so, seed);
      return 0;
    };
  });

  // conformance
  auto* conf = app.add_subcommand("conformance", "coder conformance corpus");
  conf->require_subcommand(1);
  auto* conf_export = conf->add_subcommand("export", "write fuzzed (tables, symbols, payload) cases");
  std::size_t cases = 10000;
  conf_export->add_option("--out", out, "corpus file")->required();
  conf_export->add_option("--count", cases, "number of cases");
  conf_export->add_option("--seed", seed, "seed");
  conf_export->callback([&] {
    action = [&](const Settings&) {
      write_file(out, coding::serialize_corpus(coding::make_conformance_corpus(cases, seed)));
      return 0;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
  try {
    const Settings settings = load_settings(config_path);
    return action ? action(settings) : 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
