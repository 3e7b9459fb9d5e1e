// SPDX-License-Identifier: Apache-2.0
#include "discover/training.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "discover/disentangle.hpp"
#include "discover/errors.hpp"
#include "discover/image_io.hpp"
#include "discover/optim.hpp"
#include "json.hpp"

namespace discover {
namespace fs = std::filesystem;

void TrainConfig::validate(const ModelConfig& model) const {
  if (!(lambda_rate >= 0.0 && lambda_diff >= 0.0)) throw ValidationError("lambda values must be nonnegative");
  if (!(0.0 <= mask_lo && mask_lo <= mask_hi && mask_hi <= 1.0)) throw ValidationError("mask range must lie within [0, 1]");
  if (crop <= 0 || crop % model.pad_multiple() != 0) {
    throw ValidationError("crop " + std::to_string(crop) + " must be a positive multiple of " +
                          std::to_string(model.pad_multiple()));
  }
  if (batch_size < 1 || iterations < 0) throw ValidationError("batch size must be >= 1 and iterations >= 0");
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
}

std::string TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["lambda_rate"] = lambda_rate;
  j["lambda_diff"] = lambda_diff;
  j["crop"] = crop;
  j["batch_size"] = batch_size;
  j["iterations"] = iterations;
  j["mask_range"] = {mask_lo, mask_hi};
  j["seed"] = seed;
  j["learning_rate"] = learning_rate;
  j["final_lr_ratio"] = final_lr_ratio;
  j["clip_norm"] = clip_norm;
  j["checkpoint_every"] = checkpoint_every;
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  TrainConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    auto get = [&j](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("lambda_rate", c.lambda_rate);
    get("lambda_diff", c.lambda_diff);
    get("crop", c.crop);
    get("batch_size", c.batch_size);
    get("iterations", c.iterations);
    if (j.contains("mask_range")) {
      c.mask_lo = j.at("mask_range").at(0).get<double>();
      c.mask_hi = j.at("mask_range").at(1).get<double>();
    }
    get("seed", c.seed);
    get("learning_rate", c.learning_rate);
    get("final_lr_ratio", c.final_lr_ratio);
    get("clip_norm", c.clip_norm);
    get("checkpoint_every", c.checkpoint_every);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("train config: ") + e.what());
  }
  return c;
}

Stage parse_stage(const std::string& name) {
  if (name == "vae") return Stage::kVae;
  if (name == "denoiser") return Stage::kDenoiser;
  if (name == "stage1") return Stage::kStage1;
  if (name == "stage2") return Stage::kStage2;
  throw ValidationError("unknown stage '" + name + "'");
}

std::string stage_name(Stage stage) {
  switch (stage) {
    case Stage::kVae: return "vae";
    case Stage::kDenoiser: return "denoiser";
    case Stage::kStage1: return "stage1";
    case Stage::kStage2: return "stage2";
  }
  return "?";
}

void set_stage_trainable(Model& model, Stage stage) {
  auto& p = model.params();
  p.set_trainable("", false);
  switch (stage) {
    case Stage::kVae:
      p.set_trainable("vae.", true);
      break;
    case Stage::kDenoiser:
      p.set_trainable("unet.", true);
      break;
    case Stage::kStage1:
      p.set_trainable("codec.", true);
      p.set_trainable("control.", true);
      break;
    case Stage::kStage2:
      p.set_trainable("codec.global", true);
      p.set_trainable("codec.g_s", true);
      p.set_trainable("control.", true);
      break;
  }
}

Loss combine_loss(const ag::Var& rate_y, const ag::Var& rate_z, const ag::Var& eps_pred, const Tensor& eps,
                  const ag::Var& zc_hat, const Tensor& z_c, const TrainConfig& config) {
  const ag::Var diff = ag::mse(eps_pred, ag::Var(eps));
  const ag::Var latent = ag::mse(zc_hat, ag::Var(z_c));
  Loss out;
  out.total = ag::weighted_sum({rate_y, rate_z, diff, latent},
                               {config.lambda_rate, config.lambda_rate, config.lambda_diff, 1.0});
  out.parts = {rate_y.value()[0], rate_z.value()[0], diff.value()[0], latent.value()[0], out.total.value()[0]};
  return out;
}

Tensor add_noise(const Tensor& z_c, const Tensor& eps, const std::vector<int>& t, const NoiseSchedule& schedule) {
  if (z_c.shape() != eps.shape() || static_cast<int>(t.size()) != z_c.dim(0)) throw ContractError("add_noise: shape mismatch");
  Tensor out(z_c.shape());
  const std::size_t per = z_c.size() / t.size();
  for (std::size_t n = 0; n < t.size(); ++n) {
    const double ab = schedule.alpha_bar(t[n]);
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    for (std::size_t i = n * per; i < (n + 1) * per; ++i) out[i] = a * z_c[i] + b * eps[i];
  }
  return out;
}

StepNoise draw_step_noise(const Model& model, const Shape& batch_shape, const TrainConfig& config, Stage stage,
                          std::mt19937_64& rng) {
  const auto& mc = model.config();
  const int b = batch_shape.at(0), h = batch_shape.at(2), w = batch_shape.at(3);
  const int yh = h / mc.latent_stride, yw = w / mc.latent_stride;
  StepNoise n;
  n.u_y = Tensor::uniform({b, mc.latent_channels, yh, yw}, rng, -0.5, 0.5);
  n.u_z = Tensor::uniform({b, mc.hyper_channels, yh / mc.hyper_factor, yw / mc.hyper_factor}, rng, -0.5, 0.5);
  std::uniform_int_distribution<int> td(1, model.schedule().steps());
  for (int i = 0; i < b; ++i) n.t.push_back(td(rng));
  n.eps = Tensor::randn({b, mc.diffusion_channels, h / mc.vae_factor, w / mc.vae_factor}, rng);
  if (stage == Stage::kStage2) {
    Tensor m({b, 1, yh, yw});
    for (int i = 0; i < b; ++i) {
      const auto mask = random_training_mask(yh, yw, config.mask_lo, config.mask_hi, rng());
      for (int c = 0; c < yh * yw; ++c) m[static_cast<std::size_t>(i) * yh * yw + c] = mask.cells[c];
    }
    n.mask = std::move(m);
  }
  return n;
}

Loss codec_loss(const Model& model, const Tensor& images, const TrainConfig& config, const StepNoise& noise) {
  const auto& codec = model.codec();
  const ag::Var x(images);
  Tensor z_c;
  {
    ag::NoGradGuard no_grad;
    z_c = model.vae().encode(x).value();
  }
  const ag::Var y = codec.analysis(x);
  const ag::Var y_tilde = ag::add(y, ag::Var(noise.u_y));
  const ag::Var z = codec.hyper_analysis(y);
  const ag::Var z_tilde = ag::add(z, ag::Var(noise.u_z));
  const auto params = codec.hyper_synthesis(z_tilde);
  ag::Var bits_y = entropy::gaussian_bits(y_tilde, params.mu, params.sigma);
  ag::Var y_in = y_tilde;
  if (noise.mask) {
    const Shape s = y_tilde.shape();
    Tensor full(s);
    const std::size_t plane = static_cast<std::size_t>(s[2]) * s[3];
    for (int n = 0; n < s[0]; ++n)
      for (int c = 0; c < s[1]; ++c)
        for (std::size_t i = 0; i < plane; ++i) full[(static_cast<std::size_t>(n) * s[1] + c) * plane + i] = (*noise.mask)[n * plane + i];
    bits_y = ag::mul_const(bits_y, full);
    y_in = ag::mul_const(y_tilde, full);
  }
  const double pixels = static_cast<double>(images.dim(0)) * images.dim(2) * images.dim(3);
  const ag::Var rate_y = ag::scale(ag::sum(bits_y), 1.0 / pixels);
  const ag::Var rate_z = ag::scale(ag::sum(codec.prior().bits(z_tilde)), 1.0 / pixels);
  const ag::Var zc_hat = codec.synthesis(y_in, codec.global_context(z_tilde));

  std::vector<int> model_t;
  for (int t : noise.t) model_t.push_back(model.schedule().model_timestep(t));
  const ag::Var z_t(add_noise(z_c, noise.eps, noise.t, model.schedule()));
  const auto residuals = model.control()(z_t, model_t, zc_hat);
  const ag::Var eps_pred = model.denoiser()(z_t, model_t, &residuals);
  return combine_loss(rate_y, rate_z, eps_pred, noise.eps, zc_hat, z_c, config);
}

Loss loss_stage1(const Model& model, const Tensor& images, const TrainConfig& config, std::mt19937_64& rng) {
  return codec_loss(model, images, config, draw_step_noise(model, images.shape(), config, Stage::kStage1, rng));
}

Loss loss_stage2(const Model& model, const Tensor& images, const TrainConfig& config, std::mt19937_64& rng) {
  return codec_loss(model, images, config, draw_step_noise(model, images.shape(), config, Stage::kStage2, rng));
}

Loss loss_vae(const Model& model, const Tensor& images) {
  const ag::Var x(images);
  const ag::Var recon = model.vae().decode(model.vae().encode(x));
  Loss out;
  out.total = ag::mse(recon, x);
  out.parts.total = out.total.value()[0];
  return out;
}

Loss loss_denoiser(const Model& model, const Tensor& images, std::mt19937_64& rng) {
  Tensor z_c;
  {
    ag::NoGradGuard no_grad;
    z_c = model.vae().encode(ag::Var(images)).value();
  }
  std::uniform_int_distribution<int> td(1, model.schedule().steps());
  std::vector<int> t;
  for (int i = 0; i < images.dim(0); ++i) t.push_back(td(rng));
  const Tensor eps = Tensor::randn(z_c.shape(), rng);
  const ag::Var z_t(add_noise(z_c, eps, t, model.schedule()));
  Loss out;
  out.total = ag::mse(model.denoiser()(z_t, t, nullptr), ag::Var(eps));
  out.parts.diff_eps = out.parts.total = out.total.value()[0];
  return out;
}

double normalize_vae_latent(Model& model, const std::vector<ImageTensor>& images) {
  if (images.empty()) throw ValidationError("latent normalization needs images");
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& img : images) {
    const auto z = vae_encode(model.vae(), img, model.config().vae_factor);
    for (double v : z.data.values()) {
      sum += v;
      sq += v * v;
      ++n;
    }
  }
  const double mean = sum / n;
  const double sd = std::sqrt(std::max(sq / n - mean * mean, 1e-12));
  auto& p = model.params();
  for (const char* name : {"vae.encoder.out.weight", "vae.encoder.out.bias"}) {
    for (auto& v : p.get(name).mutable_value().values()) v /= sd;
  }
  for (auto& v : p.get("vae.decoder.in.weight").mutable_value().values()) v *= sd;
  return sd;
}

ImageDataset::ImageDataset(std::vector<ImageTensor> images) : images_(std::move(images)) {}

ImageDataset ImageDataset::from_directory(const fs::path& dir, int min_size) {
  if (!fs::is_directory(dir)) throw ValidationError("dataset directory " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ImageTensor> images;
  for (const auto& f : files) {
    const RgbImage img = load_png(f);
    if (img.width < min_size || img.height < min_size) {
      spdlog::warn("skipping {}: {}x{} is smaller than the {} crop", f.string(), img.width, img.height, min_size);
      continue;
    }
    images.push_back(to_tensor(img));
  }
  if (images.empty()) throw ValidationError("dataset " + dir.string() + " has no usable images");
  return ImageDataset(std::move(images));
}

Tensor ImageDataset::sample_batch(std::mt19937_64& rng, int batch, int crop) const {
  if (images_.empty()) throw ValidationError("dataset is empty");
  Tensor out({batch, 3, crop, crop});
  std::uniform_int_distribution<std::size_t> pick(0, images_.size() - 1);
  for (int b = 0; b < batch; ++b) {
    const auto& img = images_[pick(rng)].data;
    const int h = img.dim(1), w = img.dim(2);
    if (h < crop || w < crop) throw ValidationError("image smaller than the crop");
    const int y0 = std::uniform_int_distribution<int>(0, h - crop)(rng);
    const int x0 = std::uniform_int_distribution<int>(0, w - crop)(rng);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < crop; ++y)
        for (int x = 0; x < crop; ++x) {
          out.at(b, c, y, x) = img[(static_cast<std::size_t>(c) * h + y0 + y) * w + x0 + x];
        }
  }
  return out;
}

namespace {

bool control_untouched(const Model& model) {
  for (int i = 0; i < 3; ++i) {
    for (double v : model.params().get("control.zero" + std::to_string(i) + ".weight").value().values()) {
      if (v != 0.0) return false;
    }
  }
  return true;
}

bool finite(const LossBreakdown& l) {
  return std::isfinite(l.rate_y) && std::isfinite(l.rate_z) && std::isfinite(l.diff_eps) &&
         std::isfinite(l.latent_mse) && std::isfinite(l.total);
}

void save_checkpoint(const Model& model, const optim::Adam& adam, Stage stage, int iteration, const fs::path& path) {
  Archive a = model.to_archive();
  adam.save_state(a);
  a.arrays.emplace_back("train.iteration", Tensor({1}, static_cast<double>(iteration)));
  a.arrays.emplace_back("train.stage", Tensor({1}, static_cast<double>(static_cast<int>(stage))));
  save_archive(a, path);
}

}  // namespace

TrainReport train(Model& model, const ImageDataset& data, const TrainConfig& config, Stage stage,
                  const TrainOptions& options) {
  config.validate(model.config());
  if (data.size() == 0) throw ValidationError("dataset is empty");
  fs::create_directories(options.out_dir);
  model.thaw();
  set_stage_trainable(model, stage);
  optim::Adam adam(model.params(), {config.learning_rate, 0.9, 0.999, 1e-8, config.iterations, config.final_lr_ratio,
                                    config.clip_norm});

  const fs::path checkpoint = options.out_dir / "checkpoint.bin";
  const fs::path metrics_path = options.out_dir / ("metrics_" + stage_name(stage) + ".csv");
  int start = 0;
  if (options.resume && fs::exists(checkpoint)) {
    const Archive a = load_archive(checkpoint);
    if (static_cast<int>(a.array("train.stage")[0]) != static_cast<int>(stage)) {
      throw ValidationError("checkpoint " + checkpoint.string() + " belongs to another stage");
    }
    model.load_parameters(a);
    adam.load_state(a);
    start = static_cast<int>(a.array("train.iteration")[0]);
    spdlog::info("resuming {} at iteration {}", stage_name(stage), start);
  } else if (stage == Stage::kStage1 && control_untouched(model)) {
    model.control().copy_encoder_from(model.params());
  }

  std::ofstream csv(metrics_path, start > 0 ? std::ios::app : std::ios::trunc);
  if (start == 0) csv << "iteration,rate_y,rate_z,diff_eps,latent_mse,total,bpp_estimate,learning_rate\n";
  csv.precision(10);

  TrainReport report;
  for (int it = start; it < config.iterations; ++it) {
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(stage), static_cast<std::uint32_t>(it)};
    std::mt19937_64 rng(seq);
    const Tensor batch = data.sample_batch(rng, config.batch_size, config.crop);
    Loss loss;
    switch (stage) {
      case Stage::kVae: loss = loss_vae(model, batch); break;
      case Stage::kDenoiser: loss = loss_denoiser(model, batch, rng); break;
      case Stage::kStage1: loss = loss_stage1(model, batch, config, rng); break;
      case Stage::kStage2: loss = loss_stage2(model, batch, config, rng); break;
    }
    if (!finite(loss.parts)) {
      const auto dump = options.out_dir / "diverged.bin";
      model.save(dump);
      const auto& l = loss.parts;
      throw TrainingDiverged(stage_name(stage) + " diverged at iteration " + std::to_string(it + 1) +
                             ": rate_y=" + std::to_string(l.rate_y) + " rate_z=" + std::to_string(l.rate_z) +
                             " diff_eps=" + std::to_string(l.diff_eps) + " latent_mse=" + std::to_string(l.latent_mse) +
                             "; parameters dumped to " + dump.string());
    }
    const double lr = adam.learning_rate();
    model.params().zero_grad();
    loss.total.backward();
    adam.step();

    const MetricRow row{it + 1, loss.parts, lr};
    report.rows.push_back(row);
    const auto& l = row.loss;
    csv << row.iteration << ',' << l.rate_y << ',' << l.rate_z << ',' << l.diff_eps << ',' << l.latent_mse << ','
        << l.total << ',' << l.bpp() << ',' << lr << '\n';
    if (options.log_every > 0 && (it + 1) % options.log_every == 0) {
      spdlog::info("{} iter {}/{} total={:.5f} bpp={:.4f} eps={:.4f} latent={:.4f}", stage_name(stage), it + 1,
                   config.iterations, l.total, l.bpp(), l.diff_eps, l.latent_mse);
    }
    if (config.checkpoint_every > 0 && (it + 1) % config.checkpoint_every == 0) {
      csv.flush();
      save_checkpoint(model, adam, stage, it + 1, checkpoint);
    }
    if (options.stop_after > 0 && it + 1 >= options.stop_after && it + 1 < config.iterations) {
      save_checkpoint(model, adam, stage, it + 1, checkpoint);
      report.model_path = options.out_dir / "model.bin";
      model.save(report.model_path);
      return report;
    }
  }
  if (stage == Stage::kVae) {
    const double sd = normalize_vae_latent(model, data.images());
    spdlog::info("vae latent rescaled by 1/{:.4f}", sd);
  }
  save_checkpoint(model, adam, stage, config.iterations, checkpoint);
  report.model_path = options.out_dir / "model.bin";
  model.save(report.model_path);
  return report;
}

}  // namespace discover
