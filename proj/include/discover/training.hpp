// SPDX-License-Identifier: Apache-2.0
#pragma once

// Optimisation stages:
//   vae       VAE-lite reconstruction pretraining (then frozen)
//   denoiser  unconditional noise prediction on VAE latents (then frozen)
//   stage1    codec + control, loss = lambda_R * (R_y + R_z) + lambda_diff * |eps - eps_theta|^2 + |z_c - z_c_hat|^2
//   stage2    decoder side (M, g_s) + control with random latent masks; encoder and hyper path frozen
//
// Rates are in bits per pixel of the batch; squared norms are means over elements.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "discover/model.hpp"

namespace discover {

struct TrainConfig {
  double lambda_rate = 1.0;
  double lambda_diff = 2.0;
  int crop = 64;  // full-scale runs use 512
  int batch_size = 8;
  int iterations = 2000;
  double mask_lo = 0.0;
  double mask_hi = 0.5;
  std::uint64_t seed = 0;
  double learning_rate = 1e-4;
  double final_lr_ratio = 0.1;
  double clip_norm = 0.0;
  /// 0 writes only the final checkpoint.
  int checkpoint_every = 0;

  void validate(const ModelConfig& model) const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

enum class Stage { kVae, kDenoiser, kStage1, kStage2 };
Stage parse_stage(const std::string& name);
std::string stage_name(Stage stage);

/// Enables gradients for exactly the parameters the stage updates.
void set_stage_trainable(Model& model, Stage stage);

struct LossBreakdown {
  double rate_y = 0.0;
  double rate_z = 0.0;
  double diff_eps = 0.0;
  double latent_mse = 0.0;
  double total = 0.0;

  double bpp() const { return rate_y + rate_z; }
};

struct Loss {
  ag::Var total;
  LossBreakdown parts;
};

/// lambda_R * (rate_y + rate_z) + lambda_diff * mse(eps_pred, eps) + mse(zc_hat, z_c).
Loss combine_loss(const ag::Var& rate_y, const ag::Var& rate_z, const ag::Var& eps_pred, const Tensor& eps,
                  const ag::Var& zc_hat, const Tensor& z_c, const TrainConfig& config);

/// All randomness of one stage-1/2 step, drawn up front.
struct StepNoise {
  Tensor u_y;  // quantization noise for y
  Tensor u_z;  // quantization noise for z
  std::vector<int> t;
  Tensor eps;
  /// [B, 1, rows, cols] keep mask (stage 2 only).
  std::optional<Tensor> mask;
};

StepNoise draw_step_noise(const Model& model, const Shape& batch_shape, const TrainConfig& config, Stage stage,
                          std::mt19937_64& rng);

/// Stage 1 (no mask) or stage 2 (noise.mask set) loss for images [B, 3, crop, crop].
Loss codec_loss(const Model& model, const Tensor& images, const TrainConfig& config, const StepNoise& noise);
Loss loss_stage1(const Model& model, const Tensor& images, const TrainConfig& config, std::mt19937_64& rng);
Loss loss_stage2(const Model& model, const Tensor& images, const TrainConfig& config, std::mt19937_64& rng);
Loss loss_vae(const Model& model, const Tensor& images);
Loss loss_denoiser(const Model& model, const Tensor& images, std::mt19937_64& rng);

/// z_t = sqrt(abar_t) z_c + sqrt(1 - abar_t) eps, per batch element.
Tensor add_noise(const Tensor& z_c, const Tensor& eps, const std::vector<int>& t, const NoiseSchedule& schedule);

/// Rescales the VAE-lite latent to unit standard deviation over `images`
/// (folded into the encoder output and decoder input layers).
double normalize_vae_latent(Model& model, const std::vector<ImageTensor>& images);

class ImageDataset {
 public:
  ImageDataset() = default;
  explicit ImageDataset(std::vector<ImageTensor> images);
  /// Sorted *.png files; images smaller than `min_size` are skipped with a warning.
  static ImageDataset from_directory(const std::filesystem::path& dir, int min_size);

  std::size_t size() const { return images_.size(); }
  const ImageTensor& image(std::size_t i) const { return images_[i]; }
  const std::vector<ImageTensor>& images() const { return images_; }
  /// Random crops, [batch, 3, crop, crop].
  Tensor sample_batch(std::mt19937_64& rng, int batch, int crop) const;

 private:
  std::vector<ImageTensor> images_;
};

struct MetricRow {
  int iteration = 0;
  LossBreakdown loss;
  double learning_rate = 0.0;
};

struct TrainOptions {
  std::filesystem::path out_dir;
  bool resume = false;
  /// Log a progress line every n iterations (0 = silent).
  int log_every = 100;
  /// Stop (with a checkpoint) once this many iterations are done; 0 = run to the end.
  int stop_after = 0;
};

struct TrainReport {
  std::vector<MetricRow> rows;
  std::filesystem::path model_path;
};

/// Runs `config.iterations` steps of `stage`. Writes out_dir/model.bin,
/// out_dir/checkpoint.bin (parameters + optimizer state) and
/// out_dir/metrics_<stage>.csv. Iteration i draws its randomness from
/// (seed, stage, i), so resuming reproduces the uninterrupted run. The vae
/// stage ends with normalize_vae_latent over the dataset.
TrainReport train(Model& model, const ImageDataset& data, const TrainConfig& config, Stage stage,
                  const TrainOptions& options);

/// Thrown when a loss component is not finite; parameters are dumped first.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace discover
