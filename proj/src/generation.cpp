// SPDX-License-Identifier: Apache-2.0
#include "discover/generation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "discover/errors.hpp"

namespace discover {
namespace {

int log2i(int v) { return std::countr_zero(static_cast<unsigned>(v)); }

ag::Var as_batch(const Tensor& chw) {
  Shape s = chw.shape();
  s.insert(s.begin(), 1);
  return ag::Var(chw.reshaped(s));
}

Tensor unbatch(const Tensor& t) {
  Shape s = t.shape();
  s.erase(s.begin());
  return t.reshaped(s);
}

}  // namespace

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ValidationError("schedule needs at least one step");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ValidationError("need 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  double bar = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double beta =
        steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * (t - 1) / static_cast<double>(steps - 1);
    const double a = 1.0 - beta;
    bar *= a;
    s.alpha_.push_back(a);
    s.alpha_bar_.push_back(bar);
    s.model_t_.push_back(t);
  }
  return s;
}

double NoiseSchedule::alpha(int t) const {
  if (t < 1 || t > steps()) throw ValidationError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
  return alpha_[t - 1];
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t == 0) return 1.0;
  if (t < 0 || t > steps()) throw ValidationError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(steps()) + "]");
  return alpha_bar_[t - 1];
}

int NoiseSchedule::model_timestep(int t) const {
  if (t < 1 || t > steps()) throw ValidationError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
  return model_t_[t - 1];
}

NoiseSchedule NoiseSchedule::respaced(const std::vector<int>& descending) const {
  if (descending.empty()) throw ValidationError("respacing needs at least one timestep");
  NoiseSchedule s;
  double previous_bar = 1.0;
  for (auto it = descending.rbegin(); it != descending.rend(); ++it) {
    const int t = *it;
    if (t < 1 || t > steps()) throw ValidationError("respaced timestep " + std::to_string(t) + " out of range");
    if (!s.model_t_.empty() && t <= s.model_t_.back()) throw ValidationError("respaced timesteps must strictly decrease");
    const double bar = alpha_bar(t);
    s.alpha_.push_back(bar / previous_bar);
    s.alpha_bar_.push_back(bar);
    s.model_t_.push_back(model_timestep(t));
    previous_bar = bar;
  }
  return s;
}

std::vector<int> strided_timesteps(int total_steps, int count) {
  if (count < 1 || count > total_steps) {
    throw ValidationError("sampling steps " + std::to_string(count) + " outside [1, " + std::to_string(total_steps) + "]");
  }
  if (count == 1) return {total_steps};
  std::vector<int> out;
  for (int i = count - 1; i >= 0; --i) {
    out.push_back(1 + static_cast<int>(std::lround(static_cast<double>(total_steps - 1) * i / (count - 1))));
  }
  return out;
}

VaeLite::VaeLite(nn::ParameterStore& store, const ModelConfig& config, std::mt19937_64& rng) {
  const int v = config.vae_width, cc = config.diffusion_channels;
  const int down = log2i(config.vae_factor);
  enc_.emplace_back(store, "vae.encoder.in", 3, v, 3, 1, rng);
  for (int i = 0; i < down; ++i) enc_.emplace_back(store, "vae.encoder.down" + std::to_string(i), v, v, 3, 2, rng);
  enc_.emplace_back(store, "vae.encoder.mid", v, v, 3, 1, rng);
  enc_.emplace_back(store, "vae.encoder.out", v, cc, 3, 1, rng);

  dec_pre_.emplace_back(store, "vae.decoder.in", cc, v, 3, 1, rng);
  dec_pre_.emplace_back(store, "vae.decoder.mid", v, v, 3, 1, rng);
  for (int i = 0; i < down; ++i) {
    dec_up_.emplace_back(store, "vae.decoder.up" + std::to_string(i), v, v, rng);
  }
  dec_out_ = nn::Conv2d(store, "vae.decoder.out", v, 3, 3, 1, rng);
}

ag::Var VaeLite::encode(const ag::Var& x) const {
  ag::Var h = x;
  for (std::size_t i = 0; i < enc_.size(); ++i) {
    h = enc_[i](h);
    if (i + 1 < enc_.size()) h = ag::silu(h);
  }
  return h;
}

ag::Var VaeLite::decode(const ag::Var& z) const {
  ag::Var h = z;
  for (const auto& c : dec_pre_) h = ag::silu(c(h));
  for (std::size_t i = 0; i < dec_up_.size(); ++i) {
    h = ag::silu(dec_up_[i](h));
  }
  return dec_out_(h);
}

ResBlock::ResBlock(nn::ParameterStore& store, const std::string& name, int in, int out, int temb,
                   std::mt19937_64& rng)
    : conv1(store, name + ".conv1", in, out, 3, 1, rng),
      conv2(store, name + ".conv2", out, out, 3, 1, rng, nn::Init::kZero),
      temb_proj(store, name + ".temb", temb, out, rng),
      has_skip(in != out) {
  if (has_skip) skip = nn::Conv2d(store, name + ".skip", in, out, 1, 1, rng);
}

ag::Var ResBlock::operator()(const ag::Var& x, const ag::Var& temb) const {
  ag::Var h = conv1(ag::silu(x));
  h = ag::add_channel_bias(h, temb_proj(temb));
  h = conv2(ag::silu(h));
  return ag::add(has_skip ? skip(x) : x, h);
}

Tensor timestep_features(const std::vector<int>& t, int dim) {
  const int half = dim / 2;
  Tensor out({static_cast<int>(t.size()), dim});
  for (std::size_t n = 0; n < t.size(); ++n) {
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      out[n * dim + i] = std::sin(t[n] * freq);
      out[n * dim + half + i] = std::cos(t[n] * freq);
    }
  }
  return out;
}

UNetEncoder::UNetEncoder(nn::ParameterStore& store, const std::string& prefix, const ModelConfig& config,
                         std::mt19937_64& rng)
    : width(config.unet_width) {
  const int d = width, cc = config.diffusion_channels, te = 4 * d;
  temb1 = nn::Linear(store, prefix + ".temb1", d, te, rng);
  temb2 = nn::Linear(store, prefix + ".temb2", te, te, rng);
  in_conv = nn::Conv2d(store, prefix + ".in", cc, d, 3, 1, rng);
  enc0 = ResBlock(store, prefix + ".enc0", d, d, te, rng);
  down0 = nn::Conv2d(store, prefix + ".down0", d, d, 3, 2, rng);
  enc1 = ResBlock(store, prefix + ".enc1", d, 2 * d, te, rng);
  down1 = nn::Conv2d(store, prefix + ".down1", 2 * d, 2 * d, 3, 2, rng);
  mid = ResBlock(store, prefix + ".mid", 2 * d, 2 * d, te, rng);
}

ag::Var UNetEncoder::embed(const std::vector<int>& t) const {
  ag::Var f(timestep_features(t, width));
  return temb2(ag::silu(temb1(f)));
}

std::array<ag::Var, 3> UNetEncoder::operator()(const ag::Var& z, const ag::Var& temb, const ag::Var* extra) const {
  ag::Var h = in_conv(z);
  if (extra) h = ag::add(h, *extra);
  ag::Var s0 = enc0(h, temb);
  ag::Var s1 = enc1(down0(s0), temb);
  ag::Var m = mid(down1(s1), temb);
  return {s0, s1, m};
}

Denoiser::Denoiser(nn::ParameterStore& store, const ModelConfig& config, std::mt19937_64& rng)
    : encoder_(store, "unet.enc", config, rng) {
  const int d = config.unet_width, te = 4 * d;
  dec1_ = ResBlock(store, "unet.dec1", 4 * d, 2 * d, te, rng);
  dec0_ = ResBlock(store, "unet.dec0", 3 * d, d, te, rng);
  out_ = nn::Conv2d(store, "unet.out", d, config.diffusion_channels, 3, 1, rng, nn::Init::kZero);
}

ag::Var Denoiser::operator()(const ag::Var& z_t, const std::vector<int>& t, const ControlResiduals* control) const {
  if (z_t.value().ndim() != 4 || z_t.dim(2) % 4 != 0 || z_t.dim(3) % 4 != 0) {
    throw ContractError("denoiser input must be [N,C,H,W] with H, W divisible by 4, got " + shape_string(z_t.shape()));
  }
  if (static_cast<int>(t.size()) != z_t.dim(0)) throw ContractError("one timestep per batch element required");
  const ag::Var temb = encoder_.embed(t);
  auto [s0, s1, m] = encoder_(z_t, temb, nullptr);
  if (control) {
    s0 = ag::add(s0, (*control)[0]);
    s1 = ag::add(s1, (*control)[1]);
    m = ag::add(m, (*control)[2]);
  }
  ag::Var h = dec1_(ag::concat_channels(ag::upsample2x(m), s1), temb);
  h = dec0_(ag::concat_channels(ag::upsample2x(h), s0), temb);
  return out_(ag::silu(h));
}

ControlModule::ControlModule(nn::ParameterStore& store, const ModelConfig& config, std::mt19937_64& rng)
    : encoder_(store, "control.enc", config, rng) {
  const int d = config.unet_width, cc = config.diffusion_channels;
  hint0_ = nn::Conv2d(store, "control.hint0", cc, d, 3, 1, rng);
  hint1_ = nn::Conv2d(store, "control.hint1", d, d, 3, 1, rng);
  hint_zero_ = nn::Conv2d(store, "control.hint_zero", d, d, 1, 1, rng, nn::Init::kZero);
  const int widths[3] = {d, 2 * d, 2 * d};
  for (int i = 0; i < 3; ++i) {
    zero_out_[i] = nn::Conv2d(store, "control.zero" + std::to_string(i), widths[i], widths[i], 1, 1, rng,
                              nn::Init::kZero);
  }
}

ControlResiduals ControlModule::operator()(const ag::Var& z_t, const std::vector<int>& t,
                                           const ag::Var& condition) const {
  if (condition.shape() != z_t.shape()) {
    throw ContractError("control condition " + shape_string(condition.shape()) + " does not match z_t " +
                        shape_string(z_t.shape()));
  }
  const ag::Var temb = encoder_.embed(t);
  const ag::Var hint = hint_zero_(ag::silu(hint1_(ag::silu(hint0_(condition)))));
  const auto feats = encoder_(z_t, temb, &hint);
  return {zero_out_[0](feats[0]), zero_out_[1](feats[1]), zero_out_[2](feats[2])};
}

void ControlModule::copy_encoder_from(const nn::ParameterStore& store) const {
  const std::string from = "unet.enc.", to = "control.enc.";
  for (const auto& name : store.names()) {
    if (!name.starts_with(from)) continue;
    ag::Var dst = store.get(to + name.substr(from.size()));
    dst.mutable_value() = store.get(name).value();
  }
}

Tensor reverse_update(const Tensor& z_t, const Tensor& eps, double alpha_t, double alpha_bar_t) {
  if (z_t.shape() != eps.shape()) throw ContractError("reverse update: z_t and eps shapes differ");
  if (!(alpha_t > 0.0 && alpha_t <= 1.0 && alpha_bar_t >= 0.0 && alpha_bar_t < 1.0)) {
    throw ValidationError("reverse update needs 0 < alpha_t <= 1 and 0 <= alpha_bar_t < 1");
  }
  const double coef = std::sqrt(1.0 - alpha_t) / std::sqrt(1.0 - alpha_bar_t);
  const double inv = 1.0 / std::sqrt(alpha_t);
  Tensor out(z_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = inv * (z_t[i] - coef * eps[i]);
  return out;
}

DiffusionState reverse_step(const Denoiser& denoiser, const ControlModule* control, const DiffusionState& state,
                            const DiffLatent& condition, const NoiseSchedule& schedule) {
  const int t = state.t;
  if (t < 1 || t > schedule.steps()) {
    throw ValidationError("reverse step t=" + std::to_string(t) + " outside [1, " + std::to_string(schedule.steps()) + "]");
  }
  ag::NoGradGuard no_grad;
  const ag::Var z = as_batch(state.z);
  const std::vector<int> tt{schedule.model_timestep(t)};
  ag::Var eps;
  if (control) {
    const auto residuals = (*control)(z, tt, as_batch(condition.data));
    eps = denoiser(z, tt, &residuals);
  } else {
    eps = denoiser(z, tt, nullptr);
  }
  return {reverse_update(state.z, unbatch(eps.value()), schedule.alpha(t), schedule.alpha_bar(t)), t - 1};
}

DiffLatent sample(const Denoiser& denoiser, const ControlModule* control, const DiffLatent& condition,
                  const NoiseSchedule& schedule, const SampleOptions& options) {
  const NoiseSchedule strided = schedule.respaced(strided_timesteps(schedule.steps(), options.steps));
  std::mt19937_64 rng(options.seed);
  DiffusionState state{Tensor::randn(condition.data.shape(), rng), strided.steps()};
  while (state.t > 0) {
    const int t = state.t;
    state = reverse_step(denoiser, control, state, condition, strided);
    if (options.stochastic && state.t > 0) {
      const double sd = std::sqrt(strided.beta(t));
      std::normal_distribution<double> n(0.0, sd);
      for (auto& v : state.z.values()) v += n(rng);
    }
  }
  return {std::move(state.z), condition.vae_factor};
}

DiffLatent vae_encode(const VaeLite& vae, const ImageTensor& x, int vae_factor) {
  x.validate();
  int pr = 0, pb = 0;
  const Tensor padded = reflect_pad(x.data, vae_factor, pr, pb);
  ag::NoGradGuard no_grad;
  return {unbatch(vae.encode(as_batch(padded)).value()), vae_factor};
}

ImageTensor vae_decode(const VaeLite& vae, const DiffLatent& z) {
  ag::NoGradGuard no_grad;
  ImageTensor out{unbatch(vae.decode(as_batch(z.data)).value())};
  for (auto& v : out.data.values()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

}  // namespace discover
