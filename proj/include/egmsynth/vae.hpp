#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "egmsynth/nn.hpp"
#include "egmsynth/signal.hpp"

namespace egmsynth {

/// Per-sample Gaussian posterior parameters.
struct LatentStats {
  Vector mean;
  Vector log_variance;

  int dim() const { return static_cast<int>(mean.size()); }
};

struct ModelConfig {
  int latent_dim = 50;
  int input_samples = 400;   // T
  int input_channels = 2048; // N
  bool conditional = false;
  int n_classes = 2;
  std::vector<int> encoder_widths{16, 32, 64, 128};
  std::vector<int> decoder_widths{128, 64, 32, 16};
  int kernel = 5;
  double leaky_slope = 0.2;
  double working_rate_hz = 200.0;
  /// Conditional models use the prior N(scale * e_c, I), the class one-hot
  /// placed on the first two latent coordinates. 0 gives N(0, I).
  double class_prior_scale = 1.0;

  int stages() const { return static_cast<int>(encoder_widths.size()); }
  void validate() const;
  std::string to_text() const;
  static ModelConfig from_text(std::string_view text);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// z = mean + exp(log_variance / 2) * eps, eps ~ N(0, I) drawn from noise_seed.
Vector reparameterize(const LatentStats& stats, std::uint64_t noise_seed);
Vector reparameterize(const LatentStats& stats, const Vector& eps);

/// Convolutional encoder/decoder with a Gaussian latent.
///
/// Encoder: per stage a 'same' k x k convolution, LeakyReLU and 2 x 2 max
/// pooling, then a dense head producing [mean, log_variance]. Decoder: a dense
/// projection onto the coarsest grid, then per stage a stride-2 transposed
/// convolution followed by the fixed binomial anti-aliasing filter and
/// LeakyReLU, and a final k x k convolution with tanh.
///
/// In the conditional variant the rhythm class enters the encoder as one-hot
/// broadcast input channels and the decoder as a one-hot suffix on z.
class Vae {
 public:
  Vae(ModelConfig config, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }

  LatentStats encode(const EgmTensor& signal, std::optional<RhythmClass> label = std::nullopt) const;
  EgmTensor decode(const Vector& z, std::optional<RhythmClass> label = std::nullopt) const;

  /// Appends the class one-hot to z (the decoder input). Throws NotConditional on VAE-S.
  Vector condition(const Vector& z, RhythmClass label) const;
  /// One-hot suffix on the mean with zero-variance (-inf log-variance) slots.
  LatentStats condition(const LatentStats& stats, RhythmClass label) const;

  /// Mean of the prior p(z | label); zero for unconditional models.
  Vector prior_mean(std::optional<RhythmClass> label = std::nullopt) const;

  nn::Tensor encoder_input(const EgmTensor& signal, std::optional<RhythmClass> label) const;
  nn::Tensor decoder_input(const Vector& z, std::optional<RhythmClass> label) const;
  LatentStats split_head(const nn::Tensor& head) const;
  EgmTensor to_signal(const nn::Tensor& output, std::optional<RhythmClass> label) const;

  const nn::Sequential& encoder() const { return encoder_; }
  const nn::Sequential& decoder() const { return decoder_; }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::span<const double> encoder_parameters() const;
  std::span<const double> decoder_parameters() const;
  std::size_t parameter_count() const { return params_.size(); }
  /// Names and shapes of all tensors, encoder first.
  std::vector<nn::ParamSlot> param_slots() const;

  void set_parameters(std::span<const double> values);

  void save(const std::filesystem::path& path) const;
  static Vae load(const std::filesystem::path& path);

 private:
  void check_label(std::optional<RhythmClass> label) const;

  ModelConfig config_;
  nn::Sequential encoder_;
  nn::Sequential decoder_;
  std::vector<double> params_;
};

}  // namespace egmsynth
