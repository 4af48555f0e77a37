#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "egmsynth/losses.hpp"
#include "egmsynth/vae.hpp"

namespace egmsynth {

/// KL weight, linear from 0 to beta_max over the first warmup_epochs epochs.
struct BetaSchedule {
  double beta_max = 4.0;
  int warmup_epochs = 10;

  void validate() const;
};

/// `epoch` counts completed epochs, so the first epoch trains at beta_at(0).
double beta_at(const BetaSchedule& schedule, int epoch);

struct PlateauConfig {
  double factor = 0.5;
  int patience = 5;
};

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 400;
  int max_epochs = 90;
  int early_stop_patience = 10;
  PlateauConfig scheduler;
  std::uint64_t seed = 0;
  LossWeights weights;  // beta is overwritten by the schedule
  SpectralConfig spectral;
  /// Relative decrease of the validation total that counts as progress.
  double improvement_tolerance = 1e-4;
  /// Run the loop without updating parameters (exercises the stopping logic).
  bool freeze_parameters = false;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double beta = 0.0;
  double lr = 0.0;
  LossBreakdown train;
  LossBreakdown val;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_total = 0.0;
  double best_beta = 0.0;
  bool stopped_early = false;
  std::optional<std::filesystem::path> checkpoint;

  const EpochRecord& best() const { return epochs.at(static_cast<std::size_t>(best_epoch - 1)); }
};

/// Loss of one sample. With eps empty the posterior mean is decoded.
LossBreakdown sample_loss(const Vae& model, const EgmTensor& x, const LossWeights& weights,
                          const SpectralConfig& cfg, const Vector* eps = nullptr);

/// Mean loss over a set, decoding posterior means (the validation objective).
LossBreakdown validation_loss(const Vae& model, std::span<const EgmTensor> set, const LossWeights& weights,
                              const SpectralConfig& cfg);

/// Mean loss over a batch and its gradient w.r.t. all model parameters.
/// eps holds one noise vector per sample.
LossBreakdown loss_and_gradient(const Vae& model, std::span<const EgmTensor> batch, std::span<const Vector> eps,
                                const LossWeights& weights, const SpectralConfig& cfg,
                                std::span<double> grad);

/// Trains in place and leaves the model at its best validation epoch. When
/// out_dir is given, writes train_log.csv, epoch_log.csv, config.used and
/// best.ckpt there.
TrainReport train(Vae& model, std::span<const EgmTensor> train_set, std::span<const EgmTensor> val_set,
                  const TrainConfig& config, const BetaSchedule& schedule,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt);

TrainReport train(Vae& model, const DatasetManifest& dataset, const TrainConfig& config,
                  const BetaSchedule& schedule,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt);

std::string to_text(const TrainConfig& config, const BetaSchedule& schedule);

}  // namespace egmsynth
