#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "egmsynth/spectral.hpp"
#include "egmsynth/vae.hpp"

namespace egmsynth {

/// Log-spectral distance in dB: per-frame RMS over bins of the difference of
/// 10 log10(|X|^2 + 1e-12), averaged over frames and channels.
double lsd(const Matrix& x, const Matrix& y, const SpectralConfig& cfg);

/// Mean over channels of the plain Pearson correlation (0 for a constant channel).
double pearson(const Matrix& x, const Matrix& y);

/// Per-channel summary features, concatenated channel-major:
/// (mean, std, dominant frequency / Nyquist, normalized spectral entropy).
Vector signal_features(const Matrix& x);
Matrix feature_matrix(std::span<const EgmTensor> set);

/// Median of the nonzero pairwise distances among the rows of [a; b]; 1 if none.
double median_bandwidth(const Matrix& a, const Matrix& b);

/// Biased squared-MMD with a Gaussian RBF kernel over the rows of a and b.
double mmd_features(const Matrix& a, const Matrix& b, double bandwidth);
/// MMD over signal_features; nullopt bandwidth selects the median heuristic.
double mmd(std::span<const EgmTensor> a, std::span<const EgmTensor> b,
           std::optional<double> bandwidth = std::nullopt);

/// Dimensions whose encoded-mean population variance exceeds threshold.
int active_units(std::span<const LatentStats> stats, double threshold = 1e-2);

struct FidelityReport {
  double mse = 0.0;  // test-set reconstruction MSE through the posterior mean
  double lsd_mean = 0.0;
  double lsd_std = 0.0;
  double corr_mean = 0.0;
  double corr_std = 0.0;
  double mmd = 0.0;
  std::optional<double> mmd_sinus;
  std::optional<double> mmd_af;
  double kl_mean = 0.0;
  double kl_std = 0.0;
  int active_units = 0;
  int latent_dim = 0;

  friend bool operator==(const FidelityReport&, const FidelityReport&) = default;
};

struct MetricsConfig {
  SpectralConfig spectral;
  double active_threshold = 1e-2;
  std::optional<double> mmd_bandwidth;
};

/// Each generated signal is paired with its minimum-RMSE test reference
/// (same class for conditional models) for correlation and LSD.
FidelityReport evaluate(const Vae& model, std::span<const EgmTensor> test_set,
                        std::span<const EgmTensor> generated_set, const MetricsConfig& cfg = {});

/// Metric rows x model columns.
void write_fidelity_report(const std::filesystem::path& path,
                           const std::vector<std::pair<std::string, FidelityReport>>& columns);
std::vector<std::pair<std::string, FidelityReport>> read_fidelity_report(const std::filesystem::path& path);

/// Columns mu_0 .. mu_{D-1}, label.
std::string embedding_csv(std::span<const LatentStats> latents, std::span<const RhythmClass> labels);
void export_embedding(std::span<const LatentStats> latents, std::span<const RhythmClass> labels,
                      const std::filesystem::path& path);

}  // namespace egmsynth
