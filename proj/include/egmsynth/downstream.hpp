#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "egmsynth/nn.hpp"
#include "egmsynth/signal.hpp"

namespace egmsynth {

/// Linear map from atrial sites to body-surface leads.
struct ForwardModel {
  Matrix transfer;  // leads x sites
  double noise_level = 0.0;

  int leads() const { return static_cast<int>(transfer.rows()); }
  int sites() const { return static_cast<int>(transfer.cols()); }

  /// Seeded random mixing with each row low-pass filtered along the site
  /// index and scaled to unit row sum of magnitudes.
  static ForwardModel smoothed_random(int sites, int leads, std::uint64_t seed, double noise_level = 0.0,
                                      int smoothing_width = 8);
  static ForwardModel identity(int sites);
};

/// BSPM (time x leads) = egm * transfer^T + N(0, noise_level^2).
Matrix project_to_bspm(const EgmTensor& egm, const ForwardModel& fm, std::uint64_t seed);

/// Least-squares inverse per time sample; the harness sanity check.
Matrix least_squares_reconstruct(const Matrix& bspm, const ForwardModel& fm);

enum class Scenario : std::uint8_t { VaeSAtK, VaeCAtKs, VaeCAtKsKaf };
std::string_view to_string(Scenario s);
inline constexpr std::array<Scenario, 3> kAllScenarios{Scenario::VaeSAtK, Scenario::VaeCAtKs,
                                                       Scenario::VaeCAtKsKaf};

struct AugmentationPlan {
  Scenario scenario = Scenario::VaeSAtK;
  int k = 0;
  int k_s = 0;
  int k_af = 0;

  /// k_s = k_af = k in the two-class scenario.
  static AugmentationPlan make(Scenario scenario, int k);
  void validate() const;
  int synthetic_count() const { return k + k_s + k_af; }
};

/// Real training records plus the plan's synthetic records (the first ones
/// of each class in manifest order, i.e. the best curated), in a seeded
/// interleaved order; validation and test records are the real ones. All
/// paths in the result are absolute.
DatasetManifest build_training_mix(const DatasetManifest& real, const DatasetManifest& synthetic,
                                   const AugmentationPlan& plan, std::uint64_t seed);

/// Throws Leakage if a training id also appears in validation or test, or
/// a synthetic id (by prefix "syn") appears outside the training split.
void check_no_leakage(const DatasetManifest& mix);

/// Stand-in BSPM -> EGM network: per-time-sample 1-D encoder-decoder over
/// the lead dimension treated as channels.
struct ReconConfig {
  int hidden = 32;
  int kernel = 5;
  int epochs = 40;
  int batch_size = 8;
  double lr = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
};

class ReconNet {
 public:
  ReconNet(int samples, int leads, int sites, const ReconConfig& config);

  Matrix predict(const Matrix& bspm) const;
  /// Mean squared error of one pair and its gradient, accumulated into grad.
  double loss_and_grad(const Matrix& bspm, const Matrix& egm, std::span<double> grad) const;
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

 private:
  nn::Tensor to_input(const Matrix& bspm) const;

  int samples_, leads_, sites_;
  nn::Sequential net_;
  std::vector<double> params_;
};

struct RunMetrics {
  double corr_mean = 0.0, corr_std = 0.0, rmse_mean = 0.0, rmse_std = 0.0;
  friend bool operator==(const RunMetrics&, const RunMetrics&) = default;
};

struct ScenarioRow {
  Scenario scenario = Scenario::VaeSAtK;
  int k = 0;
  std::size_t n_train = 0;  // real + synthetic training records
  std::size_t n_synthetic = 0;
  RunMetrics overall;
  std::optional<RunMetrics> sinus;
  std::optional<RunMetrics> af;

  friend bool operator==(const ScenarioRow&, const ScenarioRow&) = default;
};

struct DownstreamReport {
  std::vector<ScenarioRow> rows;
};

/// Trains a ReconNet on the mix and scores it on the mix's test split.
ScenarioRow run_plan(const DatasetManifest& mix, const AugmentationPlan& plan, const ForwardModel& fm,
                     const ReconConfig& config);

/// Every scenario with an available synthetic set, for every k in k_grid.
/// The k = 0 baseline is trained once and shared by every block.
DownstreamReport run_scenarios(const DatasetManifest& real, const std::optional<DatasetManifest>& synt_s,
                               const std::optional<DatasetManifest>& synt_c, const ForwardModel& fm,
                               const ReconConfig& config, std::span<const int> k_grid);

void write_downstream_report(const DownstreamReport& report, const std::filesystem::path& path);
void write_per_class_report(const DownstreamReport& report, const std::filesystem::path& path);

}  // namespace egmsynth
