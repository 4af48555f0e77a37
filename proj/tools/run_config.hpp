#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "egmsynth/downstream.hpp"
#include "egmsynth/generator.hpp"
#include "egmsynth/metrics.hpp"
#include "egmsynth/surrogate.hpp"
#include "egmsynth/trainer.hpp"
#include "egmsynth/vae.hpp"

namespace egmsynth::cli {

struct SimSection {
  int n_sinus = 19;
  int n_af = 33;
  SimConfig base;
  std::optional<double> target_rate_hz = 200.0;
  bool normalize = true;
  bool stratify = true;
  std::uint64_t seed = 0;
};

struct GenerateSection {
  GenerationSpec spec;
  FitMode fit_mode = FitMode::Diagonal;
  std::uint64_t seed = 0;
};

struct DownstreamSection {
  int leads = 64;
  double noise_level = 0.01;
  int smoothing_width = 8;
  std::uint64_t forward_seed = 0;
  std::vector<int> k_grid{0, 10, 14, 18, 20, 25};
  ReconConfig recon;
};

struct RunConfig {
  SimSection sim;
  ModelConfig model;
  std::uint64_t init_seed = 0;
  TrainConfig train;
  BetaSchedule beta;
  GenerateSection generate;
  MetricsConfig metrics;
  DownstreamSection downstream;

  /// Sets every seed in the document.
  void set_seed(std::uint64_t seed);
};

nlohmann::ordered_json to_json(const RunConfig& config);
/// Overlays `doc` on the defaults. Unknown keys and wrongly typed values throw InvalidConfig.
RunConfig from_json(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);

/// Defaults, then the file (if any), then EGMSYNTH_SEED.
RunConfig resolve_config(const std::optional<std::filesystem::path>& path);

void write_used_config(const RunConfig& config, const std::filesystem::path& out_dir);

}  // namespace egmsynth::cli
