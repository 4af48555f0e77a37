#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "egmsynth/signal.hpp"

namespace egmsynth {

/// Parameters of the surrogate electrogram generator. Each channel carries a
/// train of biphasic (derivative-of-Gaussian) deflections riding on a broad
/// negative wave; channels sit on a square grid and activate along a planar
/// wavefront in sinus mode.
struct SimConfig {
  int n_channels = 2048;
  double duration_s = 2.0;
  double sample_rate_hz = 500.0;
  RhythmClass rhythm = RhythmClass::Sinus;
  std::uint64_t seed = 0;
  double cycle_length_ms = 800.0;
  double af_irregularity = 0.7;

  double af_cycle_length_ms = 180.0;
  double onset_ms = 120.0;            // first sinus activation
  double conduction_spread_ms = 60.0; // activation-time range across the grid
  double wavefront_angle_rad = 0.6;
  double deflection_width_ms = 6.0;
  double slow_wave_fraction = 0.18;   // width of the broad wave, as a fraction of cycle length
  double slow_wave_gain = 0.35;
  double amplitude_jitter = 0.15;
  double noise_std = 0.01;
  double af_cycle_cv = 0.35;          // cycle-length CV at af_irregularity = 1
  double af_delay_jitter_ms = 120.0;  // per-beat delay re-randomization at af_irregularity = 1

  int samples() const;
  void validate() const;
};

EgmTensor simulate_record(const SimConfig& config);

/// Activation instants (ms) of the beat train a record would use; exposed for tests.
std::vector<double> beat_times_ms(const SimConfig& config);

struct DatasetOptions {
  std::filesystem::path out_dir;
  /// Resample to this rate before writing; nullopt keeps the simulation rate.
  std::optional<double> target_rate_hz;
  bool normalize = true;
};

/// Writes n_sinus + n_af records (sinus first) under out_dir/records and
/// out_dir/manifest.tsv. Record i uses seed + i for its perturbations and
/// waveform noise.
DatasetManifest build_dataset(int n_sinus, int n_af, const SimConfig& base_config,
                              std::uint64_t seed, const DatasetOptions& options);

/// The per-record config build_dataset would use for record `index`.
SimConfig perturbed_config(const SimConfig& base, RhythmClass rhythm, std::uint64_t seed,
                           int index);

}  // namespace egmsynth
