#include "egmsynth/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "egmsynth/errors.hpp"

namespace egmsynth {

int SimConfig::samples() const {
  return static_cast<int>(std::lround(duration_s * sample_rate_hz));
}

void SimConfig::validate() const {
  auto check = [](bool ok, const char* what) {
    if (!ok) fail(ErrorCode::InvalidConfig, what);
  };
  check(n_channels > 0, "n_channels must be positive");
  check(duration_s >= 2.0 && duration_s <= 4.0, "duration_s must lie in [2, 4]");
  check(sample_rate_hz > 0.0, "sample_rate_hz must be positive");
  const double count = duration_s * sample_rate_hz;
  check(std::abs(count - std::round(count)) < 1e-9, "duration_s * sample_rate_hz must be integral");
  check(cycle_length_ms > 0.0 && af_cycle_length_ms > 0.0, "cycle lengths must be positive");
  check(af_irregularity >= 0.0 && af_irregularity <= 1.0, "af_irregularity must lie in [0, 1]");
  check(conduction_spread_ms >= 0.0, "conduction_spread_ms must be nonnegative");
  check(deflection_width_ms > 0.0 && slow_wave_fraction > 0.0, "wave widths must be positive");
  check(amplitude_jitter >= 0.0 && amplitude_jitter < 1.0, "amplitude_jitter must lie in [0, 1)");
  check(noise_std >= 0.0 && af_cycle_cv >= 0.0 && af_delay_jitter_ms >= 0.0,
        "noise and jitter scales must be nonnegative");
}

namespace {

struct Grid {
  std::vector<double> ux, uy;
};

Grid channel_grid(int n) {
  const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  const double denom = std::max(1, side - 1);
  Grid g;
  g.ux.resize(n);
  g.uy.resize(n);
  for (int i = 0; i < n; ++i) {
    g.ux[i] = (i % side) / denom;
    g.uy[i] = (i / side) / denom;
  }
  return g;
}

// Activation offsets in [0, spread] along the wavefront direction, with mild curvature.
std::vector<double> wavefront_delays(const Grid& g, double angle, double spread_ms) {
  const std::size_t n = g.ux.size();
  std::vector<double> proj(n);
  for (std::size_t i = 0; i < n; ++i) {
    proj[i] = g.ux[i] * std::cos(angle) + g.uy[i] * std::sin(angle) +
              0.15 * (g.ux[i] - 0.5) * (g.ux[i] - 0.5);
  }
  const auto [lo, hi] = std::minmax_element(proj.begin(), proj.end());
  const double range = *hi - *lo;
  std::vector<double> delay(n, 0.0);
  if (range > 0.0)
    for (std::size_t i = 0; i < n; ++i) delay[i] = spread_ms * (proj[i] - *lo) / range;
  return delay;
}

double biphasic(double u, double width) {
  const double r = u / width;
  return -r * std::exp(0.5 - 0.5 * r * r);
}

}  // namespace

std::vector<double> beat_times_ms(const SimConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const double duration_ms = config.duration_s * 1000.0;
  std::vector<double> beats;
  if (config.rhythm == RhythmClass::Sinus) {
    for (double t = config.onset_ms - config.cycle_length_ms; t < duration_ms + config.cycle_length_ms;
         t += config.cycle_length_ms)
      beats.push_back(t);
    return beats;
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, config.af_cycle_length_ms);
  const double cv = config.af_irregularity * config.af_cycle_cv;
  double t = phase(rng) - config.af_cycle_length_ms;
  while (t < duration_ms + config.af_cycle_length_ms) {
    beats.push_back(t);
    const double factor = std::clamp(1.0 + cv * gauss(rng), 0.5, 1.5);
    t += config.af_cycle_length_ms * factor;
  }
  return beats;
}

EgmTensor simulate_record(const SimConfig& config) {
  config.validate();
  const int n_samples = config.samples();
  const int n_ch = config.n_channels;
  const bool af = config.rhythm == RhythmClass::AF;
  const double cycle = af ? config.af_cycle_length_ms : config.cycle_length_ms;
  const double slow_width = config.slow_wave_fraction * cycle;
  const double slow_gain = af ? 0.5 * config.slow_wave_gain : config.slow_wave_gain;
  const double dt_ms = 1000.0 / config.sample_rate_hz;

  const std::vector<double> beats = beat_times_ms(config);
  const Grid grid = channel_grid(n_ch);
  const std::vector<double> base_delay =
      wavefront_delays(grid, config.wavefront_angle_rad, config.conduction_spread_ms);

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // smooth amplitude field over the grid
  const double k1 = 1.0 + 2.0 * unit(rng), k2 = 1.0 + 2.0 * unit(rng);
  const double p1 = unit(rng), p2 = unit(rng);
  std::vector<double> amplitude(n_ch);
  for (int c = 0; c < n_ch; ++c) {
    amplitude[c] = 1.0 + config.amplitude_jitter *
                             std::sin(2.0 * std::numbers::pi * (k1 * grid.ux[c] + p1)) *
                             std::cos(2.0 * std::numbers::pi * (k2 * grid.uy[c] + p2));
  }

  // per-beat, per-channel activation delays
  const double jitter = af ? config.af_irregularity * config.af_delay_jitter_ms : 0.0;
  std::vector<double> delays(beats.size() * n_ch);
  for (std::size_t b = 0; b < beats.size(); ++b)
    for (int c = 0; c < n_ch; ++c)
      delays[b * n_ch + c] = base_delay[c] + (jitter > 0.0 ? jitter * unit(rng) : 0.0);

  std::vector<double> noise(static_cast<std::size_t>(n_samples) * n_ch);
  for (auto& v : noise) v = config.noise_std * gauss(rng);

  EgmTensor out;
  out.sample_rate_hz = config.sample_rate_hz;
  out.rhythm = config.rhythm;
  out.values = Matrix::Zero(n_samples, n_ch);

  const double support = 5.0 * std::max(slow_width, config.deflection_width_ms);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < n_ch; ++c) {
    for (std::size_t b = 0; b < beats.size(); ++b) {
      const double t0 = beats[b] + delays[b * n_ch + c];
      const int first = std::max(0, static_cast<int>(std::floor((t0 - support) / dt_ms)));
      const int last = std::min(n_samples - 1, static_cast<int>(std::ceil((t0 + support) / dt_ms)));
      for (int t = first; t <= last; ++t) {
        const double u = t * dt_ms - t0;
        const double slow = -slow_gain * std::exp(-0.5 * (u / slow_width) * (u / slow_width));
        out.values(t, c) += amplitude[c] * (biphasic(u, config.deflection_width_ms) + slow);
      }
    }
    for (int t = 0; t < n_samples; ++t)
      out.values(t, c) += noise[static_cast<std::size_t>(t) * n_ch + c];
  }
  return out;
}

SimConfig perturbed_config(const SimConfig& base, RhythmClass rhythm, std::uint64_t seed, int index) {
  SimConfig cfg = base;
  cfg.rhythm = rhythm;
  cfg.seed = seed + static_cast<std::uint64_t>(index);
  std::mt19937_64 rng(cfg.seed * 0x2545F4914F6CDD1DULL + 17);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double g_cycle = gauss(rng), g_spread = gauss(rng), g_angle = gauss(rng), g_onset = gauss(rng);
  if (rhythm == RhythmClass::Sinus) {
    cfg.cycle_length_ms = base.cycle_length_ms * std::clamp(1.0 + 0.05 * g_cycle, 0.85, 1.15);
    cfg.onset_ms = std::max(0.0, base.onset_ms + 10.0 * g_onset);
  } else {
    cfg.af_cycle_length_ms = base.af_cycle_length_ms * std::clamp(1.0 + 0.10 * g_cycle, 0.7, 1.3);
  }
  cfg.conduction_spread_ms = base.conduction_spread_ms * std::clamp(1.0 + 0.15 * g_spread, 0.5, 1.5);
  cfg.wavefront_angle_rad = base.wavefront_angle_rad + 0.25 * g_angle;
  return cfg;
}

DatasetManifest build_dataset(int n_sinus, int n_af, const SimConfig& base_config, std::uint64_t seed,
                              const DatasetOptions& options) {
  require(n_sinus >= 0 && n_af >= 0 && n_sinus + n_af >= 1, ErrorCode::InvalidConfig,
          "dataset needs at least one record");
  base_config.validate();
  const int total = n_sinus + n_af;

  DatasetManifest manifest;
  manifest.base_dir = options.out_dir;
  manifest.records.resize(total);
  std::vector<std::string> errors(total);

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < total; ++i) {
    try {
      const RhythmClass rhythm = i < n_sinus ? RhythmClass::Sinus : RhythmClass::AF;
      const SimConfig cfg = perturbed_config(base_config, rhythm, seed, i);
      EgmTensor rec = simulate_record(cfg);
      if (options.target_rate_hz) rec = resample(rec, *options.target_rate_hz);
      if (options.normalize) rec = normalize(rec);

      char id[32];
      std::snprintf(id, sizeof(id), "rec-%04d", i);
      RecordEntry& entry = manifest.records[i];
      entry.record_id = id;
      entry.rhythm = rhythm;
      entry.file_path = std::filesystem::path("records") / (entry.record_id + ".egm");
      entry.samples = rec.samples();
      entry.channels = rec.channels();
      entry.sample_rate_hz = rec.sample_rate_hz;
      save_record(rec, manifest.resolve(entry));
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) fail(ErrorCode::IoFailure, e);

  save_manifest(manifest, options.out_dir / "manifest.tsv");
  return manifest;
}

}  // namespace egmsynth
