#pragma once

// Small surrogate datasets at the toy model's working shape (64 x 32 at 32 Hz).

#include <filesystem>

#include "egmsynth/signal.hpp"
#include "egmsynth/surrogate.hpp"

namespace testing {

inline egmsynth::SimConfig toy_sim() {
  egmsynth::SimConfig c;
  c.n_channels = 32;
  c.duration_s = 2.0;
  c.sample_rate_hz = 500.0;
  return c;
}

/// Simulated at 500 Hz, resampled to 32 Hz, normalized and split.
inline egmsynth::DatasetManifest toy_dataset(const std::filesystem::path& dir, int n_sinus, int n_af,
                                             std::uint64_t seed) {
  egmsynth::DatasetOptions opt;
  opt.out_dir = dir;
  opt.target_rate_hz = 32.0;
  auto m = egmsynth::build_dataset(n_sinus, n_af, toy_sim(), seed, opt);
  return egmsynth::split(m, seed, n_sinus > 0 && n_af > 0);
}

}  // namespace testing
