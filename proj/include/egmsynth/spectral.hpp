#pragma once

#include "egmsynth/signal.hpp"

namespace egmsynth {

struct SpectralConfig {
  int n_fft = 256;
  int hop = 64;
  double cutoff_normalized = 0.40;  // fraction of Nyquist
  double spur_fraction = 0.01;      // "negligible" = below this fraction of the record's peak bin

  int bins() const { return n_fft / 2 + 1; }
  int frames(int samples) const { return samples < n_fft ? 0 : 1 + (samples - n_fft) / hop; }
  void validate() const;
  bool high_frequency(int bin) const { return static_cast<double>(bin) / (n_fft / 2) > cutoff_normalized; }
};

/// Periodic-Hann STFT of every channel of a (time x channels) matrix, no
/// padding. Rows of the result are ordered channel-major (channel * frames +
/// frame); columns are the n_fft/2 + 1 nonnegative-frequency bins.
class StftPlan {
 public:
  StftPlan(int n_fft, int hop);
  explicit StftPlan(const SpectralConfig& cfg) : StftPlan(cfg.n_fft, cfg.hop) {}

  struct Spectrum {
    Matrix re;
    Matrix im;
    int frames = 0;
    int channels = 0;

    Matrix magnitude() const { return (re.array().square() + im.array().square()).sqrt().matrix(); }
  };

  int n_fft() const { return n_fft_; }
  int hop() const { return hop_; }
  int frames(int samples) const { return samples < n_fft_ ? 0 : 1 + (samples - n_fft_) / hop_; }

  Spectrum forward(const Matrix& x) const;
  /// Adjoint of forward: dL/dx given dL/d(re) and dL/d(im).
  Matrix backward(const Matrix& grad_re, const Matrix& grad_im, int samples, int channels) const;

 private:
  int n_fft_;
  int hop_;
  Matrix cos_;  // n_fft x bins, window folded in
  Matrix sin_;  // n_fft x bins, holds -w[t] sin(...)
};

}  // namespace egmsynth
