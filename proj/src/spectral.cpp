#include "egmsynth/spectral.hpp"

#include <cmath>
#include <numbers>

#include "egmsynth/errors.hpp"

namespace egmsynth {

void SpectralConfig::validate() const {
  require(n_fft >= 2 && n_fft % 2 == 0, ErrorCode::InvalidConfig, "n_fft must be even and >= 2");
  require(hop >= 1 && hop <= n_fft, ErrorCode::InvalidConfig, "hop must lie in [1, n_fft]");
  require(cutoff_normalized > 0.0 && cutoff_normalized < 1.0, ErrorCode::InvalidConfig,
          "cutoff must lie in (0, 1)");
  require(spur_fraction > 0.0 && spur_fraction < 1.0, ErrorCode::InvalidConfig,
          "spur fraction must lie in (0, 1)");
}

StftPlan::StftPlan(int n_fft, int hop) : n_fft_(n_fft), hop_(hop) {
  require(n_fft >= 2 && hop >= 1, ErrorCode::InvalidConfig, "bad STFT geometry");
  const int bins = n_fft / 2 + 1;
  cos_.resize(n_fft, bins);
  sin_.resize(n_fft, bins);
  for (int t = 0; t < n_fft; ++t) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * t / n_fft);
    for (int f = 0; f < bins; ++f) {
      // reduce the phase index first so large products stay exact
      const double phase = 2.0 * std::numbers::pi * static_cast<double>((static_cast<long>(f) * t) % n_fft) / n_fft;
      cos_(t, f) = w * std::cos(phase);
      sin_(t, f) = -w * std::sin(phase);
    }
  }
}

StftPlan::Spectrum StftPlan::forward(const Matrix& x) const {
  const int samples = static_cast<int>(x.rows());
  const int channels = static_cast<int>(x.cols());
  const int s = frames(samples);
  require(s > 0, ErrorCode::SignalTooShort, "signal shorter than n_fft");
  Matrix framed(static_cast<Eigen::Index>(channels) * s, n_fft_);
  for (int c = 0; c < channels; ++c)
    for (int k = 0; k < s; ++k)
      framed.row(static_cast<Eigen::Index>(c) * s + k) = x.col(c).segment(static_cast<Eigen::Index>(k) * hop_, n_fft_).transpose();
  Spectrum out;
  out.frames = s;
  out.channels = channels;
  out.re.noalias() = framed * cos_;
  out.im.noalias() = framed * sin_;
  return out;
}

Matrix StftPlan::backward(const Matrix& grad_re, const Matrix& grad_im, int samples, int channels) const {
  const int s = frames(samples);
  require(grad_re.rows() == static_cast<Eigen::Index>(channels) * s && grad_re.cols() == cos_.cols(),
          ErrorCode::ShapeMismatch, "STFT gradient shape mismatch");
  Matrix framed = grad_re * cos_.transpose();
  framed.noalias() += grad_im * sin_.transpose();
  Matrix g = Matrix::Zero(samples, channels);
  for (int c = 0; c < channels; ++c)
    for (int k = 0; k < s; ++k)
      g.col(c).segment(static_cast<Eigen::Index>(k) * hop_, n_fft_) +=
          framed.row(static_cast<Eigen::Index>(c) * s + k).transpose();
  return g;
}

}  // namespace egmsynth
