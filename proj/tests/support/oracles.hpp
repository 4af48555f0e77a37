#pragma once

// Brute-force reference computations for the tests. Deliberately naive:
// explicit loops, direct DFTs, no shared code with the library beyond types.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "egmsynth/signal.hpp"
#include "egmsynth/vae.hpp"

namespace oracle {

using egmsynth::Matrix;
using egmsynth::Vector;

inline Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

inline double mse(const Matrix& x, const Matrix& y) {
  double acc = 0.0;
  for (int t = 0; t < x.rows(); ++t)
    for (int n = 0; n < x.cols(); ++n) acc += (x(t, n) - y(t, n)) * (x(t, n) - y(t, n));
  return acc / (static_cast<double>(x.rows()) * static_cast<double>(x.cols()));
}

inline double kl(const Vector& mu, const Vector& lv) {
  double acc = 0.0;
  for (int d = 0; d < mu.size(); ++d) acc += 0.5 * (mu[d] * mu[d] + std::exp(lv[d]) - 1.0 - lv[d]);
  return acc;
}

/// Pearson with an optional additive denominator term.
inline double pearson_column(const Matrix& x, const Matrix& y, int n, double eps) {
  const int T = static_cast<int>(x.rows());
  double mx = 0.0, my = 0.0;
  for (int t = 0; t < T; ++t) {
    mx += x(t, n);
    my += y(t, n);
  }
  mx /= T;
  my /= T;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (int t = 0; t < T; ++t) {
    sxy += (x(t, n) - mx) * (y(t, n) - my);
    sxx += (x(t, n) - mx) * (x(t, n) - mx);
    syy += (y(t, n) - my) * (y(t, n) - my);
  }
  return sxy / (std::sqrt(sxx) * std::sqrt(syy) + eps);
}

inline double corr(const Matrix& x, const Matrix& y) {
  double acc = 0.0;
  for (int n = 0; n < x.cols(); ++n) acc += pearson_column(x, y, n, 1e-8);
  return 1.0 - acc / static_cast<double>(x.cols());
}

inline double grad(const Matrix& x, const Matrix& y) {
  double acc = 0.0;
  for (int n = 0; n < x.cols(); ++n)
    for (int t = 0; t + 1 < x.rows(); ++t) acc += std::abs((x(t + 1, n) - x(t, n)) - (y(t + 1, n) - y(t, n)));
  return acc / (static_cast<double>(x.rows() - 1) * static_cast<double>(x.cols()));
}

/// |STFT| per channel: result[n][s][f], periodic Hann, direct DFT.
inline std::vector<std::vector<std::vector<double>>> stft_mag(const Matrix& x, int n_fft, int hop) {
  const int T = static_cast<int>(x.rows()), N = static_cast<int>(x.cols());
  const int S = 1 + (T - n_fft) / hop, F = n_fft / 2 + 1;
  std::vector<std::vector<std::vector<double>>> out(N, std::vector<std::vector<double>>(S, std::vector<double>(F)));
  for (int n = 0; n < N; ++n)
    for (int s = 0; s < S; ++s)
      for (int f = 0; f < F; ++f) {
        std::complex<double> acc = 0.0;
        for (int t = 0; t < n_fft; ++t) {
          const double w = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * t / n_fft));
          acc += w * x(s * hop + t, n) * std::polar(1.0, -2.0 * std::numbers::pi * f * t / n_fft);
        }
        out[n][s][f] = std::abs(acc);
      }
  return out;
}

inline bool high(int f, int n_fft, double cutoff) { return static_cast<double>(f) / (n_fft / 2) > cutoff; }

inline double hf(const Matrix& x, const Matrix& y, int n_fft, int hop, double cutoff) {
  const auto A = stft_mag(x, n_fft, hop), B = stft_mag(y, n_fft, hop);
  const int N = static_cast<int>(A.size()), S = static_cast<int>(A[0].size()), F = static_cast<int>(A[0][0].size());
  double acc = 0.0;
  for (int n = 0; n < N; ++n) {
    double peak = 0.0;
    for (int s = 0; s < S; ++s)
      for (int f = 0; f < F; ++f) peak = std::max(peak, A[n][s][f]);
    for (int s = 0; s < S; ++s)
      for (int f = 0; f < F; ++f) {
        if (!high(f, n_fft, cutoff)) continue;
        const double w = A[n][s][f] / (peak + 1e-8);
        acc += w * std::abs(std::log(B[n][s][f] + 1e-6) - std::log(A[n][s][f] + 1e-6));
      }
  }
  return acc / (static_cast<double>(F) * S * N);
}

inline double noise(const Matrix& x, const Matrix& y, int n_fft, int hop, double cutoff, double spur) {
  const auto A = stft_mag(x, n_fft, hop), B = stft_mag(y, n_fft, hop);
  const int N = static_cast<int>(A.size()), S = static_cast<int>(A[0].size()), F = static_cast<int>(A[0][0].size());
  double peak = 0.0;
  for (const auto& ch : A)
    for (const auto& fr : ch)
      for (double v : fr) peak = std::max(peak, v);
  double acc = 0.0;
  for (int n = 0; n < N; ++n)
    for (int s = 0; s < S; ++s)
      for (int f = 0; f < F; ++f)
        if (high(f, n_fft, cutoff) && A[n][s][f] < spur * peak) acc += std::max(0.0, std::log(B[n][s][f] + 1e-6));
  return acc / (static_cast<double>(F) * S * N);
}

inline double lsd(const Matrix& x, const Matrix& y, int n_fft, int hop) {
  const auto A = stft_mag(x, n_fft, hop), B = stft_mag(y, n_fft, hop);
  double acc = 0.0;
  int frames = 0;
  for (std::size_t n = 0; n < A.size(); ++n)
    for (std::size_t s = 0; s < A[n].size(); ++s) {
      double sq = 0.0;
      for (std::size_t f = 0; f < A[n][s].size(); ++f) {
        const double d = 10.0 * std::log10(A[n][s][f] * A[n][s][f] + 1e-12) -
                         10.0 * std::log10(B[n][s][f] * B[n][s][f] + 1e-12);
        sq += d * d;
      }
      acc += std::sqrt(sq / static_cast<double>(A[n][s].size()));
      ++frames;
    }
  return acc / frames;
}

inline double rmse(const Matrix& x, const Matrix& y) { return std::sqrt(mse(x, y)); }

/// Biased squared MMD over rows with explicit double sums.
inline double mmd(const Matrix& a, const Matrix& b, double bw) {
  auto k = [&](const Matrix& p, int i, const Matrix& q, int j) {
    double d = 0.0;
    for (int c = 0; c < p.cols(); ++c) d += (p(i, c) - q(j, c)) * (p(i, c) - q(j, c));
    return std::exp(-d / (2.0 * bw * bw));
  };
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.rows(); ++j) saa += k(a, i, a, j);
  for (int i = 0; i < b.rows(); ++i)
    for (int j = 0; j < b.rows(); ++j) sbb += k(b, i, b, j);
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.rows(); ++j) sab += k(a, i, b, j);
  const double na = static_cast<double>(a.rows()), nb = static_cast<double>(b.rows());
  return saa / (na * na) + sbb / (nb * nb) - 2.0 * sab / (na * nb);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

/// Dominant nonzero DFT bin of a vector.
inline int dominant_bin(const std::vector<double>& v) {
  const int T = static_cast<int>(v.size());
  double mean = 0.0;
  for (double s : v) mean += s;
  mean /= T;
  int best = 1;
  double peak = -1.0;
  for (int f = 1; f <= T / 2; ++f) {
    std::complex<double> acc = 0.0;
    for (int t = 0; t < T; ++t) acc += (v[t] - mean) * std::polar(1.0, -2.0 * std::numbers::pi * f * t / T);
    if (std::abs(acc) > peak) {
      peak = std::abs(acc);
      best = f;
    }
  }
  return best;
}

inline egmsynth::ModelConfig toy_model(bool conditional = false) {
  egmsynth::ModelConfig c;
  c.latent_dim = 8;
  c.input_samples = 64;
  c.input_channels = 32;
  c.conditional = conditional;
  c.encoder_widths = {8, 16, 32, 64};
  c.decoder_widths = {64, 32, 16, 8};
  c.working_rate_hz = 32.0;
  return c;
}

}  // namespace oracle
