#pragma once

#include <span>

#include "egmsynth/spectral.hpp"
#include "egmsynth/vae.hpp"

namespace egmsynth {

/// Mixture weights of the composite objective. beta is the (annealed) KL weight.
struct LossWeights {
  double recon = 0.35;
  double corr = 0.5;
  double grad = 0.35;
  double hf = 0.25;
  double noise = 0.10;
  double beta = 0.0;
};

struct LossBreakdown {
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
  double corr = 0.0;
  double grad = 0.0;
  double hf = 0.0;
  double noise = 0.0;
};

inline constexpr double kCorrEpsilon = 1e-8;
inline constexpr double kLogMagnitudeFloor = 1e-6;
inline constexpr double kRelativeAmplitudeEpsilon = 1e-8;

double recon_loss(const Matrix& x, const Matrix& x_hat);
double kl_loss(const LatentStats& stats);
/// KL to N(prior_mean, I).
double kl_loss(const LatentStats& stats, const Vector& prior_mean);
double kl_loss(std::span<const LatentStats> batch);
double corr_loss(const Matrix& x, const Matrix& x_hat);
double grad_loss(const Matrix& x, const Matrix& x_hat);
double hf_loss(const Matrix& x, const Matrix& x_hat, const SpectralConfig& cfg);
double noise_loss(const Matrix& x, const Matrix& x_hat, const SpectralConfig& cfg);

/// Weighted composition of every term for one sample. A null prior_mean means N(0, I).
LossBreakdown total_loss(const Matrix& x, const Matrix& x_hat, const LatentStats& stats,
                         const LossWeights& weights, const SpectralConfig& cfg,
                         const Vector* prior_mean = nullptr);

/// Gradient of the total with respect to the reconstruction and the posterior parameters.
struct LossGradient {
  Matrix x_hat;
  Vector mean;
  Vector log_variance;
};

LossBreakdown total_loss_with_grad(const Matrix& x, const Matrix& x_hat, const LatentStats& stats,
                                   const LossWeights& weights, const SpectralConfig& cfg,
                                   LossGradient& grad, const Vector* prior_mean = nullptr);

LossBreakdown compose(const LossBreakdown& parts, const LossWeights& weights);
/// Component-wise mean over a batch.
LossBreakdown batch_mean(std::span<const LossBreakdown> parts);

}  // namespace egmsynth
