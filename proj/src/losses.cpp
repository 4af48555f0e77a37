#include "egmsynth/losses.hpp"

#include <cmath>

#include "egmsynth/errors.hpp"

namespace egmsynth {

namespace {

void check_pair(const Matrix& x, const Matrix& x_hat) {
  require(x.rows() == x_hat.rows() && x.cols() == x_hat.cols() && x.size() > 0,
          ErrorCode::ShapeMismatch, "target and reconstruction shapes differ");
}

void check_spectral(const Matrix& x, const SpectralConfig& cfg) {
  cfg.validate();
  require(x.rows() >= cfg.n_fft, ErrorCode::SignalTooShort,
          "signal has " + std::to_string(x.rows()) + " samples, n_fft is " + std::to_string(cfg.n_fft));
}

double sign(double v) { return (v > 0.0) - (v < 0.0); }

// Per-node Pearson terms; optional gradient of (1 - mean r) w.r.t. x_hat.
double corr_impl(const Matrix& x, const Matrix& x_hat, Matrix* grad) {
  const Eigen::Index n = x.cols();
  const auto xc = (x.rowwise() - x.colwise().mean()).eval();
  const auto yc = (x_hat.rowwise() - x_hat.colwise().mean()).eval();
  double mean_r = 0.0;
  if (grad) grad->setZero(x.rows(), n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const double sxy = xc.col(c).dot(yc.col(c));
    const double sx = std::sqrt(xc.col(c).squaredNorm());
    const double sy = std::sqrt(yc.col(c).squaredNorm());
    const double denom = sx * sy + kCorrEpsilon;
    mean_r += sxy / denom;
    if (grad) {
      // d r/d y_t = a_t / D - sxy * sx * b_t / (sy * D^2); mean-centering terms cancel
      Eigen::VectorXd g = xc.col(c) / denom;
      if (sy > 0.0) g -= (sxy * sx / (sy * denom * denom)) * yc.col(c);
      grad->col(c) = -g / static_cast<double>(n);
    }
  }
  return 1.0 - mean_r / static_cast<double>(n);
}

double grad_impl(const Matrix& x, const Matrix& x_hat, Matrix* grad) {
  const Eigen::Index t = x.rows();
  require(t >= 2, ErrorCode::SignalTooShort, "gradient loss needs at least 2 samples");
  const Matrix diff = x_hat - x;  // Δx̂ - Δx = Δ(x̂ - x)
  const Matrix d = diff.bottomRows(t - 1) - diff.topRows(t - 1);
  const double count = static_cast<double>((t - 1) * x.cols());
  if (grad) {
    grad->setZero(t, x.cols());
    const Matrix s = d.unaryExpr([](double v) { return sign(v); }) / count;
    grad->bottomRows(t - 1) += s;
    grad->topRows(t - 1) -= s;
  }
  return d.cwiseAbs().sum() / count;
}

struct SpectralTerms {
  double hf = 0.0;
  double noise = 0.0;
};

// Shared STFT pass for the high-frequency matching and spur-suppression terms.
SpectralTerms spectral_impl(const Matrix& x, const Matrix& x_hat, const SpectralConfig& cfg,
                            Matrix* grad_hf, Matrix* grad_noise) {
  const StftPlan plan(cfg);
  const auto truth = plan.forward(x);
  const auto pred = plan.forward(x_hat);
  const Matrix mag_t = truth.magnitude();
  const Matrix mag_p = pred.magnitude();
  const int frames = truth.frames, channels = truth.channels, bins = cfg.bins();
  const double norm = static_cast<double>(bins) * frames * channels;
  const double spur_level = cfg.spur_fraction * mag_t.maxCoeff();

  Matrix g_hf, g_noise;
  if (grad_hf) g_hf = Matrix::Zero(mag_p.rows(), bins);
  if (grad_noise) g_noise = Matrix::Zero(mag_p.rows(), bins);

  SpectralTerms out;
  for (int c = 0; c < channels; ++c) {
    const auto rows = mag_t.middleRows(static_cast<Eigen::Index>(c) * frames, frames);
    const double channel_peak = rows.maxCoeff() + kRelativeAmplitudeEpsilon;
    for (int s = 0; s < frames; ++s) {
      const Eigen::Index r = static_cast<Eigen::Index>(c) * frames + s;
      for (int f = 0; f < bins; ++f) {
        if (!cfg.high_frequency(f)) continue;
        const double at = mag_t(r, f), ap = mag_p(r, f);
        const double lt = std::log(at + kLogMagnitudeFloor);
        const double lp = std::log(ap + kLogMagnitudeFloor);
        const double w = at / channel_peak;
        out.hf += w * std::abs(lp - lt);
        if (grad_hf) g_hf(r, f) = w * sign(lp - lt) / (ap + kLogMagnitudeFloor) / norm;
        if (at < spur_level) {
          out.noise += std::max(lp, 0.0);
          if (grad_noise && lp > 0.0) g_noise(r, f) = 1.0 / (ap + kLogMagnitudeFloor) / norm;
        }
      }
    }
  }
  out.hf /= norm;
  out.noise /= norm;

  auto chain = [&](const Matrix& g_mag) {
    // d|X| = (re dre + im dim) / |X|; zero where the magnitude vanishes
    Matrix unit_re = Matrix::Zero(g_mag.rows(), bins), unit_im = Matrix::Zero(g_mag.rows(), bins);
    for (Eigen::Index r = 0; r < g_mag.rows(); ++r)
      for (int f = 0; f < bins; ++f) {
        const double a = mag_p(r, f);
        if (a > 0.0 && g_mag(r, f) != 0.0) {
          unit_re(r, f) = g_mag(r, f) * pred.re(r, f) / a;
          unit_im(r, f) = g_mag(r, f) * pred.im(r, f) / a;
        }
      }
    return plan.backward(unit_re, unit_im, static_cast<int>(x.rows()), channels);
  };
  if (grad_hf) *grad_hf = chain(g_hf);
  if (grad_noise) *grad_noise = chain(g_noise);
  return out;
}

}  // namespace

double recon_loss(const Matrix& x, const Matrix& x_hat) {
  check_pair(x, x_hat);
  return (x - x_hat).squaredNorm() / static_cast<double>(x.size());
}

double kl_loss(const LatentStats& stats) {
  require(stats.mean.size() == stats.log_variance.size(), ErrorCode::ShapeMismatch, "latent length mismatch");
  return 0.5 * (stats.mean.array().square() + stats.log_variance.array().exp() - 1.0 -
                stats.log_variance.array())
                   .sum();
}

double kl_loss(const LatentStats& stats, const Vector& prior_mean) {
  require(stats.mean.size() == prior_mean.size(), ErrorCode::ShapeMismatch, "prior length mismatch");
  LatentStats shifted{stats.mean - prior_mean, stats.log_variance};
  return kl_loss(shifted);
}

double kl_loss(std::span<const LatentStats> batch) {
  require(!batch.empty(), ErrorCode::EmptySet, "empty batch");
  double acc = 0.0;
  for (const auto& s : batch) acc += kl_loss(s);
  return acc / static_cast<double>(batch.size());
}

double corr_loss(const Matrix& x, const Matrix& x_hat) {
  check_pair(x, x_hat);
  return corr_impl(x, x_hat, nullptr);
}

double grad_loss(const Matrix& x, const Matrix& x_hat) {
  check_pair(x, x_hat);
  return grad_impl(x, x_hat, nullptr);
}

double hf_loss(const Matrix& x, const Matrix& x_hat, const SpectralConfig& cfg) {
  check_pair(x, x_hat);
  check_spectral(x, cfg);
  return spectral_impl(x, x_hat, cfg, nullptr, nullptr).hf;
}

double noise_loss(const Matrix& x, const Matrix& x_hat, const SpectralConfig& cfg) {
  check_pair(x, x_hat);
  check_spectral(x, cfg);
  return spectral_impl(x, x_hat, cfg, nullptr, nullptr).noise;
}

LossBreakdown compose(const LossBreakdown& p, const LossWeights& w) {
  LossBreakdown out = p;
  out.total = w.recon * p.recon + w.beta * p.kl + w.corr * p.corr + w.grad * p.grad + w.hf * p.hf +
              w.noise * p.noise;
  return out;
}

LossBreakdown total_loss(const Matrix& x, const Matrix& x_hat, const LatentStats& stats,
                         const LossWeights& weights, const SpectralConfig& cfg, const Vector* prior_mean) {
  check_pair(x, x_hat);
  check_spectral(x, cfg);
  LossBreakdown p;
  p.recon = recon_loss(x, x_hat);
  p.kl = prior_mean ? kl_loss(stats, *prior_mean) : kl_loss(stats);
  p.corr = corr_impl(x, x_hat, nullptr);
  p.grad = grad_impl(x, x_hat, nullptr);
  const auto spec = spectral_impl(x, x_hat, cfg, nullptr, nullptr);
  p.hf = spec.hf;
  p.noise = spec.noise;
  return compose(p, weights);
}

LossBreakdown total_loss_with_grad(const Matrix& x, const Matrix& x_hat, const LatentStats& stats,
                                   const LossWeights& w, const SpectralConfig& cfg, LossGradient& grad,
                                   const Vector* prior_mean) {
  check_pair(x, x_hat);
  check_spectral(x, cfg);
  LossBreakdown p;
  p.recon = recon_loss(x, x_hat);
  p.kl = prior_mean ? kl_loss(stats, *prior_mean) : kl_loss(stats);
  Matrix g_corr, g_grad, g_hf, g_noise;
  p.corr = corr_impl(x, x_hat, &g_corr);
  p.grad = grad_impl(x, x_hat, &g_grad);
  const auto spec = spectral_impl(x, x_hat, cfg, &g_hf, &g_noise);
  p.hf = spec.hf;
  p.noise = spec.noise;

  grad.x_hat = (2.0 * w.recon / static_cast<double>(x.size())) * (x_hat - x) + w.corr * g_corr +
               w.grad * g_grad + w.hf * g_hf + w.noise * g_noise;
  grad.mean = prior_mean ? (w.beta * (stats.mean - *prior_mean)).eval() : (w.beta * stats.mean).eval();
  grad.log_variance = w.beta * 0.5 * (stats.log_variance.array().exp() - 1.0).matrix();
  return compose(p, w);
}

LossBreakdown batch_mean(std::span<const LossBreakdown> parts) {
  require(!parts.empty(), ErrorCode::EmptySet, "empty batch");
  LossBreakdown m;
  for (const auto& p : parts) {
    m.total += p.total;
    m.recon += p.recon;
    m.kl += p.kl;
    m.corr += p.corr;
    m.grad += p.grad;
    m.hf += p.hf;
    m.noise += p.noise;
  }
  const double n = static_cast<double>(parts.size());
  m.total /= n;
  m.recon /= n;
  m.kl /= n;
  m.corr /= n;
  m.grad /= n;
  m.hf /= n;
  m.noise /= n;
  return m;
}

}  // namespace egmsynth
