#include "egmsynth/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "egmsynth/csv.hpp"
#include "egmsynth/errors.hpp"
#include "egmsynth/optim.hpp"

namespace egmsynth {

void BetaSchedule::validate() const {
  require(beta_max >= 0.0 && std::isfinite(beta_max), ErrorCode::InvalidConfig, "beta_max must be >= 0");
  require(warmup_epochs >= 0, ErrorCode::InvalidConfig, "warmup_epochs must be >= 0");
}

double beta_at(const BetaSchedule& s, int epoch) {
  require(epoch >= 0, ErrorCode::InvalidConfig, "epoch must be >= 0");
  if (s.warmup_epochs == 0 || epoch >= s.warmup_epochs) return s.beta_max;
  return s.beta_max * static_cast<double>(epoch) / static_cast<double>(s.warmup_epochs);
}

void TrainConfig::validate() const {
  auto check = [](bool ok, const char* what) {
    if (!ok) fail(ErrorCode::InvalidConfig, what);
  };
  check(lr > 0.0, "lr must be positive");
  check(batch_size > 0, "batch_size must be positive");
  check(max_epochs > 0, "max_epochs must be positive");
  check(early_stop_patience > 0 && early_stop_patience < max_epochs,
        "early_stop_patience must lie in [1, max_epochs)");
  check(scheduler.factor > 0.0 && scheduler.factor < 1.0, "scheduler factor must lie in (0, 1)");
  check(scheduler.patience > 0, "scheduler patience must be positive");
  check(improvement_tolerance >= 0.0, "improvement_tolerance must be >= 0");
  spectral.validate();
}

namespace {

std::optional<RhythmClass> label_for(const Vae& model, const EgmTensor& x) {
  if (model.config().conditional) return x.rhythm;
  return std::nullopt;
}

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  // splitmix64 finalizer over the running hash
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return h;
}

Vector draw_noise(int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector eps(dim);
  for (auto& e : eps) e = gauss(rng);
  return eps;
}

void check_finite(const LossBreakdown& b, const std::string& where) {
  for (double v : {b.total, b.recon, b.kl, b.corr, b.grad, b.hf, b.noise})
    if (!std::isfinite(v))
      fail(ErrorCode::NonFiniteLoss, "non-finite loss " + where + " (recon=" + format_double(b.recon) +
                                         " kl=" + format_double(b.kl) + " corr=" + format_double(b.corr) + ")");
}

void write_row(std::ostream& os, std::initializer_list<double> values) {
  bool first = true;
  for (double v : values) {
    if (!first) os << ',';
    os << format_double(v);
    first = false;
  }
  os << '\n';
}

void write_breakdown(std::ostream& os, const LossBreakdown& b) {
  os << format_double(b.total) << ',' << format_double(b.recon) << ',' << format_double(b.kl) << ','
     << format_double(b.corr) << ',' << format_double(b.grad) << ',' << format_double(b.hf) << ','
     << format_double(b.noise);
}

}  // namespace

LossBreakdown sample_loss(const Vae& model, const EgmTensor& x, const LossWeights& weights,
                          const SpectralConfig& cfg, const Vector* eps) {
  const auto label = label_for(model, x);
  const LatentStats stats = model.encode(x, label);
  const Vector z = eps ? reparameterize(stats, *eps) : stats.mean;
  const EgmTensor x_hat = model.decode(z, label);
  const Vector prior = model.prior_mean(label);
  return total_loss(x.values, x_hat.values, stats, weights, cfg, &prior);
}

LossBreakdown validation_loss(const Vae& model, std::span<const EgmTensor> set, const LossWeights& weights,
                              const SpectralConfig& cfg) {
  require(!set.empty(), ErrorCode::EmptySplit, "validation set is empty");
  std::vector<LossBreakdown> parts(set.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(set.size()); ++i)
    parts[i] = sample_loss(model, set[i], weights, cfg);
  return batch_mean(parts);
}

LossBreakdown loss_and_gradient(const Vae& model, std::span<const EgmTensor> batch, std::span<const Vector> eps,
                                const LossWeights& weights, const SpectralConfig& cfg,
                                std::span<double> grad) {
  require(!batch.empty() && eps.size() == batch.size(), ErrorCode::ShapeMismatch, "batch/noise size mismatch");
  require(grad.size() == model.parameter_count(), ErrorCode::ShapeMismatch, "gradient buffer size mismatch");
  const auto& enc = model.encoder();
  const auto& dec = model.decoder();
  const std::size_t n_enc = enc.param_count(), n_all = model.parameter_count();
  const int d = model.config().latent_dim;
  const std::size_t n = batch.size();

  std::vector<LossBreakdown> parts(n);
  std::vector<std::vector<double>> per_sample(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const EgmTensor& x = batch[i];
    const auto label = label_for(model, x);
    auto& g = per_sample[i];
    g.assign(n_all, 0.0);
    std::span<double> g_enc = std::span<double>(g).first(n_enc);
    std::span<double> g_dec = std::span<double>(g).subspan(n_enc);

    const auto enc_acts = enc.forward(model.encoder_input(x, label), model.encoder_parameters());
    const LatentStats stats = model.split_head(enc_acts.back());
    const Vector z = reparameterize(stats, eps[i]);
    const auto dec_acts = dec.forward(model.decoder_input(z, label), model.decoder_parameters());
    const EgmTensor x_hat = model.to_signal(dec_acts.back(), label);

    LossGradient lg;
    const Vector prior = model.prior_mean(label);
    parts[i] = total_loss_with_grad(x.values, x_hat.values, stats, weights, cfg, lg, &prior);

    nn::Tensor g_out{dec.output_shape(), std::vector<double>(lg.x_hat.data(), lg.x_hat.data() + lg.x_hat.size())};
    const nn::Tensor g_in = dec.backward(dec_acts, g_out, model.decoder_parameters(), g_dec);

    nn::Tensor g_head = nn::Tensor::zeros(enc.output_shape());
    for (int k = 0; k < d; ++k) {
      const double gz = g_in.data[k];
      const double sd = std::exp(0.5 * stats.log_variance[k]);
      g_head.data[k] = lg.mean[k] + gz;
      g_head.data[d + k] = lg.log_variance[k] + gz * eps[i][k] * 0.5 * sd;
    }
    enc.backward(enc_acts, g_head, model.encoder_parameters(), g_enc);
  }

  std::fill(grad.begin(), grad.end(), 0.0);
  for (const auto& g : per_sample)
    for (std::size_t j = 0; j < n_all; ++j) grad[j] += g[j];
  for (auto& v : grad) v /= static_cast<double>(n);
  return batch_mean(parts);
}

TrainReport train(Vae& model, std::span<const EgmTensor> train_set, std::span<const EgmTensor> val_set,
                  const TrainConfig& config, const BetaSchedule& schedule,
                  const std::optional<std::filesystem::path>& out_dir) {
  config.validate();
  schedule.validate();
  require(!train_set.empty(), ErrorCode::EmptySplit, "training split is empty");
  require(!val_set.empty(), ErrorCode::EmptySplit, "validation split is empty");

  std::ofstream step_log, epoch_log;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    step_log.open(*out_dir / "train_log.csv", std::ios::trunc);
    epoch_log.open(*out_dir / "epoch_log.csv", std::ios::trunc);
    if (!step_log || !epoch_log) fail(ErrorCode::IoFailure, "cannot write logs under " + out_dir->string());
    step_log << "step,epoch,beta,total,recon,kl,corr,grad,hf,noise\n";
    epoch_log << "epoch,beta,lr,train_total,train_recon,train_kl,train_corr,train_grad,train_hf,train_noise,"
                 "val_total,val_recon,val_kl,val_corr,val_grad,val_hf,val_noise\n";
    std::ofstream cfg_out(*out_dir / "config.used", std::ios::trunc);
    cfg_out << model.config().to_text() << to_text(config, schedule);
  }

  const std::size_t n = train_set.size();
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), n);
  const int d = model.config().latent_dim;

  Adam adam(model.parameter_count(), AdamConfig{config.lr});
  std::vector<double> grad(model.parameter_count());
  std::vector<double> best_params(model.parameters().begin(), model.parameters().end());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(mix(config.seed, 0x5eed));

  TrainReport report;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0, since_plateau = 0;
  double plateau_best = std::numeric_limits<double>::infinity();
  long step = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    LossWeights w = config.weights;
    w.beta = beta_at(schedule, epoch - 1);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    LossBreakdown epoch_sum;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      std::vector<EgmTensor> xs;
      std::vector<Vector> eps;
      for (std::size_t j = start; j < stop; ++j) {
        xs.push_back(train_set[order[j]]);
        eps.push_back(draw_noise(d, mix(mix(mix(config.seed, static_cast<std::uint64_t>(epoch)),
                                            static_cast<std::uint64_t>(step)),
                                        order[j])));
      }
      const LossBreakdown b = loss_and_gradient(model, xs, eps, w, config.spectral, grad);
      check_finite(b, "at epoch " + std::to_string(epoch) + " step " + std::to_string(step));
      if (!config.freeze_parameters) adam.step(model.parameters(), grad);
      ++step;
      const double m = static_cast<double>(stop - start);
      epoch_sum.total += m * b.total;
      epoch_sum.recon += m * b.recon;
      epoch_sum.kl += m * b.kl;
      epoch_sum.corr += m * b.corr;
      epoch_sum.grad += m * b.grad;
      epoch_sum.hf += m * b.hf;
      epoch_sum.noise += m * b.noise;
      seen += stop - start;
      if (step_log.is_open())
        write_row(step_log, {static_cast<double>(step), static_cast<double>(epoch), w.beta, b.total, b.recon, b.kl,
                             b.corr, b.grad, b.hf, b.noise});
    }
    const double inv = 1.0 / static_cast<double>(seen);
    for (double* v : {&epoch_sum.total, &epoch_sum.recon, &epoch_sum.kl, &epoch_sum.corr, &epoch_sum.grad,
                      &epoch_sum.hf, &epoch_sum.noise})
      *v *= inv;

    EpochRecord rec{epoch, w.beta, adam.lr(), epoch_sum, validation_loss(model, val_set, w, config.spectral)};
    check_finite(rec.val, "in validation at epoch " + std::to_string(epoch));
    report.epochs.push_back(rec);
    if (epoch_log.is_open()) {
      epoch_log << epoch << ',' << format_double(rec.beta) << ',' << format_double(rec.lr) << ',';
      write_breakdown(epoch_log, rec.train);
      epoch_log << ',';
      write_breakdown(epoch_log, rec.val);
      epoch_log << '\n';
    }

    const double v = rec.val.total;
    const auto improves = [&](double ref) {
      return !std::isfinite(ref) || ref - v > config.improvement_tolerance * std::abs(ref);
    };
    if (improves(best)) {
      best = v;
      since_best = 0;
      report.best_epoch = epoch;
      report.best_val_total = v;
      report.best_beta = w.beta;
      best_params.assign(model.parameters().begin(), model.parameters().end());
      if (out_dir) {
        model.save(*out_dir / "best.ckpt");
        report.checkpoint = *out_dir / "best.ckpt";
      }
    } else {
      ++since_best;
    }
    if (improves(plateau_best)) {
      plateau_best = v;
      since_plateau = 0;
    } else if (++since_plateau >= config.scheduler.patience) {
      adam.set_lr(adam.lr() * config.scheduler.factor);
      since_plateau = 0;
      plateau_best = v;
    }
    if (since_best >= config.early_stop_patience) {
      report.stopped_early = epoch < config.max_epochs;
      break;
    }
  }
  model.set_parameters(best_params);
  return report;
}

TrainReport train(Vae& model, const DatasetManifest& dataset, const TrainConfig& config,
                  const BetaSchedule& schedule, const std::optional<std::filesystem::path>& out_dir) {
  const auto train_set = load_records(dataset, Split::Train);
  const auto val_set = load_records(dataset, Split::Val);
  require(!train_set.empty(), ErrorCode::EmptySplit, "manifest has no training records");
  require(!val_set.empty(), ErrorCode::EmptySplit, "manifest has no validation records");
  return train(model, train_set, val_set, config, schedule, out_dir);
}

std::string to_text(const TrainConfig& c, const BetaSchedule& s) {
  std::ostringstream os;
  os << "lr=" << format_double(c.lr) << '\n'
     << "batch_size=" << c.batch_size << '\n'
     << "max_epochs=" << c.max_epochs << '\n'
     << "early_stop_patience=" << c.early_stop_patience << '\n'
     << "scheduler_factor=" << format_double(c.scheduler.factor) << '\n'
     << "scheduler_patience=" << c.scheduler.patience << '\n'
     << "seed=" << c.seed << '\n'
     << "w_recon=" << format_double(c.weights.recon) << '\n'
     << "w_corr=" << format_double(c.weights.corr) << '\n'
     << "w_grad=" << format_double(c.weights.grad) << '\n'
     << "w_hf=" << format_double(c.weights.hf) << '\n'
     << "w_noise=" << format_double(c.weights.noise) << '\n'
     << "n_fft=" << c.spectral.n_fft << '\n'
     << "hop=" << c.spectral.hop << '\n'
     << "cutoff_normalized=" << format_double(c.spectral.cutoff_normalized) << '\n'
     << "spur_fraction=" << format_double(c.spectral.spur_fraction) << '\n'
     << "beta_max=" << format_double(s.beta_max) << '\n'
     << "warmup_epochs=" << s.warmup_epochs << '\n';
  return os.str();
}

}  // namespace egmsynth
