#include <doctest.h>

#include <algorithm>

#include "egmsynth/errors.hpp"
#include "egmsynth/trainer.hpp"
#include "oracles.hpp"
#include "tmpdir.hpp"
#include "toy_data.hpp"

using namespace egmsynth;

namespace {

TrainConfig toy_train(int epochs) {
  TrainConfig c;
  c.batch_size = 4;
  c.max_epochs = epochs;
  c.early_stop_patience = std::min(10, epochs - 1);
  c.seed = 5;
  c.spectral.n_fft = 32;
  c.spectral.hop = 8;
  return c;
}

}  // namespace

TEST_CASE("beta schedule") {
  const BetaSchedule s;
  CHECK(beta_at(s, 0) == 0.0);
  CHECK(beta_at(s, 5) == 2.0);
  CHECK(beta_at(s, 10) == 4.0);
  CHECK(beta_at(s, 25) == 4.0);
  double prev = -1.0;
  for (int e = 0; e < 30; ++e) {
    CHECK(beta_at(s, e) >= prev);
    prev = beta_at(s, e);
  }
  CHECK(beta_at(BetaSchedule{4.0, 0}, 0) == 4.0);
  CHECK_THROWS_AS(beta_at(s, -1), Error);
}

TEST_CASE("config validation") {
  auto c = toy_train(5);
  c.early_stop_patience = 5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = toy_train(5);
  c.lr = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("training with frozen parameters stops after the patience window") {
  testing::TempDir dir("frozen");
  const auto m = testing::toy_dataset(dir / "data", 12, 0, 3);
  const auto tr = load_records(m, Split::Train), va = load_records(m, Split::Val);
  Vae vae(oracle::toy_model(), 1);
  auto cfg = toy_train(40);
  cfg.freeze_parameters = true;
  BetaSchedule sched;
  sched.beta_max = 0.0;
  const auto r = train(vae, tr, va, cfg, sched);
  CHECK(r.epochs.size() == 11);
  CHECK(r.stopped_early);
  CHECK(r.best_epoch == 1);
}

TEST_CASE("training is deterministic and the best checkpoint reloads") {
  testing::TempDir dir("det");
  const auto m = testing::toy_dataset(dir / "data", 12, 0, 4);
  const auto tr = load_records(m, Split::Train), va = load_records(m, Split::Val);
  const auto cfg = toy_train(3);
  const BetaSchedule sched;

  Vae a(oracle::toy_model(), 2), b(oracle::toy_model(), 2);
  const auto ra = train(a, tr, va, cfg, sched, dir / "a");
  const auto rb = train(b, tr, va, cfg, sched, dir / "b");
  CHECK(testing::slurp(dir / "a" / "train_log.csv") == testing::slurp(dir / "b" / "train_log.csv"));
  CHECK(testing::slurp(dir / "a" / "epoch_log.csv") == testing::slurp(dir / "b" / "epoch_log.csv"));
  CHECK(ra.epochs.size() == 3);
  CHECK(testing::slurp(dir / "a" / "train_log.csv").rfind("step,epoch,beta,total,recon,kl,corr,grad,hf,noise", 0) == 0);

  for (const auto& e : ra.epochs) CHECK(e.val.total >= ra.best_val_total);
  CHECK(ra.best_beta == ra.best().beta);

  const Vae back = Vae::load(dir / "a" / "best.ckpt");
  LossWeights w = cfg.weights;
  w.beta = ra.best_beta;
  const double v = validation_loss(back, va, w, cfg.spectral).total;
  CHECK(std::abs(v - ra.best_val_total) <= 1e-6 * std::abs(ra.best_val_total));
  CHECK(validation_loss(a, va, w, cfg.spectral).total == v);
}

TEST_CASE("empty splits are rejected") {
  Vae vae(oracle::toy_model(), 1);
  const std::vector<EgmTensor> none;
  std::vector<EgmTensor> one{{Matrix::Zero(64, 32), 32.0, RhythmClass::Sinus}};
  try {
    train(vae, none, one, toy_train(2), {});
    FAIL("expected EmptySplit");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptySplit);
  }
  CHECK_THROWS_AS(train(vae, one, none, toy_train(2), {}), Error);
}
