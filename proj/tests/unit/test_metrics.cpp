#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "egmsynth/errors.hpp"
#include "egmsynth/metrics.hpp"
#include "oracles.hpp"
#include "tmpdir.hpp"

using namespace egmsynth;

namespace {

SpectralConfig toy_spectral() {
  SpectralConfig c;
  c.n_fft = 32;
  c.hop = 8;
  return c;
}

std::vector<EgmTensor> random_set(int n, std::mt19937_64& rng, int T = 64, int N = 32) {
  std::vector<EgmTensor> out;
  for (int i = 0; i < n; ++i)
    out.push_back({oracle::random_matrix(T, N, rng), 32.0, i % 2 ? RhythmClass::AF : RhythmClass::Sinus});
  return out;
}

}  // namespace

TEST_CASE("log-spectral distance") {
  const auto cfg = toy_spectral();
  std::mt19937_64 rng(1);
  const Matrix x = oracle::random_matrix(64, 4, rng), y = oracle::random_matrix(64, 4, rng);
  CHECK(lsd(x, x, cfg) == 0.0);
  CHECK(std::abs(lsd(x, 2.0 * x, cfg) - 20.0 * std::log10(2.0)) < 1e-9);
  CHECK(oracle::rel_err(lsd(x, y, cfg), oracle::lsd(x, y, 32, 8)) < 1e-5);
  for (int i = 0; i < 10; ++i) {
    const Matrix a = oracle::random_matrix(64, 2, rng), b = oracle::random_matrix(64, 2, rng),
                 c = oracle::random_matrix(64, 2, rng);
    CHECK(lsd(a, b, cfg) <= lsd(a, c, cfg) + lsd(c, b, cfg) + 1e-9);
  }
  CHECK_THROWS_AS(lsd(x, Matrix::Zero(64, 3), cfg), Error);
  CHECK_THROWS_AS(lsd(Matrix::Ones(16, 2), Matrix::Ones(16, 2), cfg), Error);
}

TEST_CASE("pearson") {
  std::mt19937_64 rng(2);
  const Matrix x = oracle::random_matrix(20, 5, rng), y = oracle::random_matrix(20, 5, rng);
  CHECK(std::abs(pearson(x, x) - 1.0) < 1e-12);
  CHECK(std::abs(pearson(x, -x) + 1.0) < 1e-12);
  double acc = 0.0;
  for (int n = 0; n < 5; ++n) acc += oracle::pearson_column(x, y, n, 0.0);
  CHECK(std::abs(pearson(x, y) - acc / 5) < 1e-12);
}

TEST_CASE("maximum mean discrepancy") {
  std::mt19937_64 rng(3);
  const Matrix a = oracle::random_matrix(5, 3, rng), b = oracle::random_matrix(5, 3, rng, -0.5, 1.5);
  CHECK(std::abs(mmd_features(a, b, 0.7) - oracle::mmd(a, b, 0.7)) < 1e-9);
  CHECK(std::abs(mmd_features(a, a, 0.7)) < 1e-12);
  CHECK(mmd_features(a, b, 0.7) >= 0.0);

  const auto set_a = random_set(6, rng), set_b = random_set(5, rng);
  CHECK(std::abs(mmd(set_a, set_a)) < 1e-12);
  CHECK(std::abs(mmd(std::span(set_a).first(1), std::span(set_a).first(1))) < 1e-12);
  CHECK(std::abs(mmd(set_a, set_b) - mmd(set_b, set_a)) < 1e-12);
  CHECK(mmd(set_a, set_b) > 0.0);

  const Matrix fa = feature_matrix(set_a), fb = feature_matrix(set_b);
  CHECK(fa.cols() == 4 * 32);
  CHECK(std::abs(mmd(set_a, set_b) - oracle::mmd(fa, fb, median_bandwidth(fa, fb))) < 1e-9);
  CHECK_THROWS_AS(mmd(set_a, std::span<const EgmTensor>{}), Error);
}

TEST_CASE("signal features") {
  Matrix x(64, 2);
  for (int t = 0; t < 64; ++t) {
    x(t, 0) = std::sin(2.0 * std::numbers::pi * 8.0 * t / 64.0);
    x(t, 1) = 0.5;
  }
  const Vector f = signal_features(x);
  REQUIRE(f.size() == 8);
  CHECK(std::abs(f[0]) < 1e-12);
  CHECK(std::abs(f[1] - std::sqrt(0.5)) < 1e-12);
  CHECK(std::abs(f[2] - 8.0 / 32.0) < 1e-12);
  CHECK(f[4] == doctest::Approx(0.5));
  CHECK(f[5] == 0.0);
}

TEST_CASE("active units") {
  const std::vector<LatentStats> same(4, LatentStats{Vector::Constant(3, 0.2), Vector::Zero(3)});
  CHECK(active_units(same) == 0);
  std::vector<LatentStats> one = same;
  for (int i = 0; i < 4; ++i) one[i].mean[1] = static_cast<double>(i);
  CHECK(active_units(one) == 1);
  CHECK(active_units(one, 10.0) == 0);
}

TEST_CASE("self-comparison through evaluate") {
  std::mt19937_64 rng(4);
  const Vae vae(oracle::toy_model(), 5);
  const auto test = random_set(4, rng);
  MetricsConfig cfg;
  cfg.spectral = toy_spectral();
  const auto r = evaluate(vae, test, test, cfg);
  CHECK(std::abs(r.corr_mean - 1.0) < 1e-12);
  CHECK(r.lsd_mean == 0.0);
  CHECK(std::abs(r.mmd) < 1e-12);
  CHECK(r.latent_dim == 8);
  CHECK(r.active_units >= 0);
  CHECK(r.active_units <= 8);
  CHECK(std::isfinite(r.mse));
  CHECK(!r.mmd_sinus.has_value());

  const Vae cvae(oracle::toy_model(true), 5);
  const auto rc = evaluate(cvae, test, test, cfg);
  REQUIRE(rc.mmd_sinus.has_value());
  CHECK(std::abs(*rc.mmd_af) < 1e-12);
}

TEST_CASE("fidelity report round-trips through CSV") {
  testing::TempDir dir("report");
  FidelityReport a;
  a.mse = 0.1 / 3.0;
  a.lsd_mean = 12.345678901234567;
  a.lsd_std = 1e-17;
  a.corr_mean = -0.25;
  a.corr_std = 0.3;
  a.mmd = 2.0 / 7.0;
  a.kl_mean = 3.5;
  a.kl_std = 0.125;
  a.active_units = 6;
  a.latent_dim = 8;
  FidelityReport b = a;
  b.mmd_sinus = 0.01;
  b.mmd_af = 1.0 / 9.0;
  const std::vector<std::pair<std::string, FidelityReport>> cols{{"VAE-S", a}, {"VAE-C", b}};
  write_fidelity_report(dir / "f.csv", cols);
  CHECK(read_fidelity_report(dir / "f.csv") == cols);
}

TEST_CASE("embedding export") {
  std::vector<LatentStats> z;
  for (int i = 0; i < 3; ++i) z.push_back({Vector::Constant(4, 0.5 * i), Vector::Zero(4)});
  const std::vector<RhythmClass> labels{RhythmClass::Sinus, RhythmClass::AF, RhythmClass::AF};
  std::istringstream is(embedding_csv(z, labels));
  std::string line;
  std::getline(is, line);
  CHECK(line == "mu_0,mu_1,mu_2,mu_3,label");
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 4);
    const auto label = line.substr(line.rfind(',') + 1);
    CHECK((label == "Sinus" || label == "AF"));
  }
  CHECK(rows == 3);
  try {
    embedding_csv({}, {});
    FAIL("expected EmptySet");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptySet);
  }
  try {
    embedding_csv(z, std::span(labels).first(2));
    FAIL("expected LengthMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LengthMismatch);
  }
}
