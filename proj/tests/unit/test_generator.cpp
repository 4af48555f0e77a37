#include <doctest.h>

#include <algorithm>
#include <limits>
#include <numeric>

#include "egmsynth/errors.hpp"
#include "egmsynth/generator.hpp"
#include "oracles.hpp"
#include "tmpdir.hpp"

using namespace egmsynth;

namespace {

std::vector<EgmTensor> random_signals(int n, int T, int N, std::mt19937_64& rng, RhythmClass rc = RhythmClass::Sinus) {
  std::vector<EgmTensor> out;
  for (int i = 0; i < n; ++i) out.push_back({oracle::random_matrix(T, N, rng), 32.0, rc});
  return out;
}

std::vector<std::size_t> oracle_selection(const std::vector<EgmTensor>& cands, const std::vector<EgmTensor>& refs,
                                          std::size_t keep, std::vector<double>& scores) {
  scores.assign(cands.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < cands.size(); ++i)
    for (const auto& r : refs) scores[i] = std::min(scores[i], oracle::rmse(cands[i].values, r.values));
  std::vector<std::size_t> idx(cands.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b] || (scores[a] == scores[b] && a < b);
  });
  idx.resize(keep);
  return idx;
}

}  // namespace

TEST_CASE("aggregated posterior closed forms") {
  const std::vector<Vector> two{Vector::Zero(2), (Vector(2) << 2.0, 0.0).finished()};
  const auto p = fit_aggregated_posterior(two);
  CHECK(p.mean == (Vector(2) << 1.0, 0.0).finished());
  CHECK(p.variance == (Vector(2) << 1.0, 0.0).finished());
  CHECK(p.mode == FitMode::Diagonal);

  const std::vector<Vector> same(4, Vector::Constant(3, 0.25));
  const auto q = fit_aggregated_posterior(same, FitMode::Full);
  CHECK(q.mean == Vector::Constant(3, 0.25));
  CHECK(q.covariance.isZero());
  CHECK_THROWS_AS(fit_aggregated_posterior(std::span<const Vector>{}), Error);
}

TEST_CASE("full covariance matches direct moments") {
  std::mt19937_64 rng(1);
  std::vector<Vector> mus;
  for (int i = 0; i < 9; ++i) mus.push_back(oracle::random_matrix(3, 1, rng).col(0));
  const auto p = fit_aggregated_posterior(mus, FitMode::Full);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      double ma = 0, mb = 0, c = 0;
      for (const auto& m : mus) {
        ma += m[a];
        mb += m[b];
      }
      ma /= 9;
      mb /= 9;
      for (const auto& m : mus) c += (m[a] - ma) * (m[b] - mb);
      CHECK(std::abs(p.covariance(a, b) - c / 9) < 1e-12);
    }
  CHECK((p.covariance - p.covariance.transpose()).isZero());
  const Eigen::SelfAdjointEigenSolver<Matrix> es(p.covariance);
  CHECK(es.eigenvalues().minCoeff() >= -1e-10);
}

TEST_CASE("latent sampling") {
  AggregatedPosterior p;
  p.mean = (Vector(3) << 0.5, -1.0, 2.0).finished();
  p.variance = (Vector(3) << 0.04, 1.0, 0.0).finished();
  const int n = 10000;
  const auto z = sample_latents(p, n, 7);
  REQUIRE(z.size() == static_cast<std::size_t>(n));
  for (int d = 0; d < 3; ++d) {
    double m = 0.0;
    for (const auto& v : z) m += v[d];
    m /= n;
    CHECK(std::abs(m - p.mean[d]) <= 3.0 * std::sqrt(p.variance[d] / n) + 1e-15);
  }
  CHECK(sample_latents(p, 5, 7).front() == z.front());
  CHECK(sample_latents(p, 5, 8).front() != z.front());
}

TEST_CASE("decoding from a degenerate posterior") {
  const Vae vae(oracle::toy_model(), 3);
  AggregatedPosterior p;
  p.mean = Vector::LinSpaced(8, -0.4, 0.4);
  p.variance = Vector::Zero(8);
  const auto out = sample_and_decode(vae, p, 4, std::nullopt, 1);
  REQUIRE(out.size() == 4);
  const auto ref = vae.decode(p.mean);
  for (const auto& s : out) CHECK(s.values == ref.values);
  CHECK(sample_and_decode(vae, p, 200, std::nullopt, 2).size() == 200);

  const Vae cvae(oracle::toy_model(true), 3);
  try {
    sample_and_decode(cvae, p, 2, std::nullopt, 1);
    FAIL("expected MissingClass");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingClass);
  }
  CHECK_THROWS_AS(sample_and_decode(vae, p, 2, RhythmClass::AF, 1), Error);
}

TEST_CASE("curation selects the minimum-RMSE candidates") {
  std::mt19937_64 rng(4);
  const auto cands = random_signals(10, 6, 3, rng), refs = random_signals(3, 6, 3, rng);
  std::vector<double> scores;
  const auto expect = oracle_selection(cands, refs, 4, scores);
  const auto r = curate(cands, refs, 4);
  CHECK(r.selected == expect);
  CHECK(r.n_generated == 10);
  CHECK(r.n_selected == 4);
  for (std::size_t i = 0; i < 10; ++i) CHECK(std::abs(r.scores[i] - scores[i]) < 1e-12);
  for (std::size_t s : r.selected)
    for (std::size_t i = 0; i < 10; ++i)
      if (std::find(r.selected.begin(), r.selected.end(), i) == r.selected.end()) CHECK(r.scores[s] <= r.scores[i]);

  auto with_copy = cands;
  with_copy[7] = refs[1];
  const auto c = curate(with_copy, refs, 1);
  CHECK(c.scores[7] == 0.0);
  CHECK(c.selected == std::vector<std::size_t>{7});
  CHECK(c.best_reference[7] == 1);

  CHECK(curate(cands, refs, 10).n_selected == 10);
  CHECK_THROWS_AS(curate(cands, refs, 11), Error);
  CHECK_THROWS_AS(curate(cands, random_signals(2, 5, 3, rng), 2), Error);
}

TEST_CASE("synthetic datasets") {
  testing::TempDir dir("gen");
  std::mt19937_64 rng(5);
  const Vae vae(oracle::toy_model(), 6);
  const auto refs = random_signals(4, 64, 32, rng);
  AggregatedPosterior p;
  p.mean = Vector::Zero(8);
  p.variance = Vector::Ones(8);

  const auto s = build_synthetic_dataset(vae, p, {SynthMode::S, 12, 5}, refs, 9, dir / "s");
  CHECK(s.manifest.records.size() == 5);
  CHECK(s.manifest.count(RhythmClass::Sinus) == 5);
  for (const auto& r : s.manifest.records) CHECK(r.split == Split::Train);
  CHECK(std::filesystem::exists(dir / "s" / "manifest.tsv"));
  CHECK(std::filesystem::exists(dir / "s" / "curation_report.csv"));
  const auto again = build_synthetic_dataset(vae, p, {SynthMode::S, 12, 5}, refs, 9, dir / "s2");
  CHECK(testing::slurp(dir / "s" / "manifest.tsv") == testing::slurp(dir / "s2" / "manifest.tsv"));
  CHECK(testing::slurp(dir / "s" / "curation_report.csv") == testing::slurp(dir / "s2" / "curation_report.csv"));
  for (const auto& r : s.manifest.records)
    CHECK(testing::slurp(s.manifest.resolve(r)) == testing::slurp(again.manifest.resolve(*again.manifest.find(r.record_id))));

  const auto pass = build_synthetic_dataset(vae, p, {SynthMode::S, 5, 5}, refs, 9, dir / "p");
  CHECK(pass.curations.front().second.n_selected == 5);

  const Vae cvae(oracle::toy_model(true), 6);
  auto crefs = random_signals(3, 64, 32, rng);
  for (auto& r : random_signals(3, 64, 32, rng, RhythmClass::AF)) crefs.push_back(r);
  const std::vector<AggregatedPosterior> per_class{p, p};
  const auto c = build_synthetic_dataset(cvae, per_class, {SynthMode::C, 8, 4}, crefs, 9, dir / "c");
  CHECK(c.manifest.records.size() == 8);
  CHECK(c.manifest.count(RhythmClass::AF) == 4);
  CHECK(c.curations.size() == 2);
  for (const auto& [cls, cur] : c.curations)
    for (std::size_t b : cur.best_reference) CHECK(crefs[b].rhythm == cls);

  CHECK_THROWS_AS(build_synthetic_dataset(vae, p, {SynthMode::C, 8, 4}, crefs, 9, dir / "x"), Error);
  CHECK_THROWS_AS(build_synthetic_dataset(cvae, p, {SynthMode::S, 8, 4}, crefs, 9, dir / "y"), Error);
}
