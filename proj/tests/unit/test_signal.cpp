#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "egmsynth/errors.hpp"
#include "egmsynth/signal.hpp"
#include "oracles.hpp"
#include "tmpdir.hpp"

using namespace egmsynth;

namespace {

EgmTensor tensor(Matrix v, double rate = 500.0) { return {std::move(v), rate, RhythmClass::Sinus}; }

DatasetManifest fake_manifest(int n_sinus, int n_af) {
  DatasetManifest m;
  for (int i = 0; i < n_sinus + n_af; ++i) {
    RecordEntry e;
    e.record_id = "r" + std::to_string(i);
    e.rhythm = i < n_sinus ? RhythmClass::Sinus : RhythmClass::AF;
    e.file_path = e.record_id + ".egm";
    e.samples = 4;
    e.channels = 2;
    e.sample_rate_hz = 200.0;
    m.records.push_back(e);
  }
  return m;
}

std::map<Split, int> sizes(const DatasetManifest& m) {
  std::map<Split, int> s;
  for (const auto& r : m.records) ++s[r.split];
  return s;
}

}  // namespace

TEST_SUITE("normalize") {
  TEST_CASE("three-point linear map") {
    Matrix v(3, 1);
    v << -3, 0, 3;
    const auto out = normalize(tensor(v));
    CHECK(out.values(0, 0) == -1.0);
    CHECK(out.values(1, 0) == 0.0);
    CHECK(out.values(2, 0) == 1.0);
  }

  TEST_CASE("already spanning [-1, 1] is unchanged") {
    Matrix v(2, 2);
    v << -1, 0.25, 1, -0.3;
    CHECK(normalize(tensor(v)).values == v);
  }

  TEST_CASE("random 4x4 against elementwise recomputation") {
    std::mt19937_64 rng(3);
    const Matrix v = oracle::random_matrix(4, 4, rng, -7.0, 5.0);
    const auto out = normalize(tensor(v));
    const double lo = v.minCoeff(), hi = v.maxCoeff();
    CHECK(out.values.minCoeff() == -1.0);
    CHECK(out.values.maxCoeff() == 1.0);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) CHECK(out.values(i, j) == doctest::Approx(2.0 * (v(i, j) - lo) / (hi - lo) - 1.0).epsilon(1e-14));
  }

  TEST_CASE("idempotent") {
    std::mt19937_64 rng(5);
    const auto once = normalize(tensor(oracle::random_matrix(16, 3, rng, 0.0, 9.0)));
    CHECK(normalize(once).values == once.values);
  }

  TEST_CASE("constant signal is rejected") {
    try {
      normalize(tensor(Matrix::Constant(3, 3, 0.5)));
      FAIL("expected ConstantSignal");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConstantSignal);
    }
  }
}

TEST_SUITE("resample") {
  TEST_CASE("1000 samples at 500 Hz become 400 at 200 Hz") {
    std::mt19937_64 rng(1);
    const auto out = resample(tensor(oracle::random_matrix(1000, 5, rng)), 200.0);
    CHECK(out.samples() == 400);
    CHECK(out.channels() == 5);
    CHECK(out.sample_rate_hz == 200.0);
  }

  TEST_CASE("same rate is the identity") {
    std::mt19937_64 rng(2);
    const auto in = tensor(oracle::random_matrix(50, 3, rng));
    CHECK(resample(in, 500.0).values == in.values);
  }

  TEST_CASE("10 Hz tone keeps its DFT peak") {
    Matrix v(1000, 1);
    for (int t = 0; t < 1000; ++t) v(t, 0) = std::sin(2.0 * std::numbers::pi * 10.0 * t / 500.0);
    const auto out = resample(tensor(v), 200.0);
    std::vector<double> col(out.values.data(), out.values.data() + out.samples());
    // 400 samples over 2 s: bin k is k / 2 Hz
    CHECK(oracle::dominant_bin(col) == 20);
  }

  TEST_CASE("upsampling is unsupported") {
    try {
      resample(tensor(Matrix::Zero(10, 1)), 1000.0);
      FAIL("expected UpsampleUnsupported");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::UpsampleUnsupported);
    }
  }
}

TEST_SUITE("split") {
  TEST_CASE("52 records stratified give 39/8/5 with class shares within one record") {
    const auto m = split(fake_manifest(19, 33), 7, true);
    auto s = sizes(m);
    CHECK(s[Split::Train] == 39);
    CHECK(s[Split::Val] == 8);
    CHECK(s[Split::Test] == 5);
    for (Split sp : {Split::Train, Split::Val, Split::Test}) {
      int sinus = 0;
      for (const auto* r : m.in_split(sp)) sinus += r->rhythm == RhythmClass::Sinus;
      const double expected = 19.0 / 52.0 * s[sp];
      CHECK(std::abs(sinus - expected) <= 1.0);
    }
  }

  TEST_CASE("20 single-class records give 15/3/2") {
    auto s = sizes(split(fake_manifest(20, 0), 1, false));
    CHECK(s[Split::Train] == 15);
    CHECK(s[Split::Val] == 3);
    CHECK(s[Split::Test] == 2);
  }

  TEST_CASE("rounding rule by enumeration") {
    for (int n = 10; n <= 80; ++n) {
      auto s = sizes(split(fake_manifest(n, 0), 3, false));
      CHECK(s[Split::Val] == static_cast<int>(std::lround(0.15 * n)));
      CHECK(s[Split::Test] == static_cast<int>(std::lround(0.10 * n)));
      CHECK(s[Split::Train] == n - s[Split::Val] - s[Split::Test]);
    }
  }

  TEST_CASE("same seed gives the same assignment, every record exactly once") {
    const auto a = split(fake_manifest(19, 33), 11, true);
    const auto b = split(fake_manifest(19, 33), 11, true);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < a.records.size(); ++i) {
      CHECK(a.records[i].split == b.records[i].split);
      CHECK(a.records[i].split != Split::Unassigned);
      ids.insert(a.records[i].record_id);
    }
    CHECK(ids.size() == 52);
  }

  TEST_CASE("too few records") {
    CHECK_THROWS_AS(split(fake_manifest(9, 0), 0, false), Error);
    CHECK_THROWS_AS(split(fake_manifest(2, 20), 0, true), Error);
  }
}

TEST_SUITE("persistence") {
  TEST_CASE("record round-trip is bit-exact") {
    testing::TempDir dir("rec");
    std::mt19937_64 rng(9);
    Matrix v = oracle::random_matrix(12, 7, rng);
    v = v.unaryExpr([](double x) { return static_cast<double>(static_cast<float>(x)); });
    EgmTensor x{v, 200.0, RhythmClass::AF};
    save_record(x, dir / "a.egm");
    const auto y = load_record(dir / "a.egm");
    CHECK(y.values == x.values);
    CHECK(y.rhythm == RhythmClass::AF);
    CHECK(y.sample_rate_hz == 200.0);
    save_record(y, dir / "b.egm");
    CHECK(testing::slurp(dir / "a.egm") == testing::slurp(dir / "b.egm"));
  }

  TEST_CASE("manifest round-trip") {
    testing::TempDir dir("man");
    const auto m = split(fake_manifest(5, 7), 2, true);
    save_manifest(m, dir / "manifest.tsv");
    const auto back = load_manifest(dir / "manifest.tsv");
    REQUIRE(back.records.size() == m.records.size());
    for (std::size_t i = 0; i < m.records.size(); ++i) {
      CHECK(back.records[i].record_id == m.records[i].record_id);
      CHECK(back.records[i].split == m.records[i].split);
      CHECK(back.records[i].rhythm == m.records[i].rhythm);
    }
    save_manifest(back, dir / "again.tsv");
    CHECK(testing::slurp(dir / "manifest.tsv") == testing::slurp(dir / "again.tsv"));
  }

  TEST_CASE("header line format") {
    testing::TempDir dir("hdr");
    save_record({Matrix::Zero(3, 2), 500.0, RhythmClass::Sinus}, dir / "z.egm");
    const std::string bytes = testing::slurp(dir / "z.egm");
    CHECK(bytes.substr(0, bytes.find('\n')) == "EGM1 3 2 500 Sinus");
    CHECK(bytes.size() == bytes.find('\n') + 1 + 3 * 2 * 4);
  }

  TEST_CASE("truncated payload is rejected") {
    testing::TempDir dir("trunc");
    save_record({Matrix::Ones(3, 2), 500.0, RhythmClass::Sinus}, dir / "t.egm");
    std::string bytes = testing::slurp(dir / "t.egm");
    bytes.pop_back();
    std::ofstream(dir / "t.egm", std::ios::binary | std::ios::trunc) << bytes;
    CHECK_THROWS_AS(load_record(dir / "t.egm"), Error);
  }
}
