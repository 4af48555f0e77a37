#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "egmsynth/errors.hpp"
#include "egmsynth/signal.hpp"
#include "run_config.hpp"
#include "tmpdir.hpp"

using namespace egmsynth;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

const char* kToyConfig = R"({
  "sim": {"n_channels": 32, "duration_s": 2.0, "target_rate_hz": 32.0},
  "model": {"latent_dim": 8, "encoder_widths": [8, 16, 32, 64], "decoder_widths": [64, 32, 16, 8]},
  "train": {"batch_size": 4, "max_epochs": 2, "early_stop_patience": 1, "n_fft": 32, "hop": 8},
  "metrics": {"n_fft": 32, "hop": 8},
  "downstream": {"leads": 8, "hidden": 4, "epochs": 1, "batch_size": 4, "k_grid": [0, 2]}
})";

}  // namespace

TEST_CASE("usage errors exit with 2") {
  auto r = invoke({"frobnicate"});
  CHECK(r.code == 2);
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"train"}).code == 2);
  CHECK(invoke({"simulate", "--sinus", "many", "--out", "x"}).code == 2);
  CHECK(invoke({"--help"}).code == 0);
  const auto h = invoke({"train", "--help"});
  CHECK(h.code == 0);
  CHECK(h.out.find("--epochs") != std::string::npos);
  CHECK(h.out.find("--seed") != std::string::npos);
}

TEST_CASE("config documents") {
  const auto d = cli::to_json(cli::RunConfig{});
  CHECK(cli::to_json(cli::from_json(d)) == d);
  CHECK(d["train"]["beta_max"] == 4.0);
  CHECK(d["model"]["latent_dim"] == 50);
  nlohmann::json bad = {{"train", {{"learning_rate", 0.1}}}};
  try {
    cli::from_json(bad);
    FAIL("expected InvalidConfig");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidConfig);
    CHECK(std::string(e.what()).find("learning_rate") != std::string::npos);
  }
  CHECK_THROWS_AS(cli::from_json(nlohmann::json{{"extra", 1}}), Error);
  CHECK_THROWS_AS(cli::from_json(nlohmann::json{{"train", {{"lr", "fast"}}}}), Error);
}

TEST_CASE("unknown config key is a one-line runtime error") {
  testing::TempDir dir("badcfg");
  std::ofstream(dir / "bad.json") << R"({"sim": {"n_sinuses": 3}})";
  const auto r = invoke({"simulate", "--config", (dir / "bad.json").string(), "--out", (dir / "o").string()});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("egmsynth: error:", 0) == 0);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
}

TEST_CASE("seed precedence") {
  testing::TempDir dir("seed");
  std::ofstream(dir / "s.json") << R"({"train": {"seed": 3}})";
  CHECK(cli::resolve_config(dir / "s.json").train.seed == 3);
  ::setenv("EGMSYNTH_SEED", "17", 1);
  const auto c = cli::resolve_config(dir / "s.json");
  ::unsetenv("EGMSYNTH_SEED");
  CHECK(c.train.seed == 17);
  CHECK(c.sim.seed == 17);
}

TEST_CASE("pipeline at toy scale") {
  testing::TempDir dir("pipe");
  const auto cfg = (dir / "toy.json").string();
  std::ofstream(cfg) << kToyConfig;
  auto p = [&](const char* leaf) { return (dir / leaf).string(); };

  auto r = invoke({"simulate", "--config", cfg, "--sinus", "10", "--af", "10", "--seed", "7", "--out", p("data")});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto m = load_manifest(dir / "data" / "manifest.tsv");
  CHECK(m.records.size() == 20);
  CHECK(m.count(RhythmClass::AF) == 10);
  CHECK(m.records[0].samples == 64);
  CHECK(std::filesystem::exists(dir / "data" / "config.used"));

  std::ofstream(dir / "data" / ".egmsynth.lock") << "held";
  r = invoke({"simulate", "--config", cfg, "--sinus", "10", "--af", "10", "--seed", "7", "--out", p("data")});
  CHECK(r.code == 1);
  CHECK(r.err.find("lock") != std::string::npos);
  std::filesystem::remove(dir / "data" / ".egmsynth.lock");

  for (const char* out : {"train_a", "train_b"}) {
    r = invoke({"train", "--config", cfg, "--data", p("data"), "--seed", "1", "--out", p(out)});
    REQUIRE_MESSAGE(r.code == 0, r.err);
  }
  CHECK(testing::slurp(dir / "train_a" / "train_log.csv") == testing::slurp(dir / "train_b" / "train_log.csv"));
  CHECK(std::filesystem::exists(dir / "train_a" / "model.ckpt"));
  const auto used = nlohmann::json::parse(testing::slurp(dir / "train_a" / "config.used"));
  CHECK(used["train"]["seed"] == 1);
  CHECK(used["model"]["input_channels"] == 32);

  r = invoke({"train", "--config", cfg, "--data", p("data"), "--conditional", "--out", p("train_c")});
  REQUIRE_MESSAGE(r.code == 0, r.err);

  r = invoke({"generate", "--config", cfg, "--model", p("train_a/model.ckpt"), "--data", p("data"), "--mode", "S",
           "--n", "6", "--keep", "3", "--out", p("synt_s")});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(load_manifest(dir / "synt_s" / "manifest.tsv").records.size() == 3);

  r = invoke({"generate", "--config", cfg, "--model", p("train_c/model.ckpt"), "--data", p("data"), "--mode", "C",
           "--n", "6", "--keep", "3", "--out", p("synt_c")});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto sc = load_manifest(dir / "synt_c" / "manifest.tsv");
  CHECK(sc.records.size() == 6);
  CHECK(sc.count(RhythmClass::AF) == 3);

  r = invoke({"generate", "--config", cfg, "--model", p("train_a/model.ckpt"), "--data", p("data"), "--mode", "C",
           "--out", p("synt_bad")});
  CHECK(r.code == 1);

  r = invoke({"evaluate", "--config", cfg, "--data", p("data"), "--model", p("train_a/model.ckpt"), "--synthetic",
           p("synt_s"), "--name", "VAE-S", "--model", p("train_c/model.ckpt"), "--synthetic", p("synt_c"), "--name",
           "VAE-C", "--out", p("eval")});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(std::filesystem::exists(dir / "eval" / "fidelity_report.csv"));
  CHECK(std::filesystem::exists(dir / "eval" / "embedding_VAE-C.csv"));

  r = invoke({"downstream", "--config", cfg, "--data", p("data"), "--synt-s", p("synt_s"), "--synt-c", p("synt_c"),
           "--out", p("down")});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto table = testing::slurp(dir / "down" / "downstream_report.csv");
  CHECK(std::count(table.begin(), table.end(), '\n') == 7);
  CHECK(std::filesystem::exists(dir / "down" / "per_class_report.csv"));

  r = invoke({"report", "--inputs", p("eval"), p("down"), "--out", p("report")});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto md = testing::slurp(dir / "report" / "summary.md");
  CHECK(md.find("VAE-C@kS+kAF") != std::string::npos);
  CHECK(md.find("LSD") != std::string::npos);
}
