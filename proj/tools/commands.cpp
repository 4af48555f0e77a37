#include "commands.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "egmsynth/csv.hpp"
#include "egmsynth/errors.hpp"
#include "run_config.hpp"

namespace egmsynth::cli {

namespace fs = std::filesystem;

namespace {

/// Exclusive claim on an output directory for the lifetime of a command.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".egmsynth.lock") {
    fs::create_directories(dir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      if (errno == EEXIST)
        fail(ErrorCode::IoFailure, "output directory " + dir.string() + " is locked by another run (" +
                                       path_.string() + ")");
      fail(ErrorCode::IoFailure, "cannot create " + path_.string() + ": " + std::strerror(errno));
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] const auto n = ::write(fd_, pid.data(), pid.size());
  }
  ~DirLock() {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

DatasetManifest open_dataset(const fs::path& p) {
  return load_manifest(fs::is_directory(p) ? p / "manifest.tsv" : p);
}

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;

  RunConfig resolve() const {
    RunConfig c = resolve_config(config.empty() ? std::nullopt : std::optional<fs::path>(config));
    if (seed) c.set_seed(*seed);
    return c;
  }
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
  cmd->add_option("--config", c.config, "JSON run configuration (sections sim, model, train, generate, metrics, downstream)")
      ->check(CLI::ExistingFile);
  auto* o = cmd->add_option("--out", c.out, "Output directory");
  if (out_required) o->required();
  cmd->add_option("--seed", c.seed, "Seed for every random stream (overrides EGMSYNTH_SEED and the config file)");
}

/// Model input geometry follows the dataset it is trained on.
void fit_model_to(ModelConfig& m, const DatasetManifest& data) {
  require(!data.records.empty(), ErrorCode::EmptySplit, "dataset is empty");
  const auto& r = data.records.front();
  m.input_samples = r.samples;
  m.input_channels = r.channels;
  m.working_rate_hz = r.sample_rate_hz;
  m.validate();
}

int cmd_simulate(const Common& common, std::optional<int> n_sinus, std::optional<int> n_af,
                 std::optional<int> channels, std::optional<double> duration, std::optional<double> target,
                 bool no_stratify, std::ostream& out) {
  RunConfig c = common.resolve();
  if (n_sinus) c.sim.n_sinus = *n_sinus;
  if (n_af) c.sim.n_af = *n_af;
  if (channels) c.sim.base.n_channels = *channels;
  if (duration) c.sim.base.duration_s = *duration;
  if (target) c.sim.target_rate_hz = *target;
  if (no_stratify) c.sim.stratify = false;
  const fs::path dir(common.out);
  DirLock lock(dir);
  DatasetOptions opt{dir, c.sim.target_rate_hz, c.sim.normalize};
  DatasetManifest m = build_dataset(c.sim.n_sinus, c.sim.n_af, c.sim.base, c.sim.seed, opt);
  const bool mixed = c.sim.n_sinus > 0 && c.sim.n_af > 0;
  if (m.records.size() >= 10) m = split(m, c.sim.seed, c.sim.stratify && mixed);
  save_manifest(m, dir / "manifest.tsv");
  write_used_config(c, dir);
  out << "wrote " << m.records.size() << " records (" << m.count(RhythmClass::Sinus) << " sinus, "
      << m.count(RhythmClass::AF) << " AF) to " << (dir / "manifest.tsv").string() << '\n';
  return 0;
}

int cmd_train(const Common& common, const std::string& data, std::optional<int> epochs, bool conditional,
              std::ostream& out) {
  RunConfig c = common.resolve();
  if (epochs) c.train.max_epochs = *epochs;
  if (conditional) c.model.conditional = true;
  const DatasetManifest ds = open_dataset(data);
  fit_model_to(c.model, ds);
  const fs::path dir(common.out);
  DirLock lock(dir);
  Vae model(c.model, c.init_seed);
  const TrainReport rep = train(model, ds, c.train, c.beta, dir);
  model.save(dir / "model.ckpt");
  write_used_config(c, dir);
  out << "epochs " << rep.epochs.size() << ", best epoch " << rep.best_epoch << " (val total "
      << format_double(rep.best_val_total) << ")" << (rep.stopped_early ? ", stopped early" : "") << '\n';
  return 0;
}

int cmd_generate(const Common& common, const std::string& model_path, const std::string& data,
                 std::optional<std::string> mode, std::optional<int> n, std::optional<int> keep,
                 std::optional<std::string> fit, std::ostream& out) {
  RunConfig c = common.resolve();
  if (mode) {
    if (*mode != "S" && *mode != "C") fail(ErrorCode::InvalidConfig, "--mode must be S or C");
    c.generate.spec.mode = *mode == "C" ? SynthMode::C : SynthMode::S;
  }
  if (n) c.generate.spec.n_generate = *n;
  if (keep) c.generate.spec.n_keep = *keep;
  if (fit) c.generate.fit_mode = parse_fit_mode(*fit);
  const Vae model = Vae::load(model_path);
  c.model = model.config();
  const auto refs = load_records(open_dataset(data), Split::Train);
  require(!refs.empty(), ErrorCode::EmptyTrainSet, "dataset has no training records");
  const fs::path dir(common.out);
  DirLock lock(dir);
  SyntheticDataset syn;
  if (c.generate.spec.mode == SynthMode::C) {
    const auto post = fit_class_posteriors(model, refs, c.generate.fit_mode);
    syn = build_synthetic_dataset(model, std::span<const AggregatedPosterior>(post), c.generate.spec, refs,
                                  c.generate.seed, dir);
  } else {
    const auto post = fit_aggregated_posterior(model, refs, c.generate.fit_mode);
    syn = build_synthetic_dataset(model, post, c.generate.spec, refs, c.generate.seed, dir);
  }
  write_used_config(c, dir);
  out << "kept " << syn.manifest.records.size() << " synthetic records in " << (dir / "manifest.tsv").string()
      << '\n';
  return 0;
}

std::vector<LatentStats> encode_all(const Vae& model, const std::vector<EgmTensor>& set) {
  std::vector<LatentStats> out;
  for (const auto& x : set)
    out.push_back(model.encode(x, model.config().conditional ? std::optional(x.rhythm) : std::nullopt));
  return out;
}

std::vector<RhythmClass> labels_of(const std::vector<EgmTensor>& set) {
  std::vector<RhythmClass> out;
  for (const auto& x : set) out.push_back(x.rhythm);
  return out;
}

int cmd_evaluate(const Common& common, const std::vector<std::string>& models,
                 const std::vector<std::string>& synthetic, std::vector<std::string> names, const std::string& data,
                 std::ostream& out) {
  if (models.size() != synthetic.size()) fail(ErrorCode::InvalidConfig, "give one --synthetic per --model");
  if (names.empty())
    for (std::size_t i = 0; i < models.size(); ++i) names.push_back(fs::path(models[i]).stem().string());
  if (names.size() != models.size()) fail(ErrorCode::InvalidConfig, "give one --name per --model");
  const RunConfig c = common.resolve();
  const DatasetManifest real = open_dataset(data);
  const auto test = load_records(real, Split::Test);
  require(!test.empty(), ErrorCode::EmptySplit, "dataset has no test records");
  const fs::path dir(common.out);
  DirLock lock(dir);
  std::vector<std::pair<std::string, FidelityReport>> cols;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const Vae model = Vae::load(models[i]);
    const auto gen = load_records(open_dataset(synthetic[i]), Split::Train);
    std::vector<EgmTensor> test_used;
    for (const auto& x : test)
      if (model.config().conditional || x.rhythm == RhythmClass::Sinus) test_used.push_back(x);
    require(!test_used.empty(), ErrorCode::EmptySplit, "no usable test records for " + names[i]);
    cols.emplace_back(names[i], evaluate(model, test_used, gen, c.metrics));
    export_embedding(encode_all(model, test_used), labels_of(test_used), dir / ("embedding_" + names[i] + ".csv"));
    export_embedding(encode_all(model, gen), labels_of(gen), dir / ("embedding_" + names[i] + "_generated.csv"));
  }
  write_fidelity_report(dir / "fidelity_report.csv", cols);
  write_used_config(c, dir);
  out << "wrote " << (dir / "fidelity_report.csv").string() << '\n';
  return 0;
}

int cmd_downstream(const Common& common, const std::string& data, const std::string& synt_s,
                   const std::string& synt_c, const std::vector<int>& k_grid, std::ostream& out) {
  RunConfig c = common.resolve();
  if (!k_grid.empty()) c.downstream.k_grid = k_grid;
  if (synt_s.empty() && synt_c.empty()) fail(ErrorCode::InvalidConfig, "give --synt-s and/or --synt-c");
  const DatasetManifest real = open_dataset(data);
  require(!real.records.empty(), ErrorCode::EmptySplit, "dataset is empty");
  const std::optional<DatasetManifest> s = synt_s.empty() ? std::nullopt : std::optional(open_dataset(synt_s));
  const std::optional<DatasetManifest> cc = synt_c.empty() ? std::nullopt : std::optional(open_dataset(synt_c));
  const auto& d = c.downstream;
  const ForwardModel fm = ForwardModel::smoothed_random(real.records.front().channels, d.leads, d.forward_seed,
                                                        d.noise_level, d.smoothing_width);
  const fs::path dir(common.out);
  DirLock lock(dir);
  const DownstreamReport rep = run_scenarios(real, s, cc, fm, d.recon, d.k_grid);
  write_downstream_report(rep, dir / "downstream_report.csv");
  write_per_class_report(rep, dir / "per_class_report.csv");
  write_used_config(c, dir);
  out << "wrote " << rep.rows.size() << " scenario rows to " << (dir / "downstream_report.csv").string() << '\n';
  return 0;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream is(p);
  if (!is) fail(ErrorCode::IoFailure, "cannot read " + p.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) rows.push_back(split_fields(line, ','));
  return rows;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_dir, std::ostream& out) {
  std::vector<std::pair<std::string, FidelityReport>> fidelity;
  std::vector<std::vector<std::string>> downstream;
  for (const auto& in : inputs) {
    const fs::path d(in);
    if (fs::exists(d / "fidelity_report.csv"))
      for (auto& col : read_fidelity_report(d / "fidelity_report.csv")) fidelity.push_back(std::move(col));
    if (fs::exists(d / "downstream_report.csv")) {
      auto rows = read_csv(d / "downstream_report.csv");
      downstream.insert(downstream.end(), rows.begin() + 1, rows.end());
    }
  }
  if (fidelity.empty() && downstream.empty())
    fail(ErrorCode::IoFailure, "no fidelity_report.csv or downstream_report.csv under the given inputs");
  const fs::path dir(out_dir);
  DirLock lock(dir);
  std::ofstream md(dir / "summary.md", std::ios::trunc);
  if (!md) fail(ErrorCode::IoFailure, "cannot write " + (dir / "summary.md").string());
  auto fmt = [](double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(3) << v;
    return s.str();
  };
  if (!fidelity.empty()) {
    md << "## Fidelity\n\n| Metric |";
    for (const auto& [name, _] : fidelity) md << ' ' << name << " |";
    md << "\n|---|";
    for (std::size_t i = 0; i < fidelity.size(); ++i) md << "---|";
    md << '\n';
    auto row = [&](const char* label, auto cell) {
      md << "| " << label << " |";
      for (const auto& [_, r] : fidelity) md << ' ' << cell(r) << " |";
      md << '\n';
    };
    row("MSE", [&](const FidelityReport& r) { return fmt(r.mse); });
    row("LSD", [&](const FidelityReport& r) { return fmt(r.lsd_mean) + " ± " + fmt(r.lsd_std); });
    row("Correlation", [&](const FidelityReport& r) { return fmt(r.corr_mean) + " ± " + fmt(r.corr_std); });
    row("MMD", [&](const FidelityReport& r) { return fmt(r.mmd); });
    row("MMD (sinus)", [&](const FidelityReport& r) { return r.mmd_sinus ? fmt(*r.mmd_sinus) : std::string("-"); });
    row("MMD (AF)", [&](const FidelityReport& r) { return r.mmd_af ? fmt(*r.mmd_af) : std::string("-"); });
    row("KL", [&](const FidelityReport& r) { return fmt(r.kl_mean) + " ± " + fmt(r.kl_std); });
    row("Active units", [&](const FidelityReport& r) {
      return std::to_string(r.active_units) + "/" + std::to_string(r.latent_dim);
    });
    md << '\n';
  }
  if (!downstream.empty()) {
    // scenario -> k -> (corr, rmse)
    std::vector<std::string> scenarios;
    std::map<int, std::map<std::string, std::pair<std::string, std::string>>> table;
    for (const auto& r : downstream) {
      if (r.size() < 8) fail(ErrorCode::ParseError, "malformed downstream_report.csv row");
      if (std::find(scenarios.begin(), scenarios.end(), r[0]) == scenarios.end()) scenarios.push_back(r[0]);
      table[std::stoi(r[1])][r[0]] = {fmt(parse_double(r[4])) + " ± " + fmt(parse_double(r[5])),
                                      fmt(parse_double(r[6])) + " ± " + fmt(parse_double(r[7]))};
    }
    md << "## Downstream reconstruction\n\n| k |";
    for (const auto& s : scenarios) md << ' ' << s << " Corr | " << s << " RMSE |";
    md << "\n|---|";
    for (std::size_t i = 0; i < scenarios.size(); ++i) md << "---|---|";
    md << '\n';
    for (const auto& [k, cells] : table) {
      md << "| " << k << " |";
      for (const auto& s : scenarios) {
        const auto it = cells.find(s);
        if (it == cells.end()) md << " - | - |";
        else md << ' ' << it->second.first << " | " << it->second.second << " |";
      }
      md << '\n';
    }
  }
  out << "wrote " << (dir / "summary.md").string() << '\n';
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthetic multichannel atrial electrogram toolkit"};
  app.name("egmsynth");
  app.require_subcommand(1, 1);

  Common common;
  std::optional<int> n_sinus, n_af, channels, epochs, n_gen, keep;
  std::optional<double> duration, target;
  std::optional<std::string> mode, fit;
  bool no_stratify = false, conditional = false;
  std::string data, model_path, synt_s, synt_c;
  std::vector<std::string> models, synthetic, names, inputs;
  std::vector<int> k_grid;

  auto* sim = app.add_subcommand("simulate", "Write a surrogate electrogram dataset with a train/val/test split");
  add_common(sim, common);
  sim->add_option("--sinus", n_sinus, "Sinus records [config sim.n_sinus, default 19]");
  sim->add_option("--af", n_af, "AF records [config sim.n_af, default 33]");
  sim->add_option("--channels", channels, "Atrial sites per record [default 2048]");
  sim->add_option("--duration", duration, "Seconds per record, in [2, 4] [default 2]");
  sim->add_option("--target-rate", target, "Resample to this rate in Hz [default 200]");
  sim->add_flag("--no-stratify", no_stratify, "Split without preserving class proportions");

  auto* tr = app.add_subcommand("train", "Train a VAE; writes train_log.csv, epoch_log.csv, best.ckpt, model.ckpt");
  add_common(tr, common);
  tr->add_option("--data", data, "Dataset directory or manifest")->required();
  tr->add_option("--epochs", epochs, "Maximum epochs [config train.max_epochs, default 90]");
  tr->add_flag("--conditional", conditional, "Train the class-conditioned model");

  auto* gen = app.add_subcommand("generate", "Sample, decode and curate a synthetic dataset");
  add_common(gen, common);
  gen->add_option("--model", model_path, "Checkpoint")->required()->check(CLI::ExistingFile);
  gen->add_option("--data", data, "Dataset whose training split serves as curation references")->required();
  gen->add_option("--mode", mode, "S (sinus model) or C (class-conditioned) [default S]");
  gen->add_option("--n", n_gen, "Candidates per class [default 200]");
  gen->add_option("--keep", keep, "Curated records kept per class [default 25]");
  gen->add_option("--fit-mode", fit, "Aggregated posterior: diagonal or full [default diagonal]");

  auto* ev = app.add_subcommand("evaluate", "Fidelity metrics of synthetic sets against the test split");
  add_common(ev, common);
  ev->add_option("--data", data, "Real dataset directory or manifest")->required();
  ev->add_option("--model", models, "Checkpoint (repeatable)")->required();
  ev->add_option("--synthetic", synthetic, "Synthetic dataset for the matching --model (repeatable)")->required();
  ev->add_option("--name", names, "Column name for the matching --model (repeatable) [default checkpoint stem]");

  auto* ds = app.add_subcommand("downstream", "Augmentation scenarios for BSPM-to-EGM reconstruction");
  add_common(ds, common);
  ds->add_option("--data", data, "Real dataset directory or manifest")->required();
  ds->add_option("--synt-s", synt_s, "Synthetic set from the sinus model");
  ds->add_option("--synt-c", synt_c, "Synthetic set from the class-conditioned model");
  ds->add_option("--k", k_grid, "Augmentation counts [default 0,10,14,18,20,25]")->delimiter(',');

  auto* rp = app.add_subcommand("report", "Collate fidelity and downstream CSVs into summary.md");
  rp->add_option("--inputs", inputs, "Directories holding fidelity_report.csv / downstream_report.csv")->required();
  rp->add_option("--out", common.out, "Output directory")->required();

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "egmsynth: " << e.what() << '\n' << app.help();
    return 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(common, n_sinus, n_af, channels, duration, target, no_stratify, out);
    if (tr->parsed()) return cmd_train(common, data, epochs, conditional, out);
    if (gen->parsed()) return cmd_generate(common, model_path, data, mode, n_gen, keep, fit, out);
    if (ev->parsed()) return cmd_evaluate(common, models, synthetic, names, data, out);
    if (ds->parsed()) return cmd_downstream(common, data, synt_s, synt_c, k_grid, out);
    if (rp->parsed()) return cmd_report(inputs, common.out, out);
  } catch (const Error& e) {
    err << "egmsynth: error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "egmsynth: error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace egmsynth::cli
