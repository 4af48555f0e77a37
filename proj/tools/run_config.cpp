#include "run_config.hpp"

#include <cstdlib>
#include <fstream>

#include "egmsynth/errors.hpp"

namespace egmsynth::cli {

using nlohmann::json;
using nlohmann::ordered_json;

void RunConfig::set_seed(std::uint64_t seed) {
  sim.seed = seed;
  init_seed = seed;
  train.seed = seed;
  generate.seed = seed;
  downstream.forward_seed = seed;
  downstream.recon.seed = seed;
}

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  const auto& b = c.sim.base;
  j["sim"] = {{"n_sinus", c.sim.n_sinus},
              {"n_af", c.sim.n_af},
              {"n_channels", b.n_channels},
              {"duration_s", b.duration_s},
              {"sample_rate_hz", b.sample_rate_hz},
              {"target_rate_hz", c.sim.target_rate_hz ? json(*c.sim.target_rate_hz) : json(nullptr)},
              {"normalize", c.sim.normalize},
              {"stratify", c.sim.stratify},
              {"seed", c.sim.seed},
              {"cycle_length_ms", b.cycle_length_ms},
              {"af_irregularity", b.af_irregularity},
              {"af_cycle_length_ms", b.af_cycle_length_ms},
              {"onset_ms", b.onset_ms},
              {"conduction_spread_ms", b.conduction_spread_ms},
              {"wavefront_angle_rad", b.wavefront_angle_rad},
              {"deflection_width_ms", b.deflection_width_ms},
              {"slow_wave_fraction", b.slow_wave_fraction},
              {"slow_wave_gain", b.slow_wave_gain},
              {"amplitude_jitter", b.amplitude_jitter},
              {"noise_std", b.noise_std},
              {"af_cycle_cv", b.af_cycle_cv},
              {"af_delay_jitter_ms", b.af_delay_jitter_ms}};
  const auto& m = c.model;
  j["model"] = {{"latent_dim", m.latent_dim},
                {"input_samples", m.input_samples},
                {"input_channels", m.input_channels},
                {"conditional", m.conditional},
                {"encoder_widths", m.encoder_widths},
                {"decoder_widths", m.decoder_widths},
                {"kernel", m.kernel},
                {"leaky_slope", m.leaky_slope},
                {"working_rate_hz", m.working_rate_hz},
                {"class_prior_scale", m.class_prior_scale},
                {"init_seed", c.init_seed}};
  const auto& t = c.train;
  j["train"] = {{"lr", t.lr},
                {"batch_size", t.batch_size},
                {"max_epochs", t.max_epochs},
                {"early_stop_patience", t.early_stop_patience},
                {"scheduler_factor", t.scheduler.factor},
                {"scheduler_patience", t.scheduler.patience},
                {"improvement_tolerance", t.improvement_tolerance},
                {"seed", t.seed},
                {"beta_max", c.beta.beta_max},
                {"warmup_epochs", c.beta.warmup_epochs},
                {"w_recon", t.weights.recon},
                {"w_corr", t.weights.corr},
                {"w_grad", t.weights.grad},
                {"w_hf", t.weights.hf},
                {"w_noise", t.weights.noise},
                {"n_fft", t.spectral.n_fft},
                {"hop", t.spectral.hop},
                {"cutoff_normalized", t.spectral.cutoff_normalized},
                {"spur_fraction", t.spectral.spur_fraction}};
  j["generate"] = {{"mode", c.generate.spec.mode == SynthMode::C ? "C" : "S"},
                   {"n_generate", c.generate.spec.n_generate},
                   {"n_keep", c.generate.spec.n_keep},
                   {"fit_mode", std::string(to_string(c.generate.fit_mode))},
                   {"seed", c.generate.seed}};
  j["metrics"] = {{"active_threshold", c.metrics.active_threshold},
                  {"mmd_bandwidth", c.metrics.mmd_bandwidth ? json(*c.metrics.mmd_bandwidth) : json(nullptr)},
                  {"n_fft", c.metrics.spectral.n_fft},
                  {"hop", c.metrics.spectral.hop}};
  const auto& d = c.downstream;
  j["downstream"] = {{"leads", d.leads},
                     {"noise_level", d.noise_level},
                     {"smoothing_width", d.smoothing_width},
                     {"forward_seed", d.forward_seed},
                     {"k_grid", d.k_grid},
                     {"hidden", d.recon.hidden},
                     {"kernel", d.recon.kernel},
                     {"epochs", d.recon.epochs},
                     {"batch_size", d.recon.batch_size},
                     {"lr", d.recon.lr},
                     {"seed", d.recon.seed}};
  return j;
}

namespace {

void check_keys(const json& doc, const ordered_json& defaults, const std::string& where) {
  if (!doc.is_object()) fail(ErrorCode::InvalidConfig, where + " must be an object");
  for (const auto& [key, value] : doc.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!defaults.contains(key)) fail(ErrorCode::InvalidConfig, "unknown config key '" + path + "'");
    if (defaults[key].is_object()) check_keys(value, defaults[key], path);
  }
}

template <class T>
void get(const json& section, const char* key, T& out, const std::string& where) {
  try {
    out = section.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, "bad value for " + where + "." + key + ": " + e.what());
  }
}

template <class T>
void get_opt(const json& section, const char* key, std::optional<T>& out, const std::string& where) {
  if (section.at(key).is_null()) {
    out.reset();
    return;
  }
  T v{};
  get(section, key, v, where);
  out = v;
}

}  // namespace

RunConfig from_json(const json& doc) {
  RunConfig c;
  const ordered_json defaults = to_json(c);
  check_keys(doc, defaults, "");
  // Section-wise overlay rather than merge_patch, which would read null as "delete".
  json merged = json::parse(defaults.dump());
  for (const auto& [section, fields] : doc.items())
    for (const auto& [key, value] : fields.items()) merged[section][key] = value;

  const json& s = merged["sim"];
  auto& b = c.sim.base;
  get(s, "n_sinus", c.sim.n_sinus, "sim");
  get(s, "n_af", c.sim.n_af, "sim");
  get(s, "n_channels", b.n_channels, "sim");
  get(s, "duration_s", b.duration_s, "sim");
  get(s, "sample_rate_hz", b.sample_rate_hz, "sim");
  get_opt(s, "target_rate_hz", c.sim.target_rate_hz, "sim");
  get(s, "normalize", c.sim.normalize, "sim");
  get(s, "stratify", c.sim.stratify, "sim");
  get(s, "seed", c.sim.seed, "sim");
  get(s, "cycle_length_ms", b.cycle_length_ms, "sim");
  get(s, "af_irregularity", b.af_irregularity, "sim");
  get(s, "af_cycle_length_ms", b.af_cycle_length_ms, "sim");
  get(s, "onset_ms", b.onset_ms, "sim");
  get(s, "conduction_spread_ms", b.conduction_spread_ms, "sim");
  get(s, "wavefront_angle_rad", b.wavefront_angle_rad, "sim");
  get(s, "deflection_width_ms", b.deflection_width_ms, "sim");
  get(s, "slow_wave_fraction", b.slow_wave_fraction, "sim");
  get(s, "slow_wave_gain", b.slow_wave_gain, "sim");
  get(s, "amplitude_jitter", b.amplitude_jitter, "sim");
  get(s, "noise_std", b.noise_std, "sim");
  get(s, "af_cycle_cv", b.af_cycle_cv, "sim");
  get(s, "af_delay_jitter_ms", b.af_delay_jitter_ms, "sim");

  const json& m = merged["model"];
  get(m, "latent_dim", c.model.latent_dim, "model");
  get(m, "input_samples", c.model.input_samples, "model");
  get(m, "input_channels", c.model.input_channels, "model");
  get(m, "conditional", c.model.conditional, "model");
  get(m, "encoder_widths", c.model.encoder_widths, "model");
  get(m, "decoder_widths", c.model.decoder_widths, "model");
  get(m, "kernel", c.model.kernel, "model");
  get(m, "leaky_slope", c.model.leaky_slope, "model");
  get(m, "working_rate_hz", c.model.working_rate_hz, "model");
  get(m, "class_prior_scale", c.model.class_prior_scale, "model");
  get(m, "init_seed", c.init_seed, "model");

  const json& t = merged["train"];
  get(t, "lr", c.train.lr, "train");
  get(t, "batch_size", c.train.batch_size, "train");
  get(t, "max_epochs", c.train.max_epochs, "train");
  get(t, "early_stop_patience", c.train.early_stop_patience, "train");
  get(t, "scheduler_factor", c.train.scheduler.factor, "train");
  get(t, "scheduler_patience", c.train.scheduler.patience, "train");
  get(t, "improvement_tolerance", c.train.improvement_tolerance, "train");
  get(t, "seed", c.train.seed, "train");
  get(t, "beta_max", c.beta.beta_max, "train");
  get(t, "warmup_epochs", c.beta.warmup_epochs, "train");
  get(t, "w_recon", c.train.weights.recon, "train");
  get(t, "w_corr", c.train.weights.corr, "train");
  get(t, "w_grad", c.train.weights.grad, "train");
  get(t, "w_hf", c.train.weights.hf, "train");
  get(t, "w_noise", c.train.weights.noise, "train");
  get(t, "n_fft", c.train.spectral.n_fft, "train");
  get(t, "hop", c.train.spectral.hop, "train");
  get(t, "cutoff_normalized", c.train.spectral.cutoff_normalized, "train");
  get(t, "spur_fraction", c.train.spectral.spur_fraction, "train");

  const json& g = merged["generate"];
  std::string mode, fit;
  get(g, "mode", mode, "generate");
  if (mode != "S" && mode != "C") fail(ErrorCode::InvalidConfig, "generate.mode must be \"S\" or \"C\"");
  c.generate.spec.mode = mode == "C" ? SynthMode::C : SynthMode::S;
  get(g, "n_generate", c.generate.spec.n_generate, "generate");
  get(g, "n_keep", c.generate.spec.n_keep, "generate");
  get(g, "fit_mode", fit, "generate");
  try {
    c.generate.fit_mode = parse_fit_mode(fit);
  } catch (const Error&) {
    fail(ErrorCode::InvalidConfig, "generate.fit_mode must be \"diagonal\" or \"full\"");
  }
  get(g, "seed", c.generate.seed, "generate");

  const json& x = merged["metrics"];
  get(x, "active_threshold", c.metrics.active_threshold, "metrics");
  get_opt(x, "mmd_bandwidth", c.metrics.mmd_bandwidth, "metrics");
  get(x, "n_fft", c.metrics.spectral.n_fft, "metrics");
  get(x, "hop", c.metrics.spectral.hop, "metrics");

  const json& d = merged["downstream"];
  get(d, "leads", c.downstream.leads, "downstream");
  get(d, "noise_level", c.downstream.noise_level, "downstream");
  get(d, "smoothing_width", c.downstream.smoothing_width, "downstream");
  get(d, "forward_seed", c.downstream.forward_seed, "downstream");
  get(d, "k_grid", c.downstream.k_grid, "downstream");
  get(d, "hidden", c.downstream.recon.hidden, "downstream");
  get(d, "kernel", c.downstream.recon.kernel, "downstream");
  get(d, "epochs", c.downstream.recon.epochs, "downstream");
  get(d, "batch_size", c.downstream.recon.batch_size, "downstream");
  get(d, "lr", c.downstream.recon.lr, "downstream");
  get(d, "seed", c.downstream.recon.seed, "downstream");

  c.sim.base.validate();
  c.model.validate();
  c.train.validate();
  c.beta.validate();
  c.metrics.spectral.validate();
  c.downstream.recon.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::IoFailure, "cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
  return from_json(doc);
}

RunConfig resolve_config(const std::optional<std::filesystem::path>& path) {
  RunConfig c = path ? load_run_config(*path) : RunConfig{};
  if (const char* env = std::getenv("EGMSYNTH_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0') fail(ErrorCode::InvalidConfig, "EGMSYNTH_SEED must be a nonnegative integer");
    c.set_seed(v);
  }
  return c;
}

void write_used_config(const RunConfig& config, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream os(out_dir / "config.used", std::ios::trunc);
  if (!os) fail(ErrorCode::IoFailure, "cannot write " + (out_dir / "config.used").string());
  os << to_json(config).dump(2) << '\n';
}

}  // namespace egmsynth::cli
