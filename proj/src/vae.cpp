#include "egmsynth/vae.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "egmsynth/csv.hpp"
#include "egmsynth/errors.hpp"

namespace egmsynth {

void ModelConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::InvalidConfig, what);
  };
  check(latent_dim >= 1, "latent_dim must be >= 1");
  check(!conditional || n_classes == 2, "conditional models use exactly 2 classes");
  check(!encoder_widths.empty(), "encoder needs at least one stage");
  check(encoder_widths.size() == decoder_widths.size(), "encoder and decoder stage counts differ");
  for (int w : encoder_widths) check(w > 0, "encoder widths must be positive");
  for (int w : decoder_widths) check(w > 0, "decoder widths must be positive");
  check(kernel >= 1 && kernel % 2 == 1, "kernel must be odd");
  check(working_rate_hz > 0.0, "working_rate_hz must be positive");
  check(class_prior_scale >= 0.0, "class_prior_scale must be >= 0");
  check(!conditional || class_prior_scale == 0.0 || latent_dim >= 2,
        "a class-conditioned prior needs latent_dim >= 2");
  const int factor = 1 << stages();
  check(input_samples > 0 && input_channels > 0 && input_samples % factor == 0 &&
            input_channels % factor == 0,
        "input shape must be divisible by 2^stages = " + std::to_string(factor));
}

namespace {

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  for (const auto& f : split_fields(s, ',')) out.push_back(std::stoi(f));
  return out;
}

}  // namespace

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "latent_dim=" << latent_dim << '\n'
     << "input_samples=" << input_samples << '\n'
     << "input_channels=" << input_channels << '\n'
     << "conditional=" << (conditional ? 1 : 0) << '\n'
     << "n_classes=" << n_classes << '\n'
     << "encoder_widths=" << join(encoder_widths) << '\n'
     << "decoder_widths=" << join(decoder_widths) << '\n'
     << "kernel=" << kernel << '\n'
     << "leaky_slope=" << format_double(leaky_slope) << '\n'
     << "working_rate_hz=" << format_double(working_rate_hz) << '\n'
     << "class_prior_scale=" << format_double(class_prior_scale) << '\n';
  return os.str();
}

ModelConfig ModelConfig::from_text(std::string_view text) {
  ModelConfig c;
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorCode::ParseError, "bad config line: " + line);
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "latent_dim") c.latent_dim = std::stoi(val);
    else if (key == "input_samples") c.input_samples = std::stoi(val);
    else if (key == "input_channels") c.input_channels = std::stoi(val);
    else if (key == "conditional") c.conditional = std::stoi(val) != 0;
    else if (key == "n_classes") c.n_classes = std::stoi(val);
    else if (key == "encoder_widths") c.encoder_widths = parse_ints(val);
    else if (key == "decoder_widths") c.decoder_widths = parse_ints(val);
    else if (key == "kernel") c.kernel = std::stoi(val);
    else if (key == "leaky_slope") c.leaky_slope = parse_double(val);
    else if (key == "working_rate_hz") c.working_rate_hz = parse_double(val);
    else if (key == "class_prior_scale") c.class_prior_scale = parse_double(val);
    else fail(ErrorCode::ParseError, "unknown model config key '" + key + "'");
  }
  c.validate();
  return c;
}

Vector reparameterize(const LatentStats& stats, const Vector& eps) {
  require(stats.log_variance.size() == stats.mean.size() && eps.size() == stats.mean.size(),
          ErrorCode::ShapeMismatch, "latent length mismatch");
  Vector z = stats.mean;
  for (Eigen::Index d = 0; d < z.size(); ++d) {
    const double sd = std::exp(0.5 * stats.log_variance[d]);
    if (sd != 0.0) z[d] += sd * eps[d];
  }
  return z;
}

Vector reparameterize(const LatentStats& stats, std::uint64_t noise_seed) {
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector eps(stats.mean.size());
  for (auto& e : eps) e = gauss(rng);
  return reparameterize(stats, eps);
}

Vae::Vae(ModelConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
  config_.validate();
  const int extra = config_.conditional ? config_.n_classes : 0;
  const int k = config_.kernel;
  const double slope = config_.leaky_slope;

  encoder_ = nn::Sequential({1 + extra, config_.input_samples, config_.input_channels}, "encoder");
  int c = 1 + extra;
  for (int w : config_.encoder_widths) {
    encoder_.add(nn::Conv2d{c, w, k, k, k / 2, k / 2});
    encoder_.add(nn::LeakyRelu{slope});
    encoder_.add(nn::MaxPool2d{2, 2});
    c = w;
  }
  encoder_.add(nn::Dense{{2 * config_.latent_dim, 1, 1}});

  const int factor = 1 << config_.stages();
  const int base_h = config_.input_samples / factor, base_w = config_.input_channels / factor;
  const auto& dw = config_.decoder_widths;
  decoder_ = nn::Sequential({config_.latent_dim + extra, 1, 1}, "decoder");
  decoder_.add(nn::Dense{{dw[0], base_h, base_w}});
  decoder_.add(nn::LeakyRelu{slope});
  c = dw[0];
  for (int i = 0; i < config_.stages(); ++i) {
    const int out = dw[std::min<std::size_t>(i + 1, dw.size() - 1)];
    decoder_.add(nn::ConvTranspose2d{c, out, 4, 4, 2, 2, 1, 1});
    decoder_.add(nn::Smooth2d{});
    decoder_.add(nn::LeakyRelu{slope});
    c = out;
  }
  decoder_.add(nn::Conv2d{c, 1, k, k, k / 2, k / 2});
  decoder_.add(nn::Tanh{});

  params_.assign(encoder_.param_count() + decoder_.param_count(), 0.0);
  nn::Rng rng(init_seed);
  encoder_.init(std::span<double>(params_).first(encoder_.param_count()), rng);
  decoder_.init(std::span<double>(params_).subspan(encoder_.param_count()), rng);
}

std::span<const double> Vae::encoder_parameters() const {
  return std::span<const double>(params_).first(encoder_.param_count());
}

std::span<const double> Vae::decoder_parameters() const {
  return std::span<const double>(params_).subspan(encoder_.param_count());
}

void Vae::set_parameters(std::span<const double> values) {
  require(values.size() == params_.size(), ErrorCode::ShapeMismatch, "parameter count mismatch");
  std::copy(values.begin(), values.end(), params_.begin());
}

void Vae::check_label(std::optional<RhythmClass> label) const {
  if (config_.conditional && !label) fail(ErrorCode::MissingClass, "conditional model needs a class label");
  if (!config_.conditional && label) fail(ErrorCode::NotConditional, "class label given to an unconditional model");
}

Vector Vae::prior_mean(std::optional<RhythmClass> label) const {
  check_label(label);
  Vector m = Vector::Zero(config_.latent_dim);
  if (label && config_.class_prior_scale > 0.0) {
    const auto hot = one_hot(*label);
    m[0] = config_.class_prior_scale * hot[0];
    m[1] = config_.class_prior_scale * hot[1];
  }
  return m;
}

nn::Tensor Vae::encoder_input(const EgmTensor& signal, std::optional<RhythmClass> label) const {
  check_label(label);
  require(signal.samples() == config_.input_samples && signal.channels() == config_.input_channels,
          ErrorCode::ShapeMismatch,
          "signal is " + std::to_string(signal.samples()) + "x" + std::to_string(signal.channels()) +
              ", model expects " + std::to_string(config_.input_samples) + "x" +
              std::to_string(config_.input_channels));
  nn::Tensor t = nn::Tensor::zeros(encoder_.input_shape());
  const std::size_t plane = static_cast<std::size_t>(signal.values.size());
  std::copy(signal.values.data(), signal.values.data() + plane, t.data.begin());
  if (label) {
    const auto hot = one_hot(*label);
    for (int k = 0; k < config_.n_classes; ++k)
      std::fill(t.data.begin() + (k + 1) * plane, t.data.begin() + (k + 2) * plane, hot[k]);
  }
  return t;
}

nn::Tensor Vae::decoder_input(const Vector& z, std::optional<RhythmClass> label) const {
  check_label(label);
  require(z.size() == config_.latent_dim, ErrorCode::ShapeMismatch, "latent vector length mismatch");
  const Vector in = label ? condition(z, *label) : z;
  return {decoder_.input_shape(), std::vector<double>(in.data(), in.data() + in.size())};
}

LatentStats Vae::split_head(const nn::Tensor& head) const {
  const int d = config_.latent_dim;
  LatentStats s;
  s.mean = Eigen::Map<const Vector>(head.data.data(), d);
  s.log_variance = Eigen::Map<const Vector>(head.data.data() + d, d);
  return s;
}

EgmTensor Vae::to_signal(const nn::Tensor& output, std::optional<RhythmClass> label) const {
  EgmTensor s;
  s.sample_rate_hz = config_.working_rate_hz;
  s.rhythm = label.value_or(RhythmClass::Sinus);
  s.values = Eigen::Map<const Matrix>(output.data.data(), config_.input_samples, config_.input_channels);
  return s;
}

LatentStats Vae::encode(const EgmTensor& signal, std::optional<RhythmClass> label) const {
  return split_head(encoder_.infer(encoder_input(signal, label), encoder_parameters()));
}

EgmTensor Vae::decode(const Vector& z, std::optional<RhythmClass> label) const {
  return to_signal(decoder_.infer(decoder_input(z, label), decoder_parameters()), label);
}

Vector Vae::condition(const Vector& z, RhythmClass label) const {
  if (!config_.conditional) fail(ErrorCode::NotConditional, "model is not class-conditioned");
  const auto hot = one_hot(label);
  Vector out(z.size() + 2);
  out << z, hot[0], hot[1];
  return out;
}

LatentStats Vae::condition(const LatentStats& stats, RhythmClass label) const {
  LatentStats out;
  out.mean = condition(stats.mean, label);
  out.log_variance.resize(stats.log_variance.size() + 2);
  out.log_variance << stats.log_variance, -std::numeric_limits<double>::infinity(),
      -std::numeric_limits<double>::infinity();
  return out;
}

std::vector<nn::ParamSlot> Vae::param_slots() const {
  auto slots = encoder_.param_slots();
  for (auto s : decoder_.param_slots()) {
    s.offset += encoder_.param_count();
    slots.push_back(std::move(s));
  }
  return slots;
}

// Checkpoint archive:
//   EGMCKPT1\n
//   config <bytes>\n<ModelConfig text>
//   tensors <count>\n
//   per tensor: <name> <ndim> <d0> ... \n<float32 little-endian payload>
void Vae::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorCode::IoFailure, "cannot open " + path.string());
  const std::string cfg = config_.to_text();
  os << "EGMCKPT1\nconfig " << cfg.size() << '\n' << cfg;
  const auto slots = param_slots();
  os << "tensors " << slots.size() << '\n';
  std::vector<float> buf;
  for (const auto& s : slots) {
    os << s.name << ' ' << s.dims.size();
    for (int d : s.dims) os << ' ' << d;
    os << '\n';
    buf.resize(s.count);
    for (std::size_t i = 0; i < s.count; ++i) {
      float f = static_cast<float>(params_[s.offset + i]);
      if constexpr (std::endian::native == std::endian::big)
        f = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(f)));
      buf[i] = f;
    }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  }
  if (!os) fail(ErrorCode::IoFailure, "write failed for " + path.string());
}

Vae Vae::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::IoFailure, "cannot open " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != "EGMCKPT1") fail(ErrorCode::ParseError, "not a checkpoint: " + path.string());
  std::getline(is, line);
  const auto cfg_hdr = split_fields(line, ' ');
  if (cfg_hdr.size() != 2 || cfg_hdr[0] != "config") fail(ErrorCode::ParseError, "missing config block");
  std::string cfg(static_cast<std::size_t>(std::stoull(cfg_hdr[1])), '\0');
  is.read(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  Vae model(ModelConfig::from_text(cfg), 0);

  std::getline(is, line);
  const auto t_hdr = split_fields(line, ' ');
  if (t_hdr.size() != 2 || t_hdr[0] != "tensors") fail(ErrorCode::ParseError, "missing tensor block");
  std::map<std::string, nn::ParamSlot> by_name;
  for (const auto& s : model.param_slots()) by_name[s.name] = s;
  const std::size_t count = std::stoull(t_hdr[1]);
  require(count == by_name.size(), ErrorCode::ParseError, "tensor count mismatch");
  std::vector<float> buf;
  for (std::size_t t = 0; t < count; ++t) {
    std::getline(is, line);
    const auto f = split_fields(line, ' ');
    require(f.size() >= 2, ErrorCode::ParseError, "bad tensor header");
    auto it = by_name.find(f[0]);
    require(it != by_name.end(), ErrorCode::ParseError, "unexpected tensor " + f[0]);
    const auto& slot = it->second;
    const std::size_t ndim = std::stoull(f[1]);
    require(f.size() == 2 + ndim && ndim == slot.dims.size(), ErrorCode::ShapeMismatch, "tensor rank mismatch for " + f[0]);
    for (std::size_t d = 0; d < ndim; ++d)
      require(std::stoi(f[2 + d]) == slot.dims[d], ErrorCode::ShapeMismatch, "tensor shape mismatch for " + f[0]);
    buf.resize(slot.count);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    if (is.gcount() != static_cast<std::streamsize>(buf.size() * 4))
      fail(ErrorCode::IoFailure, "truncated tensor " + f[0]);
    for (std::size_t i = 0; i < slot.count; ++i) {
      float v = buf[i];
      if constexpr (std::endian::native == std::endian::big)
        v = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(v)));
      model.params_[slot.offset + i] = v;
    }
  }
  return model;
}

}  // namespace egmsynth
