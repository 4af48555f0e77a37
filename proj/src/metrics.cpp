#include "egmsynth/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <unsupported/Eigen/FFT>

#include "egmsynth/csv.hpp"
#include "egmsynth/errors.hpp"
#include "egmsynth/kernels.hpp"
#include "egmsynth/losses.hpp"

namespace egmsynth {

namespace {

void check_pair(const Matrix& x, const Matrix& y) {
  require(x.rows() == y.rows() && x.cols() == y.cols() && x.size() > 0, ErrorCode::ShapeMismatch,
          "signal shapes differ");
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

}  // namespace

double lsd(const Matrix& x, const Matrix& y, const SpectralConfig& cfg) {
  check_pair(x, y);
  cfg.validate();
  require(x.rows() >= cfg.n_fft, ErrorCode::SignalTooShort, "signal shorter than n_fft");
  const StftPlan plan(cfg);
  const auto sx = plan.forward(x);
  const auto sy = plan.forward(y);
  const Eigen::ArrayXXd px = sx.re.array().square() + sx.im.array().square();
  const Eigen::ArrayXXd py = sy.re.array().square() + sy.im.array().square();
  const Eigen::ArrayXXd diff = 10.0 * ((px + 1e-12).log10() - (py + 1e-12).log10());
  return (diff.square().rowwise().mean().sqrt()).mean();
}

double pearson(const Matrix& x, const Matrix& y) {
  check_pair(x, y);
  const Matrix xc = x.rowwise() - x.colwise().mean();
  const Matrix yc = y.rowwise() - y.colwise().mean();
  double acc = 0.0;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double sxx = xc.col(c).squaredNorm(), syy = yc.col(c).squaredNorm();
    if (sxx > 0.0 && syy > 0.0) acc += xc.col(c).dot(yc.col(c)) / std::sqrt(sxx * syy);
  }
  return acc / static_cast<double>(x.cols());
}

Vector signal_features(const Matrix& x) {
  const Eigen::Index t = x.rows(), n = x.cols();
  require(t >= 2, ErrorCode::SignalTooShort, "features need at least 2 samples");
  Vector f(4 * n);
  Eigen::FFT<double> fft;
  std::vector<double> col(static_cast<std::size_t>(t));
  std::vector<std::complex<double>> spec;
  const Eigen::Index half = t / 2;
  for (Eigen::Index c = 0; c < n; ++c) {
    const double mean = x.col(c).mean();
    double var = 0.0;
    for (Eigen::Index i = 0; i < t; ++i) {
      col[i] = x(i, c) - mean;
      var += col[i] * col[i];
    }
    fft.fwd(spec, col);
    double total = 0.0, peak = -1.0;
    Eigen::Index arg = 0;
    for (Eigen::Index k = 1; k <= half; ++k) {
      const double p = std::norm(spec[k]);
      total += p;
      if (p > peak) {
        peak = p;
        arg = k;
      }
    }
    double entropy = 0.0;
    if (total > 0.0)
      for (Eigen::Index k = 1; k <= half; ++k) {
        const double q = std::norm(spec[k]) / total;
        if (q > 0.0) entropy -= q * std::log(q);
      }
    f[4 * c] = mean;
    f[4 * c + 1] = std::sqrt(var / static_cast<double>(t));
    f[4 * c + 2] = total > 0.0 ? static_cast<double>(arg) / static_cast<double>(half) : 0.0;
    f[4 * c + 3] = half > 1 ? entropy / std::log(static_cast<double>(half)) : 0.0;
  }
  return f;
}

Matrix feature_matrix(std::span<const EgmTensor> set) {
  require(!set.empty(), ErrorCode::EmptySet, "empty signal set");
  std::vector<Vector> rows(set.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(set.size()); ++i) rows[i] = signal_features(set[i].values);
  Matrix m(static_cast<Eigen::Index>(set.size()), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i].size() == m.cols(), ErrorCode::ShapeMismatch, "signals have different channel counts");
    m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  }
  return m;
}

double median_bandwidth(const Matrix& a, const Matrix& b) {
  Matrix all(a.rows() + b.rows(), a.cols());
  all << a, b;
  std::vector<double> d;
  for (Eigen::Index i = 0; i < all.rows(); ++i)
    for (Eigen::Index j = i + 1; j < all.rows(); ++j) {
      const double v = (all.row(i) - all.row(j)).norm();
      if (v > 0.0) d.push_back(v);
    }
  if (d.empty()) return 1.0;
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  if (d.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(d.begin(), mid);
  return 0.5 * (lo + hi);
}

double mmd_features(const Matrix& a, const Matrix& b, double bandwidth) {
  require(a.rows() > 0 && b.rows() > 0, ErrorCode::EmptySet, "MMD needs two nonempty sets");
  require(a.cols() == b.cols(), ErrorCode::ShapeMismatch, "feature dimensions differ");
  const double kaa = kernels::rbf_gram(a, a, bandwidth).mean();
  const double kbb = kernels::rbf_gram(b, b, bandwidth).mean();
  const double kab = kernels::rbf_gram(a, b, bandwidth).mean();
  return std::max(0.0, kaa + kbb - 2.0 * kab);
}

double mmd(std::span<const EgmTensor> a, std::span<const EgmTensor> b, std::optional<double> bandwidth) {
  require(!a.empty() && !b.empty(), ErrorCode::EmptySet, "MMD needs two nonempty sets");
  const Matrix fa = feature_matrix(a), fb = feature_matrix(b);
  return mmd_features(fa, fb, bandwidth.value_or(median_bandwidth(fa, fb)));
}

int active_units(std::span<const LatentStats> stats, double threshold) {
  require(!stats.empty(), ErrorCode::EmptySet, "no latent statistics");
  const Eigen::Index d = stats.front().mean.size();
  Vector mean = Vector::Zero(d), sq = Vector::Zero(d);
  for (const auto& s : stats) mean += s.mean;
  mean /= static_cast<double>(stats.size());
  for (const auto& s : stats) sq += (s.mean - mean).cwiseAbs2();
  sq /= static_cast<double>(stats.size());
  return static_cast<int>((sq.array() > threshold).count());
}

FidelityReport evaluate(const Vae& model, std::span<const EgmTensor> test_set,
                        std::span<const EgmTensor> generated_set, const MetricsConfig& cfg) {
  require(!test_set.empty() && !generated_set.empty(), ErrorCode::EmptySet, "evaluation needs test and generated sets");
  const bool cond = model.config().conditional;
  FidelityReport r;
  r.latent_dim = model.config().latent_dim;

  std::vector<LatentStats> stats(test_set.size());
  std::vector<double> kl(test_set.size()), mse(test_set.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(test_set.size()); ++i) {
    const auto label = cond ? std::optional(test_set[i].rhythm) : std::nullopt;
    stats[i] = model.encode(test_set[i], label);
    kl[i] = kl_loss(stats[i], model.prior_mean(label));
    mse[i] = recon_loss(test_set[i].values, model.decode(stats[i].mean, label).values);
  }
  r.mse = mean_std(mse).first;
  std::tie(r.kl_mean, r.kl_std) = mean_std(kl);
  r.active_units = active_units(stats, cfg.active_threshold);

  const Matrix rmse = kernels::pairwise_rmse(generated_set, test_set);
  std::vector<double> corr(generated_set.size()), dist(generated_set.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(generated_set.size()); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = test_set.size();
    for (std::size_t j = 0; j < test_set.size(); ++j) {
      if (cond && test_set[j].rhythm != generated_set[i].rhythm) continue;
      if (rmse(i, static_cast<Eigen::Index>(j)) < best) {
        best = rmse(i, static_cast<Eigen::Index>(j));
        arg = j;
      }
    }
    if (arg == test_set.size())
      fail(ErrorCode::MissingClass, "no test reference of class " + std::string(to_string(generated_set[i].rhythm)));
    corr[i] = pearson(test_set[arg].values, generated_set[i].values);
    dist[i] = lsd(test_set[arg].values, generated_set[i].values, cfg.spectral);
  }
  std::tie(r.corr_mean, r.corr_std) = mean_std(corr);
  std::tie(r.lsd_mean, r.lsd_std) = mean_std(dist);
  r.mmd = mmd(generated_set, test_set, cfg.mmd_bandwidth);
  if (cond) {
    for (RhythmClass c : kAllRhythms) {
      std::vector<EgmTensor> g, t;
      for (const auto& x : generated_set)
        if (x.rhythm == c) g.push_back(x);
      for (const auto& x : test_set)
        if (x.rhythm == c) t.push_back(x);
      if (g.empty() || t.empty()) continue;
      (c == RhythmClass::Sinus ? r.mmd_sinus : r.mmd_af) = mmd(g, t, cfg.mmd_bandwidth);
    }
  }
  return r;
}

namespace {

const std::vector<std::string> kMetricRows{"mse",     "lsd_mean", "lsd_std", "corr_mean",    "corr_std",
                                           "mmd",     "mmd_sinus", "mmd_af", "kl_mean",      "kl_std",
                                           "active_units", "latent_dim"};

std::string cell(const FidelityReport& r, const std::string& m) {
  if (m == "mse") return format_double(r.mse);
  if (m == "lsd_mean") return format_double(r.lsd_mean);
  if (m == "lsd_std") return format_double(r.lsd_std);
  if (m == "corr_mean") return format_double(r.corr_mean);
  if (m == "corr_std") return format_double(r.corr_std);
  if (m == "mmd") return format_double(r.mmd);
  if (m == "mmd_sinus") return r.mmd_sinus ? format_double(*r.mmd_sinus) : "";
  if (m == "mmd_af") return r.mmd_af ? format_double(*r.mmd_af) : "";
  if (m == "kl_mean") return format_double(r.kl_mean);
  if (m == "kl_std") return format_double(r.kl_std);
  if (m == "active_units") return std::to_string(r.active_units);
  return std::to_string(r.latent_dim);
}

void set_cell(FidelityReport& r, const std::string& m, const std::string& v) {
  const auto opt = [&]() -> std::optional<double> {
    if (v.empty()) return std::nullopt;
    return parse_double(v);
  };
  if (m == "mse") r.mse = parse_double(v);
  else if (m == "lsd_mean") r.lsd_mean = parse_double(v);
  else if (m == "lsd_std") r.lsd_std = parse_double(v);
  else if (m == "corr_mean") r.corr_mean = parse_double(v);
  else if (m == "corr_std") r.corr_std = parse_double(v);
  else if (m == "mmd") r.mmd = parse_double(v);
  else if (m == "mmd_sinus") r.mmd_sinus = opt();
  else if (m == "mmd_af") r.mmd_af = opt();
  else if (m == "kl_mean") r.kl_mean = parse_double(v);
  else if (m == "kl_std") r.kl_std = parse_double(v);
  else if (m == "active_units") r.active_units = std::stoi(v);
  else if (m == "latent_dim") r.latent_dim = std::stoi(v);
  else fail(ErrorCode::ParseError, "unknown metric row '" + m + "'");
}

}  // namespace

void write_fidelity_report(const std::filesystem::path& path,
                           const std::vector<std::pair<std::string, FidelityReport>>& columns) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorCode::IoFailure, "cannot write " + path.string());
  os << "metric";
  for (const auto& [name, _] : columns) os << ',' << name;
  os << '\n';
  for (const auto& m : kMetricRows) {
    os << m;
    for (const auto& [_, r] : columns) os << ',' << cell(r, m);
    os << '\n';
  }
}

std::vector<std::pair<std::string, FidelityReport>> read_fidelity_report(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::IoFailure, "cannot read " + path.string());
  std::string line;
  if (!std::getline(is, line)) fail(ErrorCode::ParseError, "empty fidelity report");
  auto header = split_fields(line, ',');
  if (header.empty() || header[0] != "metric") fail(ErrorCode::ParseError, "bad fidelity report header");
  std::vector<std::pair<std::string, FidelityReport>> out;
  for (std::size_t i = 1; i < header.size(); ++i) out.emplace_back(header[i], FidelityReport{});
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto f = split_fields(line, ',');
    if (f.size() != header.size()) fail(ErrorCode::ParseError, "ragged fidelity report row: " + line);
    for (std::size_t i = 1; i < f.size(); ++i) set_cell(out[i - 1].second, f[0], f[i]);
  }
  return out;
}

std::string embedding_csv(std::span<const LatentStats> latents, std::span<const RhythmClass> labels) {
  require(!latents.empty(), ErrorCode::EmptySet, "nothing to export");
  require(latents.size() == labels.size(), ErrorCode::LengthMismatch, "latents and labels differ in length");
  const int d = latents.front().dim();
  std::ostringstream os;
  for (int k = 0; k < d; ++k) os << "mu_" << k << ',';
  os << "label\n";
  for (std::size_t i = 0; i < latents.size(); ++i) {
    require(latents[i].dim() == d, ErrorCode::ShapeMismatch, "latent length mismatch");
    for (int k = 0; k < d; ++k) os << format_double(latents[i].mean[k]) << ',';
    os << to_string(labels[i]) << '\n';
  }
  return os.str();
}

void export_embedding(std::span<const LatentStats> latents, std::span<const RhythmClass> labels,
                      const std::filesystem::path& path) {
  const std::string text = embedding_csv(latents, labels);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorCode::IoFailure, "cannot write " + path.string());
  os << text;
}

}  // namespace egmsynth
