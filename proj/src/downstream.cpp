#include "egmsynth/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "egmsynth/csv.hpp"
#include "egmsynth/errors.hpp"
#include "egmsynth/metrics.hpp"
#include "egmsynth/optim.hpp"

namespace egmsynth {

ForwardModel ForwardModel::smoothed_random(int sites, int leads, std::uint64_t seed, double noise_level,
                                           int smoothing_width) {
  require(sites >= 1 && leads >= 1 && leads <= sites, ErrorCode::InvalidConfig, "need 1 <= leads <= sites");
  require(smoothing_width >= 0 && noise_level >= 0.0, ErrorCode::InvalidConfig, "bad forward model parameters");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix raw(leads, sites);
  for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] = gauss(rng);
  ForwardModel fm;
  fm.noise_level = noise_level;
  fm.transfer.resize(leads, sites);
  for (int l = 0; l < leads; ++l) {
    for (int s = 0; s < sites; ++s) {
      double acc = 0.0;
      for (int o = -smoothing_width; o <= smoothing_width; ++o) {
        const int j = std::clamp(s + o, 0, sites - 1);
        acc += raw(l, j);
      }
      fm.transfer(l, s) = acc;
    }
    const double norm = fm.transfer.row(l).cwiseAbs().sum();
    if (norm > 0.0) fm.transfer.row(l) /= norm;
  }
  return fm;
}

ForwardModel ForwardModel::identity(int sites) {
  ForwardModel fm;
  fm.transfer = Matrix::Identity(sites, sites);
  return fm;
}

Matrix project_to_bspm(const EgmTensor& egm, const ForwardModel& fm, std::uint64_t seed) {
  require(egm.channels() == fm.sites(), ErrorCode::ShapeMismatch,
          "EGM has " + std::to_string(egm.channels()) + " channels, forward model expects " +
              std::to_string(fm.sites()));
  Matrix b = egm.values * fm.transfer.transpose();
  if (fm.noise_level > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, fm.noise_level);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] += gauss(rng);
  }
  return b;
}

Matrix least_squares_reconstruct(const Matrix& bspm, const ForwardModel& fm) {
  require(bspm.cols() == fm.leads(), ErrorCode::ShapeMismatch, "BSPM lead count differs from forward model");
  const Eigen::MatrixXd a = fm.transfer;
  const Eigen::MatrixXd rhs = bspm.transpose();
  return a.completeOrthogonalDecomposition().solve(rhs).transpose();
}

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::VaeSAtK: return "VAE-S@k";
    case Scenario::VaeCAtKs: return "VAE-C@kS";
    case Scenario::VaeCAtKsKaf: return "VAE-C@kS+kAF";
  }
  return "?";
}

AugmentationPlan AugmentationPlan::make(Scenario scenario, int k) {
  AugmentationPlan p;
  p.scenario = scenario;
  switch (scenario) {
    case Scenario::VaeSAtK: p.k = k; break;
    case Scenario::VaeCAtKs: p.k_s = k; break;
    case Scenario::VaeCAtKsKaf: p.k_s = k; p.k_af = k; break;
  }
  return p;
}

void AugmentationPlan::validate() const {
  require(k >= 0 && k_s >= 0 && k_af >= 0, ErrorCode::InvalidConfig, "augmentation counts must be >= 0");
  const bool ok = (scenario == Scenario::VaeSAtK && k_s == 0 && k_af == 0) ||
                  (scenario == Scenario::VaeCAtKs && k == 0 && k_af == 0) ||
                  (scenario == Scenario::VaeCAtKsKaf && k == 0);
  require(ok, ErrorCode::InvalidConfig, "plan sets a count its scenario does not use");
}

namespace {

RecordEntry absolute(const DatasetManifest& m, const RecordEntry& e) {
  RecordEntry out = e;
  out.file_path = std::filesystem::absolute(m.resolve(e));
  return out;
}

std::vector<const RecordEntry*> take(const DatasetManifest& synthetic, RhythmClass c, int n,
                                     const std::string& what) {
  std::vector<const RecordEntry*> out;
  for (const auto& e : synthetic.records) {
    if (static_cast<int>(out.size()) == n) break;
    if (e.rhythm == c) out.push_back(&e);
  }
  if (static_cast<int>(out.size()) < n)
    fail(ErrorCode::InsufficientSynthetic, what + ": plan needs " + std::to_string(n) + " " +
                                               std::string(to_string(c)) + " records, synthetic set has " +
                                               std::to_string(out.size()));
  return out;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

DatasetManifest build_training_mix(const DatasetManifest& real, const DatasetManifest& synthetic,
                                   const AugmentationPlan& plan, std::uint64_t seed) {
  plan.validate();
  std::vector<RecordEntry> train;
  for (const auto* e : real.in_split(Split::Train)) train.push_back(absolute(real, *e));
  const std::string what(to_string(plan.scenario));
  std::vector<const RecordEntry*> extra;
  if (plan.k > 0) extra = take(synthetic, RhythmClass::Sinus, plan.k, what);
  if (plan.k_s > 0) extra = take(synthetic, RhythmClass::Sinus, plan.k_s, what);
  if (plan.k_af > 0) {
    const auto af = take(synthetic, RhythmClass::AF, plan.k_af, what);
    extra.insert(extra.end(), af.begin(), af.end());
  }
  for (const auto* e : extra) {
    RecordEntry r = absolute(synthetic, *e);
    r.split = Split::Train;
    train.push_back(std::move(r));
  }
  std::mt19937_64 rng(seed);
  std::shuffle(train.begin(), train.end(), rng);

  DatasetManifest mix;
  mix.records = std::move(train);
  for (Split s : {Split::Val, Split::Test})
    for (const auto* e : real.in_split(s)) mix.records.push_back(absolute(real, *e));
  check_no_leakage(mix);
  return mix;
}

void check_no_leakage(const DatasetManifest& mix) {
  std::set<std::string> train, held_out;
  for (const auto& e : mix.records) {
    if (e.split == Split::Train) {
      if (!train.insert(e.record_id).second) fail(ErrorCode::Leakage, "duplicate training record " + e.record_id);
    } else if (e.split == Split::Val || e.split == Split::Test) {
      if (e.record_id.rfind("syn", 0) == 0) fail(ErrorCode::Leakage, "synthetic record " + e.record_id + " in an evaluation split");
      held_out.insert(e.record_id);
    }
  }
  for (const auto& id : train)
    if (held_out.count(id)) fail(ErrorCode::Leakage, "record " + id + " is both training and held-out");
}

void ReconConfig::validate() const {
  require(hidden > 0 && kernel > 0 && kernel % 2 == 1, ErrorCode::InvalidConfig, "bad reconstruction net geometry");
  require(epochs > 0 && batch_size > 0 && lr > 0.0, ErrorCode::InvalidConfig, "bad reconstruction training settings");
}

ReconNet::ReconNet(int samples, int leads, int sites, const ReconConfig& c)
    : samples_(samples), leads_(leads), sites_(sites), net_({leads, samples, 1}, "recon") {
  c.validate();
  require(samples % 2 == 0, ErrorCode::ShapeMismatch, "reconstruction net needs an even sample count");
  const int k = c.kernel, h = c.hidden;
  net_.add(nn::Conv2d{leads, h, k, 1, k / 2, 0});
  net_.add(nn::LeakyRelu{0.2});
  net_.add(nn::MaxPool2d{2, 1});
  net_.add(nn::Conv2d{h, h, k, 1, k / 2, 0});
  net_.add(nn::LeakyRelu{0.2});
  net_.add(nn::ConvTranspose2d{h, h, 4, 1, 2, 1, 1, 0});
  net_.add(nn::LeakyRelu{0.2});
  net_.add(nn::Conv2d{h, sites, k, 1, k / 2, 0});
  net_.add(nn::Tanh{});
  params_.assign(net_.param_count(), 0.0);
  nn::Rng rng(c.seed);
  net_.init(params_, rng);
}

nn::Tensor ReconNet::to_input(const Matrix& bspm) const {
  require(bspm.rows() == samples_ && bspm.cols() == leads_, ErrorCode::ShapeMismatch, "BSPM shape mismatch");
  nn::Tensor t = nn::Tensor::zeros(net_.input_shape());
  for (int l = 0; l < leads_; ++l)
    for (int s = 0; s < samples_; ++s) t.data[static_cast<std::size_t>(l) * samples_ + s] = bspm(s, l);
  return t;
}

Matrix ReconNet::predict(const Matrix& bspm) const {
  const nn::Tensor y = net_.infer(to_input(bspm), params_);
  Matrix out(samples_, sites_);
  for (int n = 0; n < sites_; ++n)
    for (int s = 0; s < samples_; ++s) out(s, n) = y.data[static_cast<std::size_t>(n) * samples_ + s];
  return out;
}

double ReconNet::loss_and_grad(const Matrix& bspm, const Matrix& egm, std::span<double> grad) const {
  require(egm.rows() == samples_ && egm.cols() == sites_, ErrorCode::ShapeMismatch, "EGM shape mismatch");
  const auto acts = net_.forward(to_input(bspm), params_);
  const nn::Tensor& y = acts.back();
  nn::Tensor g = nn::Tensor::zeros(y.shape);
  const double scale = 1.0 / static_cast<double>(egm.size());
  double loss = 0.0;
  for (int n = 0; n < sites_; ++n)
    for (int s = 0; s < samples_; ++s) {
      const std::size_t i = static_cast<std::size_t>(n) * samples_ + s;
      const double d = y.data[i] - egm(s, n);
      loss += d * d;
      g.data[i] = 2.0 * d * scale;
    }
  net_.backward(acts, g, params_, grad);
  return loss * scale;
}

namespace {

struct Pair {
  Matrix bspm;
  Matrix egm;
  RhythmClass rhythm;
};

std::vector<Pair> project_split(const DatasetManifest& mix, Split split, const ForwardModel& fm, std::uint64_t seed) {
  std::vector<Pair> out;
  for (const auto* e : mix.in_split(split)) {
    const EgmTensor x = load_record(mix.resolve(*e));
    out.push_back({project_to_bspm(x, fm, fnv1a(e->record_id) ^ seed), x.values, e->rhythm});
  }
  return out;
}

RunMetrics summarize(const std::vector<double>& corr, const std::vector<double>& rmse) {
  auto ms = [](const std::vector<double>& v) {
    double m = 0.0, s = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    for (double x : v) s += (x - m) * (x - m);
    return std::pair{m, std::sqrt(s / static_cast<double>(v.size()))};
  };
  RunMetrics r;
  std::tie(r.corr_mean, r.corr_std) = ms(corr);
  std::tie(r.rmse_mean, r.rmse_std) = ms(rmse);
  return r;
}

double mean_mse(const ReconNet& net, const std::vector<Pair>& set) {
  double acc = 0.0;
  for (const auto& p : set) acc += (net.predict(p.bspm) - p.egm).squaredNorm() / static_cast<double>(p.egm.size());
  return acc / static_cast<double>(set.size());
}

}  // namespace

ScenarioRow run_plan(const DatasetManifest& mix, const AugmentationPlan& plan, const ForwardModel& fm,
                     const ReconConfig& config) {
  config.validate();
  check_no_leakage(mix);
  const auto train = project_split(mix, Split::Train, fm, config.seed);
  const auto val = project_split(mix, Split::Val, fm, config.seed);
  const auto test = project_split(mix, Split::Test, fm, config.seed);
  require(!train.empty() && !val.empty() && !test.empty(), ErrorCode::EmptySplit,
          "training mix needs train, val and test records");

  const int samples = static_cast<int>(train[0].egm.rows());
  ReconNet net(samples, fm.leads(), fm.sites(), config);
  Adam adam(net.parameters().size(), AdamConfig{config.lr});
  std::vector<double> best(net.parameters().begin(), net.parameters().end());
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.seed ^ 0xd0c5ULL);
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), train.size());
  const std::size_t n_params = net.parameters().size();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      std::vector<std::vector<double>> per(stop - start, std::vector<double>(n_params, 0.0));
#pragma omp parallel for schedule(dynamic)
      for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(stop - start); ++j) {
        const auto& p = train[order[start + static_cast<std::size_t>(j)]];
        net.loss_and_grad(p.bspm, p.egm, per[j]);
      }
      std::vector<double> grad(n_params, 0.0);
      for (const auto& g : per)
        for (std::size_t i = 0; i < n_params; ++i) grad[i] += g[i];
      for (auto& g : grad) g /= static_cast<double>(stop - start);
      adam.step(net.parameters(), grad);
    }
    const double v = mean_mse(net, val);
    if (v < best_val) {
      best_val = v;
      best.assign(net.parameters().begin(), net.parameters().end());
    }
  }
  std::copy(best.begin(), best.end(), net.parameters().begin());

  std::vector<double> corr, rmse, corr_c[2], rmse_c[2];
  for (const auto& p : test) {
    const Matrix y = net.predict(p.bspm);
    const double c = pearson(p.egm, y);
    const double r = std::sqrt((y - p.egm).squaredNorm() / static_cast<double>(p.egm.size()));
    corr.push_back(c);
    rmse.push_back(r);
    corr_c[static_cast<int>(p.rhythm)].push_back(c);
    rmse_c[static_cast<int>(p.rhythm)].push_back(r);
  }
  ScenarioRow row;
  row.scenario = plan.scenario;
  row.k = std::max({plan.k, plan.k_s, plan.k_af});
  row.n_train = train.size();
  row.n_synthetic = static_cast<std::size_t>(plan.synthetic_count());
  row.overall = summarize(corr, rmse);
  if (!corr_c[0].empty()) row.sinus = summarize(corr_c[0], rmse_c[0]);
  if (!corr_c[1].empty()) row.af = summarize(corr_c[1], rmse_c[1]);
  return row;
}

DownstreamReport run_scenarios(const DatasetManifest& real, const std::optional<DatasetManifest>& synt_s,
                               const std::optional<DatasetManifest>& synt_c, const ForwardModel& fm,
                               const ReconConfig& config, std::span<const int> k_grid) {
  DownstreamReport report;
  std::optional<ScenarioRow> baseline;
  const DatasetManifest empty;
  for (Scenario s : kAllScenarios) {
    const auto& synth = s == Scenario::VaeSAtK ? synt_s : synt_c;
    if (!synth) continue;
    for (int k : k_grid) {
      if (k == 0) {
        if (!baseline) {
          const auto plan = AugmentationPlan::make(Scenario::VaeSAtK, 0);
          baseline = run_plan(build_training_mix(real, empty, plan, config.seed), plan, fm, config);
        }
        ScenarioRow row = *baseline;
        row.scenario = s;
        report.rows.push_back(row);
        continue;
      }
      const auto plan = AugmentationPlan::make(s, k);
      report.rows.push_back(run_plan(build_training_mix(real, *synth, plan, config.seed), plan, fm, config));
    }
  }
  return report;
}

void write_downstream_report(const DownstreamReport& report, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorCode::IoFailure, "cannot write " + path.string());
  os << "scenario,k,n_train,n_synthetic,corr_mean,corr_std,rmse_mean,rmse_std\n";
  for (const auto& r : report.rows)
    os << to_string(r.scenario) << ',' << r.k << ',' << r.n_train << ',' << r.n_synthetic << ','
       << format_double(r.overall.corr_mean) << ',' << format_double(r.overall.corr_std) << ','
       << format_double(r.overall.rmse_mean) << ',' << format_double(r.overall.rmse_std) << '\n';
}

void write_per_class_report(const DownstreamReport& report, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorCode::IoFailure, "cannot write " + path.string());
  os << "scenario,k,class,corr_mean,corr_std,rmse_mean,rmse_std\n";
  for (const auto& r : report.rows)
    for (RhythmClass c : kAllRhythms) {
      const auto& m = c == RhythmClass::Sinus ? r.sinus : r.af;
      if (!m) continue;
      os << to_string(r.scenario) << ',' << r.k << ',' << to_string(c) << ',' << format_double(m->corr_mean) << ','
         << format_double(m->corr_std) << ',' << format_double(m->rmse_mean) << ',' << format_double(m->rmse_std)
         << '\n';
    }
}

}  // namespace egmsynth
