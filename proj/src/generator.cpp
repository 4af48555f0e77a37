#include "egmsynth/generator.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>

#include "egmsynth/csv.hpp"
#include "egmsynth/errors.hpp"
#include "egmsynth/kernels.hpp"

namespace egmsynth {

std::string_view to_string(FitMode mode) { return mode == FitMode::Full ? "full" : "diagonal"; }

FitMode parse_fit_mode(std::string_view text) {
  if (text == "diagonal") return FitMode::Diagonal;
  if (text == "full") return FitMode::Full;
  fail(ErrorCode::ParseError, "unknown fit mode '" + std::string(text) + "'");
}

Matrix AggregatedPosterior::covariance_matrix() const {
  if (mode == FitMode::Full) return covariance;
  return variance.asDiagonal();
}

AggregatedPosterior fit_aggregated_posterior(std::span<const Vector> means, FitMode mode) {
  require(!means.empty(), ErrorCode::EmptyTrainSet, "no encoded means to fit");
  const Eigen::Index d = means.front().size();
  Matrix m(static_cast<Eigen::Index>(means.size()), d);
  for (std::size_t i = 0; i < means.size(); ++i) {
    require(means[i].size() == d, ErrorCode::ShapeMismatch, "latent length mismatch");
    m.row(static_cast<Eigen::Index>(i)) = means[i].transpose();
  }
  AggregatedPosterior out;
  out.mode = mode;
  out.mean = m.colwise().mean().transpose();
  const Matrix centered = m.rowwise() - out.mean.transpose();
  const double n = static_cast<double>(means.size());
  out.variance = centered.colwise().squaredNorm().transpose() / n;
  if (mode == FitMode::Full) {
    out.covariance = centered.transpose() * centered / n;
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
    out.covariance.diagonal() = out.variance;
  }
  return out;
}

AggregatedPosterior fit_aggregated_posterior(const Vae& model, std::span<const EgmTensor> train_set,
                                             FitMode mode) {
  require(!train_set.empty(), ErrorCode::EmptyTrainSet, "training set is empty");
  std::vector<Vector> means(train_set.size());
  const bool cond = model.config().conditional;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(train_set.size()); ++i) {
    const auto label = cond ? std::optional(train_set[i].rhythm) : std::nullopt;
    means[i] = model.encode(train_set[i], label).mean;
  }
  return fit_aggregated_posterior(means, mode);
}

std::array<AggregatedPosterior, 2> fit_class_posteriors(const Vae& model, std::span<const EgmTensor> train_set,
                                                        FitMode mode) {
  std::array<AggregatedPosterior, 2> out;
  for (RhythmClass c : kAllRhythms) {
    std::vector<EgmTensor> subset;
    for (const auto& x : train_set)
      if (x.rhythm == c) subset.push_back(x);
    if (subset.empty())
      fail(ErrorCode::EmptyTrainSet, "no training records of class " + std::string(to_string(c)));
    out[static_cast<std::size_t>(c)] = fit_aggregated_posterior(model, subset, mode);
  }
  return out;
}

std::vector<Vector> sample_latents(const AggregatedPosterior& p, int n, std::uint64_t seed) {
  require(n >= 1, ErrorCode::InvalidConfig, "n must be >= 1");
  const Eigen::Index d = p.mean.size();
  Matrix factor;  // z = mean + factor * eps
  if (p.mode == FitMode::Full) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p.covariance);
    const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    factor = eig.eigenvectors() * root.asDiagonal();
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(n));
  Vector eps(d);
  for (int i = 0; i < n; ++i) {
    for (auto& e : eps) e = gauss(rng);
    Vector z = p.mean;
    if (p.mode == FitMode::Full) {
      z += factor * eps;
    } else {
      for (Eigen::Index k = 0; k < d; ++k)
        if (p.variance[k] > 0.0) z[k] += std::sqrt(p.variance[k]) * eps[k];
    }
    out.push_back(std::move(z));
  }
  return out;
}

std::vector<EgmTensor> sample_and_decode(const Vae& model, const AggregatedPosterior& posterior, int n,
                                         std::optional<RhythmClass> label, std::uint64_t seed) {
  require(posterior.dim() == model.config().latent_dim, ErrorCode::ShapeMismatch,
          "posterior dimension differs from the model latent");
  if (model.config().conditional && !label) fail(ErrorCode::MissingClass, "conditional model needs a class");
  if (!model.config().conditional && label) fail(ErrorCode::NotConditional, "model is not class-conditioned");
  const auto z = sample_latents(posterior, n, seed);
  std::vector<EgmTensor> out(z.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(z.size()); ++i) out[i] = model.decode(z[i], label);
  return out;
}

CurationResult curate(std::vector<EgmTensor> candidates, std::span<const EgmTensor> references,
                      std::size_t n_keep) {
  require(!candidates.empty() && !references.empty(), ErrorCode::EmptySet, "curation needs candidates and references");
  require(n_keep <= candidates.size(), ErrorCode::InvalidConfig, "n_keep exceeds candidate count");
  const Matrix rmse = kernels::pairwise_rmse(candidates, references);
  CurationResult r;
  r.n_generated = candidates.size();
  r.n_selected = n_keep;
  r.scores.resize(candidates.size());
  r.best_reference.resize(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    Eigen::Index j = 0;
    r.scores[i] = rmse.row(static_cast<Eigen::Index>(i)).minCoeff(&j);
    r.best_reference[i] = static_cast<std::size_t>(j);
  }
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return r.scores[a] < r.scores[b]; });
  r.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_keep));
  r.candidates = std::move(candidates);
  return r;
}

namespace {

std::uint64_t class_seed(std::uint64_t seed, RhythmClass c) {
  return seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(c) + 1;
}

}  // namespace

SyntheticDataset build_synthetic_dataset(const Vae& model, const AggregatedPosterior& posterior,
                                         const GenerationSpec& spec, std::span<const EgmTensor> references,
                                         std::uint64_t seed, const std::filesystem::path& out_dir) {
  return build_synthetic_dataset(model, std::span<const AggregatedPosterior>(&posterior, 1), spec, references, seed,
                                 out_dir);
}

SyntheticDataset build_synthetic_dataset(const Vae& model, std::span<const AggregatedPosterior> posteriors,
                                         const GenerationSpec& spec, std::span<const EgmTensor> references,
                                         std::uint64_t seed, const std::filesystem::path& out_dir) {
  require(posteriors.size() == 1 || posteriors.size() == 2, ErrorCode::InvalidConfig,
          "need one shared posterior or one per class");
  require(spec.n_generate >= 1 && spec.n_keep >= 0 && spec.n_keep <= spec.n_generate, ErrorCode::InvalidConfig,
          "need 0 <= n_keep <= n_generate and n_generate >= 1");
  const bool mode_c = spec.mode == SynthMode::C;
  if (mode_c && !model.config().conditional) fail(ErrorCode::NotConditional, "mode C needs a conditional model");
  if (!mode_c && model.config().conditional) fail(ErrorCode::InvalidConfig, "mode S needs an unconditional model");

  std::vector<RhythmClass> classes;
  if (mode_c) classes.assign(kAllRhythms.begin(), kAllRhythms.end());
  else classes.push_back(RhythmClass::Sinus);

  SyntheticDataset out;
  std::filesystem::create_directories(out_dir / "records");
  out.manifest.base_dir = out_dir;
  std::ofstream report(out_dir / "curation_report.csv", std::ios::trunc);
  if (!report) fail(ErrorCode::IoFailure, "cannot write " + (out_dir / "curation_report.csv").string());
  report << "class,candidate,score,selected,reference\n";

  for (RhythmClass c : classes) {
    std::vector<EgmTensor> refs;
    std::vector<std::size_t> ref_index;
    for (std::size_t i = 0; i < references.size(); ++i)
      if (!mode_c || references[i].rhythm == c) {
        refs.push_back(references[i]);
        ref_index.push_back(i);
      }
    if (refs.empty()) fail(ErrorCode::MissingClass, "no references of class " + std::string(to_string(c)));

    const auto label = mode_c ? std::optional(c) : std::nullopt;
    const auto& posterior = posteriors.size() == 2 ? posteriors[static_cast<std::size_t>(c)] : posteriors[0];
    auto cand = sample_and_decode(model, posterior, spec.n_generate, label, mode_c ? class_seed(seed, c) : seed);
    for (auto& x : cand) x.rhythm = c;
    CurationResult cur = curate(std::move(cand), refs, static_cast<std::size_t>(spec.n_keep));
    for (auto& b : cur.best_reference) b = ref_index[b];  // index into `references`

    std::vector<bool> chosen(cur.n_generated, false);
    for (std::size_t s : cur.selected) chosen[s] = true;
    for (std::size_t i = 0; i < cur.n_generated; ++i)
      report << to_string(c) << ',' << i << ',' << format_double(cur.scores[i]) << ',' << (chosen[i] ? 1 : 0) << ','
             << cur.best_reference[i] << '\n';

    for (std::size_t rank = 0; rank < cur.selected.size(); ++rank) {
      const EgmTensor& x = cur.candidates[cur.selected[rank]];
      char id[64];
      if (mode_c) std::snprintf(id, sizeof id, "synC-%s-%04zu", std::string(to_string(c)).c_str(), rank);
      else std::snprintf(id, sizeof id, "synS-%04zu", rank);
      RecordEntry e;
      e.record_id = id;
      e.rhythm = c;
      e.file_path = std::filesystem::path("records") / (std::string(id) + ".egm");
      e.samples = x.samples();
      e.channels = x.channels();
      e.sample_rate_hz = x.sample_rate_hz;
      e.split = Split::Train;
      save_record(x, out_dir / e.file_path);
      out.manifest.records.push_back(std::move(e));
    }
    out.curations.emplace_back(c, std::move(cur));
  }
  save_manifest(out.manifest, out_dir / "manifest.tsv");
  return out;
}

}  // namespace egmsynth
