#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "egmsynth/vae.hpp"

namespace egmsynth {

enum class FitMode : std::uint8_t { Diagonal, Full };
std::string_view to_string(FitMode mode);
FitMode parse_fit_mode(std::string_view text);

/// Gaussian over encoded training means.
struct AggregatedPosterior {
  Vector mean;
  Vector variance;    // diagonal mode
  Matrix covariance;  // full mode only, D x D
  FitMode mode = FitMode::Diagonal;

  int dim() const { return static_cast<int>(mean.size()); }
  /// D x D covariance in either mode.
  Matrix covariance_matrix() const;
};

/// Population (divide-by-n) moments of the given means.
AggregatedPosterior fit_aggregated_posterior(std::span<const Vector> means, FitMode mode = FitMode::Diagonal);
AggregatedPosterior fit_aggregated_posterior(const Vae& model, std::span<const EgmTensor> train_set,
                                             FitMode mode = FitMode::Diagonal);

/// One fit per rhythm class over same-class training records, indexed by class.
std::array<AggregatedPosterior, 2> fit_class_posteriors(const Vae& model, std::span<const EgmTensor> train_set,
                                                        FitMode mode = FitMode::Diagonal);

/// n draws from N(mean, covariance); deterministic given seed.
std::vector<Vector> sample_latents(const AggregatedPosterior& posterior, int n, std::uint64_t seed);

std::vector<EgmTensor> sample_and_decode(const Vae& model, const AggregatedPosterior& posterior, int n,
                                         std::optional<RhythmClass> label, std::uint64_t seed);

struct CurationResult {
  std::vector<EgmTensor> candidates;
  std::vector<double> scores;              // min RMSE over references
  std::vector<std::size_t> best_reference; // argmin reference per candidate
  std::vector<std::size_t> selected;       // ascending score, ties by index
  std::size_t n_generated = 0;
  std::size_t n_selected = 0;
};

CurationResult curate(std::vector<EgmTensor> candidates, std::span<const EgmTensor> references,
                      std::size_t n_keep);

enum class SynthMode : std::uint8_t { S, C };

struct GenerationSpec {
  SynthMode mode = SynthMode::S;
  int n_generate = 200;
  int n_keep = 25;
};

struct SyntheticDataset {
  DatasetManifest manifest;
  /// One per class drawn; best_reference indexes the full reference list.
  std::vector<std::pair<RhythmClass, CurationResult>> curations;
};

/// Samples, decodes and curates. Mode S draws unlabeled (sinus) signals and
/// curates against every reference; mode C draws n_generate per class and
/// curates against same-class references. Writes records, manifest.tsv and
/// curation_report.csv under out_dir. `posteriors` holds either one shared
/// fit or one per class (indexed by class).
SyntheticDataset build_synthetic_dataset(const Vae& model, std::span<const AggregatedPosterior> posteriors,
                                         const GenerationSpec& spec, std::span<const EgmTensor> references,
                                         std::uint64_t seed, const std::filesystem::path& out_dir);
SyntheticDataset build_synthetic_dataset(const Vae& model, const AggregatedPosterior& posterior,
                                         const GenerationSpec& spec, std::span<const EgmTensor> references,
                                         std::uint64_t seed, const std::filesystem::path& out_dir);

}  // namespace egmsynth
