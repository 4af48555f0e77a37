#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace egmsynth {

/// Row-major so that one time sample across all channels is contiguous,
/// matching the on-disk (time-major) record layout.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class RhythmClass : std::uint8_t { Sinus = 0, AF = 1 };

inline constexpr int kNumRhythmClasses = 2;
inline constexpr std::array<RhythmClass, 2> kAllRhythms{RhythmClass::Sinus, RhythmClass::AF};

std::string_view to_string(RhythmClass rhythm);
RhythmClass parse_rhythm(std::string_view text);
/// Sinus -> (1, 0), AF -> (0, 1).
std::array<double, 2> one_hot(RhythmClass rhythm);

/// A (time x channels) electrogram segment.
struct EgmTensor {
  Matrix values;
  double sample_rate_hz = 0.0;
  RhythmClass rhythm = RhythmClass::Sinus;

  int samples() const { return static_cast<int>(values.rows()); }
  int channels() const { return static_cast<int>(values.cols()); }
};

/// Affine map of the global record range onto [-1, 1]. Throws ConstantSignal.
EgmTensor normalize(const EgmTensor& signal);

/// Band-limited decimation to `target_hz`. The anti-alias low-pass sits at
/// 0.9 of the target Nyquist and is applied as a symmetric (zero-phase)
/// windowed-sinc kernel evaluated at the output sample instants.
EgmTensor resample(const EgmTensor& signal, double target_hz);

enum class Split : std::uint8_t { Unassigned, Train, Val, Test };
std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct RecordEntry {
  std::string record_id;
  RhythmClass rhythm = RhythmClass::Sinus;
  std::filesystem::path file_path;  // relative to DatasetManifest::base_dir unless absolute
  int samples = 0;
  int channels = 0;
  double sample_rate_hz = 0.0;
  Split split = Split::Unassigned;
};

struct DatasetManifest {
  std::vector<RecordEntry> records;
  /// Directory that relative record paths resolve against. Not serialized.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const RecordEntry& entry) const;
  std::vector<const RecordEntry*> in_split(Split split) const;
  const RecordEntry* find(std::string_view record_id) const;
  std::size_t count(RhythmClass rhythm) const;
};

struct SplitFractions {
  double train = 0.75;
  double val = 0.15;
  double test = 0.10;
};

/// Seeded train/val/test assignment. Validation and test sizes are the
/// nearest integers to their fractions, train takes the remainder. With
/// `stratify`, per-class shares are apportioned by largest remainder so the
/// global sizes are unchanged and each class lands within one record of its
/// proportional share.
DatasetManifest split(const DatasetManifest& manifest, std::uint64_t seed, bool stratify,
                      const SplitFractions& fractions = {});

// On-disk formats.
void save_record(const EgmTensor& signal, const std::filesystem::path& path);
EgmTensor load_record(const std::filesystem::path& path);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

std::vector<EgmTensor> load_records(const DatasetManifest& manifest, Split split);

}  // namespace egmsynth
