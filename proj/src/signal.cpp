#include "egmsynth/signal.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "egmsynth/csv.hpp"
#include "egmsynth/errors.hpp"

namespace egmsynth {

std::string_view to_string(RhythmClass rhythm) {
  return rhythm == RhythmClass::Sinus ? "Sinus" : "AF";
}

RhythmClass parse_rhythm(std::string_view text) {
  if (text == "Sinus" || text == "sinus" || text == "S") return RhythmClass::Sinus;
  if (text == "AF" || text == "af") return RhythmClass::AF;
  fail(ErrorCode::ParseError, "unknown rhythm class '" + std::string(text) + "'");
}

std::array<double, 2> one_hot(RhythmClass rhythm) {
  return rhythm == RhythmClass::Sinus ? std::array<double, 2>{1.0, 0.0}
                                      : std::array<double, 2>{0.0, 1.0};
}

EgmTensor normalize(const EgmTensor& signal) {
  require(signal.values.size() > 0, ErrorCode::ShapeMismatch, "empty signal");
  const double lo = signal.values.minCoeff();
  const double hi = signal.values.maxCoeff();
  if (!(hi > lo)) fail(ErrorCode::ConstantSignal, "global max equals global min");
  if (lo == -1.0 && hi == 1.0) return signal;
  EgmTensor out = signal;
  const double scale = 2.0 / (hi - lo);
  out.values = ((signal.values.array() - lo) * scale - 1.0).matrix();
  // pin the endpoints against rounding in the affine map
  for (Eigen::Index i = 0; i < out.values.size(); ++i) {
    double& v = out.values.data()[i];
    const double src = signal.values.data()[i];
    if (src == lo) v = -1.0;
    else if (src == hi) v = 1.0;
    else v = std::clamp(v, -1.0, 1.0);
  }
  return out;
}

namespace {

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

double blackman(double u) {  // u in [-1, 1]
  const double a = std::numbers::pi * (u + 1.0);
  return 0.42 - 0.5 * std::cos(a) + 0.08 * std::cos(2.0 * a);
}

constexpr double kZeroCrossings = 8.0;

}  // namespace

EgmTensor resample(const EgmTensor& signal, double target_hz) {
  require(target_hz > 0.0 && std::isfinite(target_hz), ErrorCode::InvalidConfig,
          "target rate must be positive");
  require(signal.sample_rate_hz > 0.0, ErrorCode::InvalidConfig, "source rate must be positive");
  if (target_hz > signal.sample_rate_hz)
    fail(ErrorCode::UpsampleUnsupported, "target rate exceeds source rate");
  if (target_hz == signal.sample_rate_hz) return signal;

  const int in_len = signal.samples();
  const double ratio = signal.sample_rate_hz / target_hz;
  const int out_len = static_cast<int>(std::lround(in_len / ratio));
  require(out_len >= 1, ErrorCode::SignalTooShort, "resampled signal would be empty");

  const double cutoff = 0.45 / ratio;  // 0.9 * target Nyquist, in cycles per input sample
  const double half_width = kZeroCrossings / (2.0 * cutoff);

  EgmTensor out;
  out.sample_rate_hz = target_hz;
  out.rhythm = signal.rhythm;
  out.values = Matrix::Zero(out_len, signal.channels());

#pragma omp parallel for schedule(static)
  for (int k = 0; k < out_len; ++k) {
    const double center = k * ratio;
    const int first = std::max(0, static_cast<int>(std::ceil(center - half_width)));
    const int last = std::min(in_len - 1, static_cast<int>(std::floor(center + half_width)));
    double weight_sum = 0.0;
    for (int n = first; n <= last; ++n) {
      const double u = center - n;
      const double w = sinc(2.0 * cutoff * u) * blackman(u / half_width);
      out.values.row(k) += w * signal.values.row(n);
      weight_sum += w;
    }
    out.values.row(k) /= weight_sum;
  }
  return out;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::Unassigned: break;
  }
  return "none";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "val") return Split::Val;
  if (text == "test") return Split::Test;
  if (text == "none") return Split::Unassigned;
  fail(ErrorCode::ParseError, "unknown split '" + std::string(text) + "'");
}

std::filesystem::path DatasetManifest::resolve(const RecordEntry& entry) const {
  if (entry.file_path.is_absolute() || base_dir.empty()) return entry.file_path;
  return base_dir / entry.file_path;
}

std::vector<const RecordEntry*> DatasetManifest::in_split(Split which) const {
  std::vector<const RecordEntry*> out;
  for (const auto& r : records)
    if (r.split == which) out.push_back(&r);
  return out;
}

const RecordEntry* DatasetManifest::find(std::string_view record_id) const {
  for (const auto& r : records)
    if (r.record_id == record_id) return &r;
  return nullptr;
}

std::size_t DatasetManifest::count(RhythmClass rhythm) const {
  return static_cast<std::size_t>(std::count_if(
      records.begin(), records.end(), [&](const RecordEntry& r) { return r.rhythm == rhythm; }));
}

namespace {

struct SplitSizes {
  int val = 0;
  int test = 0;
};

SplitSizes global_sizes(int n, const SplitFractions& f) {
  return {static_cast<int>(std::lround(n * f.val)), static_cast<int>(std::lround(n * f.test))};
}

// Largest-remainder apportionment of `total` over groups weighted by `counts`.
std::vector<int> apportion(int total, const std::vector<int>& counts) {
  const int n = std::accumulate(counts.begin(), counts.end(), 0);
  std::vector<int> share(counts.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t g = 0; g < counts.size(); ++g) {
    const double exact = static_cast<double>(total) * counts[g] / n;
    share[g] = static_cast<int>(std::floor(exact));
    assigned += share[g];
    remainders.emplace_back(exact - share[g], g);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total && i < remainders.size(); ++i, ++assigned)
    share[remainders[i].second] += 1;
  return share;
}

}  // namespace

DatasetManifest split(const DatasetManifest& manifest, std::uint64_t seed, bool stratify,
                      const SplitFractions& fractions) {
  const int n = static_cast<int>(manifest.records.size());
  require(n >= 10, ErrorCode::TooFewRecords, "split needs at least 10 records, got " + std::to_string(n));

  std::vector<std::vector<std::size_t>> groups;
  if (stratify) {
    for (RhythmClass c : kAllRhythms) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < manifest.records.size(); ++i)
        if (manifest.records[i].rhythm == c) idx.push_back(i);
      if (idx.empty()) continue;
      require(idx.size() >= 3, ErrorCode::TooFewRecords,
              "stratified split needs at least 3 records per class");
      groups.push_back(std::move(idx));
    }
  } else {
    groups.emplace_back(manifest.records.size());
    std::iota(groups[0].begin(), groups[0].end(), 0);
  }

  const SplitSizes total = global_sizes(n, fractions);
  std::vector<int> counts;
  for (const auto& g : groups) counts.push_back(static_cast<int>(g.size()));
  const std::vector<int> val_share = apportion(total.val, counts);
  const std::vector<int> test_share = apportion(total.test, counts);

  DatasetManifest out = manifest;
  std::mt19937_64 rng(seed);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto idx = groups[g];
    std::shuffle(idx.begin(), idx.end(), rng);
    const int n_test = test_share[g];
    const int n_val = val_share[g];
    require(n_test + n_val < static_cast<int>(idx.size()), ErrorCode::TooFewRecords,
            "class too small to keep a training record");
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const int rank = static_cast<int>(i);
      Split s = rank < n_test ? Split::Test : rank < n_test + n_val ? Split::Val : Split::Train;
      out.records[idx[i]].split = s;
    }
  }
  return out;
}

namespace {

void write_le_floats(std::ostream& os, const Matrix& values) {
  std::vector<float> buf(static_cast<std::size_t>(values.size()));
  for (Eigen::Index i = 0; i < values.size(); ++i) buf[i] = static_cast<float>(values.data()[i]);
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& f : buf) {
      auto u = std::bit_cast<std::uint32_t>(f);
      u = __builtin_bswap32(u);
      f = std::bit_cast<float>(u);
    }
  }
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

void read_le_floats(std::istream& is, Matrix& values) {
  std::vector<float> buf(static_cast<std::size_t>(values.size()));
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (is.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float)))
    fail(ErrorCode::IoFailure, "truncated record payload");
  for (std::size_t i = 0; i < buf.size(); ++i) {
    float f = buf[i];
    if constexpr (std::endian::native == std::endian::big)
      f = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(f)));
    values.data()[i] = f;
  }
}

}  // namespace

void save_record(const EgmTensor& signal, const std::filesystem::path& path) {
  require(signal.samples() > 0 && signal.channels() > 0, ErrorCode::ShapeMismatch, "empty record");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  os << "EGM1 " << signal.samples() << ' ' << signal.channels() << ' '
     << format_double(signal.sample_rate_hz) << ' ' << to_string(signal.rhythm) << '\n';
  write_le_floats(os, signal.values);
  if (!os) fail(ErrorCode::IoFailure, "write failed for " + path.string());
}

EgmTensor load_record(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::IoFailure, "cannot open " + path.string());
  std::string header;
  std::getline(is, header);
  const auto fields = split_fields(header, ' ');
  if (fields.size() != 5 || fields[0] != "EGM1")
    fail(ErrorCode::ParseError, "bad record header in " + path.string());
  EgmTensor s;
  const int t = std::stoi(fields[1]);
  const int n = std::stoi(fields[2]);
  require(t > 0 && n > 0, ErrorCode::ParseError, "non-positive record shape");
  s.sample_rate_hz = parse_double(fields[3]);
  s.rhythm = parse_rhythm(fields[4]);
  s.values.resize(t, n);
  read_le_floats(is, s.values);
  if (is.peek() != std::char_traits<char>::eof())
    fail(ErrorCode::ParseError, "trailing bytes in " + path.string());
  return s;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  os << "#record_id\trhythm\tfile_path\tT\tN\tsample_rate_hz\tsplit\n";
  for (const auto& r : manifest.records) {
    os << r.record_id << '\t' << to_string(r.rhythm) << '\t' << r.file_path.generic_string() << '\t'
       << r.samples << '\t' << r.channels << '\t' << format_double(r.sample_rate_hz) << '\t'
       << to_string(r.split) << '\n';
  }
  if (!os) fail(ErrorCode::IoFailure, "write failed for " + path.string());
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::IoFailure, "cannot open " + path.string());
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_fields(line, '\t');
    if (f.size() != 7) fail(ErrorCode::ParseError, "manifest line needs 7 fields: " + line);
    RecordEntry r;
    r.record_id = f[0];
    r.rhythm = parse_rhythm(f[1]);
    r.file_path = f[2];
    r.samples = std::stoi(f[3]);
    r.channels = std::stoi(f[4]);
    r.sample_rate_hz = parse_double(f[5]);
    r.split = parse_split(f[6]);
    m.records.push_back(std::move(r));
  }
  return m;
}

std::vector<EgmTensor> load_records(const DatasetManifest& manifest, Split which) {
  std::vector<EgmTensor> out;
  for (const RecordEntry* r : manifest.in_split(which)) {
    EgmTensor s = load_record(manifest.resolve(*r));
    require(s.samples() == r->samples && s.channels() == r->channels, ErrorCode::ShapeMismatch,
            "record " + r->record_id + " shape disagrees with manifest");
    s.rhythm = r->rhythm;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace egmsynth
