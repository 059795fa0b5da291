#include "bmode/reconstruct.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>

#include <fftw3.h>

namespace bmode {

namespace {

struct FftwBuffer {
  explicit FftwBuffer(std::size_t n)
      : data(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n))) {
    if (!data) fail(ErrorKind::kRuntime, "fftw_malloc failed");
  }
  ~FftwBuffer() { fftw_free(data); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;

  fftw_complex* data;
};

struct PlanPair {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

// The FFTW planner is not thread-safe; plans are created once per length
// under a lock and then executed concurrently on private buffers.
PlanPair plans_for(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, PlanPair> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  FftwBuffer a(n), b(n);
  PlanPair p;
  const int len = static_cast<int>(n);
  p.forward = fftw_plan_dft_1d(len, a.data, b.data, FFTW_FORWARD, FFTW_ESTIMATE);
  p.inverse = fftw_plan_dft_1d(len, b.data, a.data, FFTW_BACKWARD, FFTW_ESTIMATE);
  if (!p.forward || !p.inverse) fail(ErrorKind::kRuntime, "FFTW plan creation failed");
  cache.emplace(n, p);
  return p;
}

void envelope_into(std::span<const double> line, std::span<double> out) {
  const std::size_t n = line.size();
  const PlanPair plans = plans_for(n);
  FftwBuffer time(n), freq(n);
  for (std::size_t i = 0; i < n; ++i) {
    time.data[i][0] = line[i];
    time.data[i][1] = 0.0;
  }
  fftw_execute_dft(plans.forward, time.data, freq.data);

  // One-sided spectrum: DC and Nyquist x1, positive bins x2, negative bins 0.
  const std::size_t half = n / 2;
  const std::size_t last_doubled = (n % 2 == 0) ? half - 1 : half;
  for (std::size_t k = 1; k <= last_doubled; ++k) {
    freq.data[k][0] *= 2.0;
    freq.data[k][1] *= 2.0;
  }
  for (std::size_t k = last_doubled + 1 + (n % 2 == 0 ? 1 : 0); k < n; ++k) {
    freq.data[k][0] = 0.0;
    freq.data[k][1] = 0.0;
  }

  fftw_execute_dft(plans.inverse, freq.data, time.data);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::hypot(time.data[i][0], time.data[i][1]) * scale;
  }
}

}  // namespace

void CompressionConfig::validate() const {
  require(threshold_db > 0 && std::isfinite(threshold_db), "threshold_db must be positive");
  require(!a_max_override || (*a_max_override > 0 && std::isfinite(*a_max_override)),
          "a_max_override must be positive");
}

std::vector<double> analytic_envelope(std::span<const double> line) {
  require(line.size() >= 2, "analytic_envelope needs at least two samples");
  for (double v : line) require(std::isfinite(v), "analytic_envelope: non-finite sample");
  std::vector<double> out(line.size());
  envelope_into(line, out);
  return out;
}

Grid<double> frame_envelope(const RfFrame& frame) {
  const std::size_t rows = frame.rows(), cols = frame.cols();
  require(rows >= 2, "frame too short for envelope detection");
  for (double v : frame.samples.data()) require(std::isfinite(v), "frame contains non-finite samples");
  Grid<double> env(rows, cols);
  std::vector<double> column(rows), column_env(rows);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) column[r] = frame.samples(r, c);
    envelope_into(column, column_env);
    for (std::size_t r = 0; r < rows; ++r) env(r, c) = column_env[r];
  }
  return env;
}

double log_compress(double amplitude, double a_max) {
  require(a_max > 0, "log_compress: a_max must be positive");
  if (amplitude <= 0.0) return kSilentDb;
  return 20.0 * std::log10(amplitude / a_max);
}

std::uint8_t quantize(double db_value, double threshold_db) {
  require(threshold_db > 0, "quantize: threshold must be positive");
  if (!(db_value > -threshold_db)) return 0;  // also catches kSilentDb
  const double level = std::round(255.0 * (1.0 + db_value / threshold_db));
  if (level >= 255.0) return 255;
  if (level <= 0.0) return 0;
  return static_cast<std::uint8_t>(level);
}

Grid<std::uint8_t> compress_envelope(const Grid<double>& envelope, double a_max, double threshold_db) {
  require(a_max > 0, "degenerate input: maximum amplitude is zero");
  Grid<std::uint8_t> out(envelope.rows(), envelope.cols());
  for (std::size_t i = 0; i < envelope.size(); ++i) {
    out.data()[i] = quantize(log_compress(envelope.data()[i], a_max), threshold_db);
  }
  return out;
}

namespace {

double max_of(const Grid<double>& g) {
  double m = 0.0;
  for (double v : g.data()) m = std::max(m, v);
  return m;
}

}  // namespace

BModeImage reconstruct_bmode(const RfFrame& frame, const CompressionConfig& config,
                             std::optional<double> dataset_a_max) {
  config.validate();
  frame.validate();
  const Grid<double> env = frame_envelope(frame);
  double a_max;
  if (config.a_max_override) {
    a_max = *config.a_max_override;
  } else if (config.a_max_scope == AmaxScope::kPerDataset) {
    require(dataset_a_max.has_value(), "per-dataset A_max scope needs the dataset maximum");
    a_max = *dataset_a_max;
  } else {
    a_max = max_of(env);
  }
  if (!(a_max > 0)) {
    fail(ErrorKind::kDegenerate, "degenerate input: frame '" + frame.scan_id + "' is all zero");
  }
  BModeImage image;
  image.pixels = compress_envelope(env, a_max, config.threshold_db);
  image.geometry = frame.geometry;
  image.threshold_db = config.threshold_db;
  image.scan_id = frame.scan_id;
  return image;
}

double dataset_a_max(const Dataset& dataset) {
  double m = 0.0;
  for (const auto& lesion : dataset.lesions) {
    for (const auto& scan : lesion.scans) m = std::max(m, max_of(frame_envelope(scan.frame)));
  }
  return m;
}

}  // namespace bmode
