#include "bmode/features.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bmode/rng.hpp"
#include "bytes.hpp"

#ifdef BMODE_HAVE_OPENCV_DNN
#include <opencv2/dnn.hpp>
#endif

namespace bmode {

namespace fs = std::filesystem;
using nlohmann::json;

void FeatureVector::validate() const {
  for (double v : values) {
    if (!std::isfinite(v)) {
      fail(ErrorKind::kRuntime, "extractor '" + extractor_id + "' produced a non-finite feature");
    }
  }
}

void ExtractorSpec::validate() const {
  require(!extractor_id.empty(), "extractor spec needs an id");
  require(kind != ExtractorKind::kPortableModel || model_path.has_value(),
          "portable-model extractor '" + extractor_id + "' requires model_path");
  require(expected_dim > 0, "extractor '" + extractor_id + "': expected_dim must be positive");
}

ExtractorSpec baseline_extractor_spec() {
  ExtractorSpec spec;
  spec.extractor_id = "baseline";
  spec.kind = ExtractorKind::kBaseline;
  spec.expected_dim = kBaselineDim;
  spec.preprocess = "baseline";
  spec.tap = "histogram/moments/gradient/projection descriptor";
  return spec;
}

ExtractorSpec load_model_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) fail(ErrorKind::kIo, "cannot open model manifest '" + manifest_path.string() + "'");
  ExtractorSpec spec;
  try {
    const json doc = json::parse(in);
    spec.extractor_id = doc.at("extractor_id").get<std::string>();
    spec.kind = ExtractorKind::kPortableModel;
    spec.input_size = doc.at("input_size").get<int>();
    spec.preprocess = doc.at("preprocess").get<std::string>();
    spec.expected_dim = doc.at("expected_dim").get<std::size_t>();
    spec.tap = doc.value("tap", std::string());
    const auto model_file = doc.value("model_file", spec.extractor_id + ".onnx");
    spec.model_path = manifest_path.parent_path() / model_file;
  } catch (const json::exception& e) {
    fail(ErrorKind::kInvalidInput,
         "malformed model manifest '" + manifest_path.string() + "': " + e.what());
  }
  spec.validate();
  return spec;
}

namespace {

constexpr std::size_t kThumb = 8;
constexpr std::size_t kThumbCells = kThumb * kThumb;

using ProjectionMatrix = std::array<std::array<double, kThumbCells>, kBaselineProjectionDim>;

const ProjectionMatrix& projection_matrix() {
  static const ProjectionMatrix matrix = [] {
    ProjectionMatrix m{};
    Rng rng(kBaselineProjectionSeed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(kThumbCells));
    for (auto& row : m) {
      for (auto& v : row) v = rng.normal() * scale;
    }
    return m;
  }();
  return matrix;
}

}  // namespace

FeatureVector baseline_extract(const Image3& input, double range_lo, double range_hi) {
  const Grid<double>& img = input.channels[0];
  const std::size_t n = img.rows();
  require(n == img.cols(), "baseline_extract: input must be square");
  require(n >= kThumb, "baseline_extract: input must be at least 8x8");
  require(range_hi > range_lo, "baseline_extract: empty value range");
  for (double v : img.data()) require(std::isfinite(v), "baseline_extract: non-finite input");

  const double count = static_cast<double>(img.size());
  const double span = range_hi - range_lo;
  FeatureVector out;
  out.extractor_id = "baseline";
  out.values.assign(kBaselineDim, 0.0);
  auto* f = out.values.data();

  for (double v : img.data()) {
    const double pos = (v - range_lo) / span * static_cast<double>(kBaselineHistogramBins);
    const auto bin = static_cast<std::ptrdiff_t>(std::floor(pos));
    f[std::clamp<std::ptrdiff_t>(bin, 0, kBaselineHistogramBins - 1)] += 1.0;
  }
  double entropy = 0.0;
  for (std::size_t b = 0; b < kBaselineHistogramBins; ++b) {
    f[b] /= count;
    if (f[b] > 0) entropy -= f[b] * std::log(f[b]);
  }

  double mean = 0.0;
  for (double v : img.data()) mean += v;
  mean /= count;
  const auto [lo_it, hi_it] = std::minmax_element(img.data().begin(), img.data().end());
  if (*lo_it == *hi_it) mean = *lo_it;
  double var = 0.0;
  for (double v : img.data()) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / count);
  double skew = 0.0;
  if (sd > 0) {
    for (double v : img.data()) {
      const double z = (v - mean) / sd;
      skew += z * z * z;
    }
    skew /= count;
  }

  double gradient = 0.0;
  if (n >= 3) {
    for (std::size_t r = 1; r + 1 < n; ++r) {
      for (std::size_t c = 1; c + 1 < n; ++c) {
        const double gx = 0.5 * (img(r, c + 1) - img(r, c - 1));
        const double gy = 0.5 * (img(r + 1, c) - img(r - 1, c));
        gradient += std::sqrt(gx * gx + gy * gy);
      }
    }
    gradient /= static_cast<double>((n - 2) * (n - 2));
  }

  f[32] = mean;
  f[33] = sd;
  f[34] = skew;
  f[35] = entropy;
  f[36] = gradient;

  constexpr std::array<double, 4> kQuantiles = {0.10, 0.25, 0.75, 0.90};
  for (std::size_t q = 0; q < kQuantiles.size(); ++q) {
    const double mark = range_lo + kQuantiles[q] * span;
    double below = 0.0;
    for (double v : img.data()) below += v < mark ? 1.0 : 0.0;
    f[37 + q] = below / count;
  }

  std::array<double, kThumbCells> thumb{};
  for (std::size_t br = 0; br < kThumb; ++br) {
    const std::size_t r0 = br * n / kThumb, r1 = (br + 1) * n / kThumb;
    for (std::size_t bc = 0; bc < kThumb; ++bc) {
      const std::size_t c0 = bc * n / kThumb, c1 = (bc + 1) * n / kThumb;
      double acc = 0.0;
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) acc += img(r, c);
      }
      thumb[br * kThumb + bc] = acc / static_cast<double>((r1 - r0) * (c1 - c0));
    }
  }
  const auto& proj = projection_matrix();
  for (std::size_t j = 0; j < kBaselineProjectionDim; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < kThumbCells; ++i) acc += proj[j][i] * thumb[i];
    f[41 + j] = acc;
  }
  return out;
}

namespace {

class BaselineExtractor final : public FeatureExtractor {
 public:
  explicit BaselineExtractor(ExtractorSpec spec) : spec_(std::move(spec)) {}

  FeatureVector extract(const Image3& input) const override {
    FeatureVector v = baseline_extract(input);
    v.extractor_id = spec_.extractor_id;
    return v;
  }
  const ExtractorSpec& spec() const override { return spec_; }

 private:
  ExtractorSpec spec_;
};

#ifdef BMODE_HAVE_OPENCV_DNN
// Sessions are not shared across concurrent calls: inference is serialized.
class PortableModelExtractor final : public FeatureExtractor {
 public:
  explicit PortableModelExtractor(ExtractorSpec spec) : spec_(std::move(spec)) {
    if (!fs::exists(*spec_.model_path)) {
      fail(ErrorKind::kIo, "model file missing: " + spec_.model_path->string());
    }
    try {
      net_ = cv::dnn::readNetFromONNX(spec_.model_path->string());
    } catch (const cv::Exception& e) {
      fail(ErrorKind::kRuntime, "cannot load model '" + spec_.model_path->string() + "': " + e.what());
    }
    if (net_.empty()) fail(ErrorKind::kRuntime, "model '" + spec_.model_path->string() + "' is empty");
    net_.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
    net_.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);
  }

  FeatureVector extract(const Image3& input) const override {
    const std::size_t n = input.size();
    if (spec_.input_size > 0 && n != static_cast<std::size_t>(spec_.input_size)) {
      fail(ErrorKind::kInvalidInput, "extractor '" + spec_.extractor_id + "' expects " +
                                         std::to_string(spec_.input_size) + "px input, got " +
                                         std::to_string(n));
    }
    const int shape[4] = {1, 3, static_cast<int>(n), static_cast<int>(n)};
    cv::Mat blob(4, shape, CV_32F);
    auto* dst = blob.ptr<float>();
    for (int ch = 0; ch < 3; ++ch) {
      for (double v : input.channels[ch].data()) *dst++ = static_cast<float>(v);
    }
    cv::Mat result;
    {
      std::lock_guard lock(mutex_);
      try {
        net_.setInput(blob);
        result = net_.forward().clone();
      } catch (const cv::Exception& e) {
        fail(ErrorKind::kRuntime, "inference failed for '" + spec_.extractor_id + "': " + e.what());
      }
    }
    if (result.total() != spec_.expected_dim) {
      fail(ErrorKind::kRuntime, "extractor '" + spec_.extractor_id + "' produced " +
                                    std::to_string(result.total()) + " values, expected " +
                                    std::to_string(spec_.expected_dim));
    }
    result = result.reshape(1, 1);
    result.convertTo(result, CV_64F);
    FeatureVector out;
    out.extractor_id = spec_.extractor_id;
    out.values.assign(result.ptr<double>(), result.ptr<double>() + result.total());
    out.validate();
    return out;
  }

  const ExtractorSpec& spec() const override { return spec_; }

 private:
  ExtractorSpec spec_;
  mutable std::mutex mutex_;
  mutable cv::dnn::Net net_;
};
#endif

}  // namespace

bool portable_runtime_available() noexcept {
#ifdef BMODE_HAVE_OPENCV_DNN
  return true;
#else
  return false;
#endif
}

std::unique_ptr<FeatureExtractor> make_extractor(const ExtractorSpec& spec) {
  spec.validate();
  if (spec.kind == ExtractorKind::kBaseline) {
    require(spec.expected_dim == kBaselineDim, "baseline extractor has dimension 64");
    return std::make_unique<BaselineExtractor>(spec);
  }
#ifdef BMODE_HAVE_OPENCV_DNN
  return std::make_unique<PortableModelExtractor>(spec);
#else
  fail(ErrorKind::kRuntime, "portable-model runtime not built (OpenCV dnn unavailable)");
#endif
}

FeatureVector extract_features(const Image3& input, const ExtractorSpec& spec) {
  FeatureVector v = make_extractor(spec)->extract(input);
  if (v.dim() != spec.expected_dim) {
    fail(ErrorKind::kRuntime, "dimension mismatch for '" + spec.extractor_id + "'");
  }
  v.validate();
  return v;
}

std::string FeatureKey::str() const {
  std::ostringstream os;
  os.precision(17);
  os << lesion_id << '|' << scan_index << '|' << threshold_db << '|' << margin_mm << '|'
     << extractor_id;
  return os.str();
}

FeatureCache::FeatureCache(FeatureCache&& other) noexcept {
  std::lock_guard lock(other.mutex_);
  entries_ = std::move(other.entries_);
}

FeatureCache& FeatureCache::operator=(FeatureCache&& other) noexcept {
  if (this != &other) {
    std::scoped_lock lock(mutex_, other.mutex_);
    entries_ = std::move(other.entries_);
  }
  return *this;
}

std::optional<std::vector<double>> FeatureCache::find(const FeatureKey& key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key.str());
  if (it == entries_.end()) return std::nullopt;
  return std::vector<double>(it->second.begin(), it->second.end());
}

std::vector<double> FeatureCache::insert(const FeatureKey& key, const std::vector<double>& values) {
  std::vector<float> stored(values.begin(), values.end());
  std::vector<double> rounded(stored.begin(), stored.end());
  std::lock_guard lock(mutex_);
  entries_[key.str()] = std::move(stored);
  return rounded;
}

std::size_t FeatureCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

namespace {
constexpr char kCacheMagic[8] = {'B', 'M', 'F', 'C', 'A', 'C', 'H', 'E'};
constexpr std::uint32_t kCacheVersion = 1;
}  // namespace

void FeatureCache::save(const fs::path& path) const {
  std::lock_guard lock(mutex_);
  json entries = json::array();
  for (const auto& [key, values] : entries_) entries.push_back({{"key", key}, {"dim", values.size()}});
  const std::string header = json{{"entries", entries}}.dump();
  std::vector<std::uint8_t> bytes(std::begin(kCacheMagic), std::end(kCacheMagic));
  detail::put_u32(bytes, kCacheVersion);
  detail::put_u32(bytes, static_cast<std::uint32_t>(header.size()));
  bytes.insert(bytes.end(), header.begin(), header.end());
  for (const auto& [key, values] : entries_) {
    for (float v : values) detail::put_f32(bytes, v);
  }
  write_file_bytes(path, bytes);
}

FeatureCache FeatureCache::load(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  auto corrupt = [&](const std::string& why) {
    fail(ErrorKind::kIo, "feature cache '" + path.string() + "' is corrupt: " + why);
  };
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCacheMagic, 8) != 0) corrupt("bad magic");
  if (detail::get_u32(&bytes[8]) != kCacheVersion) corrupt("unsupported version");
  const std::size_t header_len = detail::get_u32(&bytes[12]);
  if (16 + header_len > bytes.size()) corrupt("truncated header");
  FeatureCache cache;
  try {
    const json header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + header_len);
    std::size_t pos = 16 + header_len;
    for (const auto& entry : header.at("entries")) {
      const auto dim = entry.at("dim").get<std::size_t>();
      if (pos + 4 * dim > bytes.size()) corrupt("truncated payload");
      std::vector<float> values(dim);
      for (std::size_t i = 0; i < dim; ++i) values[i] = detail::get_f32(&bytes[pos + 4 * i]);
      pos += 4 * dim;
      cache.entries_[entry.at("key").get<std::string>()] = std::move(values);
    }
    if (pos != bytes.size()) corrupt("trailing bytes");
  } catch (const json::exception& e) {
    corrupt(e.what());
  }
  return cache;
}

}  // namespace bmode
