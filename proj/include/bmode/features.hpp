#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "bmode/prep.hpp"

namespace bmode {

struct FeatureVector {
  std::vector<double> values;
  std::string extractor_id;

  std::size_t dim() const noexcept { return values.size(); }
  void validate() const;
};

enum class ExtractorKind { kPortableModel, kBaseline };

struct ExtractorSpec {
  std::string extractor_id;
  ExtractorKind kind = ExtractorKind::kBaseline;
  std::optional<std::filesystem::path> model_path;
  std::size_t expected_dim = 0;
  int input_size = 0;          // 0: accept any square input
  std::string preprocess;      // preprocess spec name the model expects
  std::string tap;

  void validate() const;
};

ExtractorSpec baseline_extractor_spec();

// Reads the JSON manifest written next to an exported portable model.
ExtractorSpec load_model_manifest(const std::filesystem::path& manifest_path);

inline constexpr std::size_t kBaselineDim = 64;
inline constexpr std::size_t kBaselineHistogramBins = 32;
inline constexpr std::size_t kBaselineProjectionDim = 23;
inline constexpr std::uint64_t kBaselineProjectionSeed = 1234;

// Model-free 64-d descriptor of channel 0. Layout:
//   [0, 32)  intensity histogram over [range_lo, range_hi], sums to 1
//   32 mean, 33 standard deviation, 34 mean cubed z-score, 35 histogram
//   entropy (nats), 36 mean central-difference gradient magnitude
//   [37, 41) fraction of pixels below lo + q*(hi - lo), q = .10 .25 .75 .90
//   [41, 64) seeded Gaussian projection of the 8x8 block-mean thumbnail
FeatureVector baseline_extract(const Image3& input, double range_lo = -1.0,
                               double range_hi = 1.0);

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual FeatureVector extract(const Image3& input) const = 0;
  virtual const ExtractorSpec& spec() const = 0;
};

// Portable-model inference needs the OpenCV dnn module; without it,
// requesting a kPortableModel extractor throws ErrorKind::kRuntime.
std::unique_ptr<FeatureExtractor> make_extractor(const ExtractorSpec& spec);
bool portable_runtime_available() noexcept;

FeatureVector extract_features(const Image3& input, const ExtractorSpec& spec);

struct FeatureKey {
  std::string lesion_id;
  int scan_index = 0;
  double threshold_db = 0.0;
  double margin_mm = 0.0;
  std::string extractor_id;

  std::string str() const;
};

// Persistent feature store. File layout (little-endian):
//   "BMFCACHE" | u32 version | u32 header length | UTF-8 JSON header
//   {"entries":[{"key":..,"dim":..},...]} | f32 payload in header order
// Values are held at f32 precision so a warm and a cold cache give
// identical downstream results.
class FeatureCache {
 public:
  FeatureCache() = default;
  FeatureCache(FeatureCache&& other) noexcept;
  FeatureCache& operator=(FeatureCache&& other) noexcept;

  std::optional<std::vector<double>> find(const FeatureKey& key) const;
  // Stores the f32-rounded vector and returns it.
  std::vector<double> insert(const FeatureKey& key, const std::vector<double>& values);
  std::size_t size() const;

  void save(const std::filesystem::path& path) const;
  static FeatureCache load(const std::filesystem::path& path);

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::vector<float>> entries_;
};

}  // namespace bmode
