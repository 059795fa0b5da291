#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bmode/data_io.hpp"
#include "bmode/reconstruct.hpp"

namespace bmode {

enum class PreprocessMode { kScaleSymmetric, kMeanSubtract };
enum class ChannelOrder { kRgb, kBgr };

struct NetworkPreprocessSpec {
  std::string name;
  int input_size = 0;
  PreprocessMode mode = PreprocessMode::kScaleSymmetric;
  std::optional<std::array<double, 3>> channel_means;  // in RGB order
  ChannelOrder channel_order = ChannelOrder::kRgb;

  void validate() const;
};

NetworkPreprocessSpec load_preprocess_spec(const std::filesystem::path& path);
NetworkPreprocessSpec parse_preprocess_spec(const std::string& json_text);

// Planar 3-channel image; all planes share one square geometry.
struct Image3 {
  std::array<Grid<double>, 3> channels;

  std::size_t size() const noexcept { return channels[0].rows(); }
};

struct ImageVariant {
  std::string lesion_id;
  int scan_index = 0;
  double threshold_db = 0.0;
  double margin_mm = 0.0;
  Image3 pixels;
};

// Half-open row/column window into an image.
struct CropWindow {
  std::size_t row_begin = 0, row_end = 0;
  std::size_t col_begin = 0, col_end = 0;
};

CropWindow crop_window(const RoiMask& mask, const PixelGeometry& geometry, double margin_mm);
Grid<std::uint8_t> crop_with_margin(const BModeImage& image, const RoiMask& mask, double margin_mm);

// Catmull-Rom cubic convolution weight (a = -0.5).
double cubic_kernel(double x, double a = -0.5);

// Separable bicubic resize to target x target, half-pixel centers, edge clamp,
// result clamped to [0, 255]. No antialiasing prefilter on downscale.
Grid<double> bicubic_resize(const Grid<double>& patch, int target);
Grid<double> bicubic_resize(const Grid<std::uint8_t>& patch, int target);

Image3 to_network_input(const Grid<double>& resized, const NetworkPreprocessSpec& spec);

struct VariantPlan {
  std::set<double> thresholds_db;
  std::set<double> margins_mm;
  AmaxScope a_max_scope = AmaxScope::kPerFrame;
  std::optional<double> dataset_a_max;  // required for kPerDataset
};

// |scans| x |margins| x |thresholds| variants ordered by scan, then margin
// ascending, then threshold ascending.
std::vector<ImageVariant> enumerate_variants(const LesionRecord& record, const VariantPlan& plan,
                                             const NetworkPreprocessSpec& spec);

}  // namespace bmode
