#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bmode/data_io.hpp"

namespace bmode {

enum class AmaxScope { kPerFrame, kPerDataset };

struct CompressionConfig {
  double threshold_db = 50.0;
  AmaxScope a_max_scope = AmaxScope::kPerFrame;
  std::optional<double> a_max_override;

  void validate() const;
};

struct BModeImage {
  Grid<std::uint8_t> pixels;
  PixelGeometry geometry;
  double threshold_db = 0.0;
  std::string lesion_id;
  std::string scan_id;
};

// Stand-in for log10(0): below every finite threshold, never NaN.
inline constexpr double kSilentDb = -std::numeric_limits<double>::infinity();

// |analytic signal| of one scan line (FFT, one-sided spectrum, inverse FFT).
std::vector<double> analytic_envelope(std::span<const double> line);

// Envelope of every column of the frame.
Grid<double> frame_envelope(const RfFrame& frame);

// 20*log10(amplitude / a_max); kSilentDb for zero amplitude.
double log_compress(double amplitude, double a_max);

// Linear map of [-threshold_db, 0] onto [0, 255], half-away-from-zero
// rounding, clamped.
std::uint8_t quantize(double db_value, double threshold_db);

// Compresses an already computed envelope with the given normalization.
Grid<std::uint8_t> compress_envelope(const Grid<double>& envelope, double a_max,
                                     double threshold_db);

// For per_dataset scope the caller passes `dataset_a_max`; it is ignored for
// per_frame scope and when the config carries an override.
BModeImage reconstruct_bmode(const RfFrame& frame, const CompressionConfig& config,
                             std::optional<double> dataset_a_max = std::nullopt);

// Maximum envelope amplitude over every frame of the dataset.
double dataset_a_max(const Dataset& dataset);

}  // namespace bmode
