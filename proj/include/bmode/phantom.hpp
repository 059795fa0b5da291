#pragma once

#include <cstdint>
#include <utility>

#include "bmode/data_io.hpp"

namespace bmode {

struct PhantomConfig {
  int rows = 1024;
  int cols = 256;
  double sampling_rate_hz = 40e6;
  double speed_of_sound_m_s = 1540.0;
  double lateral_mm_per_line = 0.075;
  double center_frequency_hz = 7e6;
  double pulse_bandwidth_fraction = 0.6;
  double scatterer_density = 0.15;
  double lesion_contrast_db = -12.0;
  double malignant_contrast_offset_db = -3.0;
  double contrast_jitter_db = 3.0;  // per-lesion uniform +/- jitter
  double benign_irregularity = 0.05;
  double malignant_irregularity = 0.35;
  std::uint64_t seed = 0;

  void validate() const;
  double irregularity(Label label) const noexcept;
};

// Lesion geometry drawn once per lesion and shared by both scans.
struct LesionShape {
  double center_row = 0.0, center_col = 0.0;
  double semi_axis_rows = 0.0, semi_axis_cols = 0.0;
  double irregularity = 0.0;
  double contrast_db = 0.0;
  // radius perturbation: sum_k weight_k * sin(k * theta + phase_k), k = 2..5
  double weights[4] = {0, 0, 0, 0};
  double phases[4] = {0, 0, 0, 0};

  // Normalized boundary radius at polar angle theta (1 for an ellipse).
  double boundary_radius(double theta) const noexcept;
  bool inside(double row, double col) const noexcept;
  bool inside_ellipse(double row, double col) const noexcept;
};

LesionShape draw_lesion_shape(const PhantomConfig& config, Label label, std::uint64_t seed);

// Speckle RF for a given shape and scatterer realization seed.
RfFrame synth_rf(const PhantomConfig& config, const LesionShape& shape, std::uint64_t speckle_seed);
RoiMask lesion_mask(const PhantomConfig& config, const LesionShape& shape);

std::pair<RfFrame, RoiMask> synth_lesion_rf(const PhantomConfig& config, Label label);

// One patient per lesion, ids "L0000"/"P0000"; benign lesions first.
Dataset synth_dataset(int n_benign, int n_malignant, const PhantomConfig& base_config,
                      std::uint64_t seed, int workers = 1);

}  // namespace bmode
