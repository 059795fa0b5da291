#include "bmode/phantom.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "bmode/parallel.hpp"
#include "bmode/rng.hpp"

namespace bmode {

void PhantomConfig::validate() const {
  require(rows >= 64 && cols >= 64, "phantom frame must be at least 64x64");
  require(scatterer_density > 0.0 && scatterer_density <= 1.0, "scatterer density must be in (0, 1]");
  require(std::isfinite(lesion_contrast_db) && std::isfinite(malignant_contrast_offset_db) &&
              std::isfinite(contrast_jitter_db) && contrast_jitter_db >= 0,
          "phantom contrast parameters must be finite");
  require(benign_irregularity >= 0 && malignant_irregularity >= 0, "irregularity must be non-negative");
  require(sampling_rate_hz > 0 && center_frequency_hz > 0 && pulse_bandwidth_fraction > 0,
          "pulse parameters must be positive");
  require(center_frequency_hz < sampling_rate_hz / 2, "center frequency must be below Nyquist");
}

double PhantomConfig::irregularity(Label label) const noexcept {
  return label == Label::kMalignant ? malignant_irregularity : benign_irregularity;
}

double LesionShape::boundary_radius(double theta) const noexcept {
  double perturbation = 0.0;
  for (int k = 0; k < 4; ++k) perturbation += weights[k] * std::sin((k + 2) * theta + phases[k]);
  return 1.0 + irregularity * perturbation;
}

bool LesionShape::inside_ellipse(double row, double col) const noexcept {
  const double u = (row - center_row) / semi_axis_rows;
  const double v = (col - center_col) / semi_axis_cols;
  return u * u + v * v < 1.0;
}

bool LesionShape::inside(double row, double col) const noexcept {
  const double u = (row - center_row) / semi_axis_rows;
  const double v = (col - center_col) / semi_axis_cols;
  const double rho = std::sqrt(u * u + v * v);
  return rho < boundary_radius(std::atan2(u, v));
}

LesionShape draw_lesion_shape(const PhantomConfig& config, Label label, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  LesionShape s;
  s.center_row = config.rows * (0.5 + rng.uniform(-0.1, 0.1));
  s.center_col = config.cols * (0.5 + rng.uniform(-0.1, 0.1));
  // Full axis lengths span 25-40% of the frame.
  s.semi_axis_rows = 0.5 * config.rows * rng.uniform(0.25, 0.40);
  s.semi_axis_cols = 0.5 * config.cols * rng.uniform(0.25, 0.40);
  s.irregularity = config.irregularity(label);
  s.contrast_db = config.lesion_contrast_db +
                  (label == Label::kMalignant ? config.malignant_contrast_offset_db : 0.0) +
                  rng.uniform(-config.contrast_jitter_db, config.contrast_jitter_db);
  double total = 0.0;
  for (int k = 0; k < 4; ++k) {
    s.weights[k] = rng.uniform(0.1, 1.0);
    total += s.weights[k];
    s.phases[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  for (double& w : s.weights) w /= total;
  return s;
}

namespace {

// Gaussian-modulated cosine; bandwidth is the -6 dB (half amplitude)
// spectral width as a fraction of the center frequency.
std::vector<double> make_pulse(const PhantomConfig& config) {
  const double sigma_f = config.pulse_bandwidth_fraction * config.center_frequency_hz /
                         (2.0 * std::sqrt(2.0 * std::log(2.0)));
  const double sigma_samples = config.sampling_rate_hz / (2.0 * std::numbers::pi * sigma_f);
  const int half = static_cast<int>(std::ceil(4.0 * sigma_samples));
  std::vector<double> pulse(2 * half + 1);
  for (int k = -half; k <= half; ++k) {
    const double envelope = std::exp(-0.5 * k * k / (sigma_samples * sigma_samples));
    pulse[k + half] =
        envelope * std::cos(2.0 * std::numbers::pi * config.center_frequency_hz * k / config.sampling_rate_hz);
  }
  return pulse;
}

}  // namespace

RfFrame synth_rf(const PhantomConfig& config, const LesionShape& shape, std::uint64_t speckle_seed) {
  config.validate();
  const auto rows = static_cast<std::size_t>(config.rows);
  const auto cols = static_cast<std::size_t>(config.cols);
  const double lesion_gain = std::pow(10.0, shape.contrast_db / 20.0);

  Grid<double> field(rows, cols, 0.0);
  Rng rng(speckle_seed);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (rng.uniform() >= config.scatterer_density) continue;
      double amplitude = rng.normal();
      if (shape.inside(static_cast<double>(r), static_cast<double>(c))) amplitude *= lesion_gain;
      field(r, c) = amplitude;
    }
  }

  const auto pulse = make_pulse(config);
  const auto half = static_cast<std::ptrdiff_t>(pulse.size() / 2);
  RfFrame frame;
  frame.samples = Grid<double>(rows, cols, 0.0);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -half; k <= half; ++k) {
        const auto src = static_cast<std::ptrdiff_t>(r) - k;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(rows)) continue;
        acc += pulse[static_cast<std::size_t>(k + half)] * field(static_cast<std::size_t>(src), c);
      }
      // Stored at f32 precision, matching the on-disk format.
      frame.samples(r, c) = static_cast<double>(static_cast<float>(acc));
    }
  }
  frame.geometry = PixelGeometry::from_acquisition(config.sampling_rate_hz, config.lateral_mm_per_line,
                                                   config.speed_of_sound_m_s);
  return frame;
}

RoiMask lesion_mask(const PhantomConfig& config, const LesionShape& shape) {
  RoiMask mask(static_cast<std::size_t>(config.rows), static_cast<std::size_t>(config.cols), 0);
  for (std::size_t r = 0; r < mask.rows(); ++r) {
    for (std::size_t c = 0; c < mask.cols(); ++c) {
      mask(r, c) = shape.inside_ellipse(static_cast<double>(r), static_cast<double>(c)) ? 1 : 0;
    }
  }
  return mask;
}

std::pair<RfFrame, RoiMask> synth_lesion_rf(const PhantomConfig& config, Label label) {
  const LesionShape shape = draw_lesion_shape(config, label, derive_seed(config.seed, "shape"));
  RfFrame frame = synth_rf(config, shape, derive_seed(config.seed, "speckle"));
  frame.scan_id = "phantom";
  return {std::move(frame), lesion_mask(config, shape)};
}

Dataset synth_dataset(int n_benign, int n_malignant, const PhantomConfig& base_config, std::uint64_t seed,
                      int workers) {
  require(n_benign >= 1 && n_malignant >= 1, "phantom dataset needs at least one lesion per class");
  base_config.validate();
  const auto total = static_cast<std::size_t>(n_benign + n_malignant);
  Dataset dataset;
  dataset.name = "phantom-" + std::to_string(seed);
  dataset.lesions.resize(total);
  parallel_for(total, workers, [&](std::size_t i) {
    const Label label = i < static_cast<std::size_t>(n_benign) ? Label::kBenign : Label::kMalignant;
    const std::uint64_t lesion_seed = derive_seed(seed, "lesion", i);
    char id[16];
    LesionRecord& lesion = dataset.lesions[i];
    std::snprintf(id, sizeof id, "L%04zu", i);
    lesion.lesion_id = id;
    std::snprintf(id, sizeof id, "P%04zu", i);
    lesion.patient_id = id;
    lesion.label = label;
    const LesionShape shape = draw_lesion_shape(base_config, label, derive_seed(lesion_seed, "shape"));
    const RoiMask mask = lesion_mask(base_config, shape);
    for (int s = 0; s < 2; ++s) {
      Scan scan;
      scan.frame = synth_rf(base_config, shape, derive_seed(lesion_seed, "speckle", static_cast<std::uint64_t>(s)));
      scan.frame.scan_id = lesion.lesion_id + "_s" + std::to_string(s);
      scan.mask = mask;
      lesion.scans.push_back(std::move(scan));
    }
  });
  dataset.validate();
  return dataset;
}

}  // namespace bmode
