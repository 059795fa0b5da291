#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bmode/grid.hpp"

namespace bmode {

// Physical spacing of an RF frame. The axial spacing is derived from the
// sampling rate and the speed of sound (two-way travel).
struct PixelGeometry {
  double axial_mm_per_sample = 0.0;
  double lateral_mm_per_line = 0.0;
  double sampling_rate_hz = 0.0;
  double speed_of_sound_m_s = 1540.0;

  static PixelGeometry from_acquisition(double sampling_rate_hz, double lateral_mm_per_line,
                                        double speed_of_sound_m_s = 1540.0);
  void validate() const;

  friend bool operator==(const PixelGeometry&, const PixelGeometry&) = default;
};

struct RfFrame {
  Grid<double> samples;  // rows: axial samples, cols: scan lines
  PixelGeometry geometry;
  std::string scan_id;

  std::size_t rows() const noexcept { return samples.rows(); }
  std::size_t cols() const noexcept { return samples.cols(); }
  void validate() const;
};

using RoiMask = Grid<std::uint8_t>;

// Throws unless the mask has the given shape and a single non-empty
// 4-connected true region.
void validate_mask(const RoiMask& mask, std::size_t rows, std::size_t cols);

enum class Label { kBenign = 0, kMalignant = 1 };

const char* label_name(Label label) noexcept;
Label parse_label(const std::string& text);

struct Scan {
  RfFrame frame;
  RoiMask mask;
};

struct LesionRecord {
  std::string lesion_id;
  std::string patient_id;
  Label label = Label::kBenign;
  std::vector<Scan> scans;  // exactly two orthogonal scans
};

struct Dataset {
  std::string name;
  std::vector<LesionRecord> lesions;

  std::size_t frame_count() const noexcept;
  const LesionRecord& find(const std::string& lesion_id) const;
  void validate() const;
};

// Native manifest: JSON plus raw little-endian f32 RF blobs and u8 masks.
Dataset load_dataset(const std::filesystem::path& manifest_path);

// Writes `<dir>/manifest.json` and one `.f32`/`.u8` pair per scan. Returns
// the manifest path. Output is byte-stable for identical datasets.
std::filesystem::path write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

// 8-bit grayscale image stored as binary PGM (P5, maxval 255).
void write_pgm(const Grid<std::uint8_t>& pixels, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_pgm(const Grid<std::uint8_t>& pixels);

// Raw little-endian helpers shared by the blob and cache formats.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace bmode
