#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bmode/data_io.hpp"
#include "bmode/evaluate.hpp"
#include "bmode/phantom.hpp"
#include "bmode/rng.hpp"

namespace fixtures {

namespace fs = std::filesystem;

inline fs::path data_dir() { return fs::path(BMODE_TEST_DATA); }

// Fresh, empty scratch directory under the system temp dir.
inline fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("bmode_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline bmode::PhantomConfig small_phantom() {
  bmode::PhantomConfig c;
  c.rows = 192;
  c.cols = 96;
  return c;
}

inline bmode::RfFrame noise_frame(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  bmode::Rng rng(seed);
  bmode::RfFrame f;
  f.samples = bmode::Grid<double>(rows, cols);
  for (auto& v : f.samples.data()) v = rng.normal();
  f.geometry = bmode::PixelGeometry::from_acquisition(40e6, 0.1);
  f.scan_id = "noise";
  return f;
}

inline bmode::RoiMask box_mask(std::size_t rows, std::size_t cols, std::size_t r0, std::size_t r1,
                               std::size_t c0, std::size_t c1) {
  bmode::RoiMask m(rows, cols);
  for (std::size_t r = r0; r < r1; ++r) {
    for (std::size_t c = c0; c < c1; ++c) m(r, c) = 1;
  }
  return m;
}

// Two-lesion dataset (one per class), 64x64 noise frames with box masks.
inline bmode::Dataset tiny_dataset() {
  bmode::Dataset ds;
  ds.name = "tiny";
  for (int i = 0; i < 2; ++i) {
    bmode::LesionRecord l;
    l.lesion_id = "L" + std::to_string(i);
    l.patient_id = "P" + std::to_string(i);
    l.label = i == 0 ? bmode::Label::kBenign : bmode::Label::kMalignant;
    for (int s = 0; s < 2; ++s) {
      bmode::Scan scan;
      scan.frame = noise_frame(64, 64, 10 * i + s);
      scan.frame.scan_id = l.lesion_id + "_s" + std::to_string(s);
      scan.mask = box_mask(64, 64, 20, 40, 16 + s, 40);
      l.scans.push_back(std::move(scan));
    }
    ds.lesions.push_back(std::move(l));
  }
  return ds;
}

// Random patient structure with 1-3 lesions per patient and at least k
// patients carrying each class.
inline std::vector<bmode::PatientLesions> random_structure(bmode::Rng& rng, int n_patients, int k) {
  while (true) {
    std::vector<bmode::PatientLesions> out;
    int with_m = 0, with_b = 0, lesion = 0;
    for (int p = 0; p < n_patients; ++p) {
      bmode::PatientLesions pl;
      pl.patient_id = "P" + std::to_string(rng.below(1000000)) + "_" + std::to_string(p);
      const int n = 1 + static_cast<int>(rng.below(10) < 7 ? 0 : rng.below(3));
      bool m = false, b = false;
      for (int j = 0; j < n; ++j) {
        const bmode::Label l = rng.below(5) < 2 ? bmode::Label::kMalignant : bmode::Label::kBenign;
        (l == bmode::Label::kMalignant ? m : b) = true;
        pl.lesions.emplace_back("L" + std::to_string(lesion++), l);
      }
      with_m += m;
      with_b += b;
      out.push_back(std::move(pl));
    }
    if (with_m >= k && with_b >= k) return out;
  }
}

}  // namespace fixtures
