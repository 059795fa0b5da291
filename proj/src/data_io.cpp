#include "bmode/data_io.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <queue>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bytes.hpp"

namespace bmode {

namespace fs = std::filesystem;
using nlohmann::json;

PixelGeometry PixelGeometry::from_acquisition(double sampling_rate_hz, double lateral_mm_per_line,
                                              double speed_of_sound_m_s) {
  PixelGeometry g;
  g.sampling_rate_hz = sampling_rate_hz;
  g.lateral_mm_per_line = lateral_mm_per_line;
  g.speed_of_sound_m_s = speed_of_sound_m_s;
  g.axial_mm_per_sample = speed_of_sound_m_s / (2.0 * sampling_rate_hz) * 1000.0;
  g.validate();
  return g;
}

void PixelGeometry::validate() const {
  const bool positive = axial_mm_per_sample > 0 && lateral_mm_per_line > 0 &&
                        sampling_rate_hz > 0 && speed_of_sound_m_s > 0;
  require(positive && std::isfinite(axial_mm_per_sample) && std::isfinite(lateral_mm_per_line) &&
              std::isfinite(sampling_rate_hz) && std::isfinite(speed_of_sound_m_s),
          "pixel geometry fields must be finite and strictly positive");
  const double expected = speed_of_sound_m_s / (2.0 * sampling_rate_hz) * 1000.0;
  require(std::abs(axial_mm_per_sample - expected) <= 1e-9 * expected,
          "axial spacing inconsistent with sampling rate and speed of sound");
}

void RfFrame::validate() const {
  require(rows() >= 64 && cols() >= 64,
          "RF frame '" + scan_id + "' must have at least 64 rows and 64 columns");
  for (double v : samples.data()) {
    require(std::isfinite(v), "RF frame '" + scan_id + "' contains non-finite samples");
  }
  geometry.validate();
}

void validate_mask(const RoiMask& mask, std::size_t rows, std::size_t cols) {
  require(mask.same_shape(rows, cols), "mask shape does not match frame shape");
  std::size_t total = 0;
  std::size_t first = mask.size();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.data()[i]) {
      ++total;
      if (first == mask.size()) first = i;
    }
  }
  require(total > 0, "mask is empty");

  std::vector<std::uint8_t> seen(mask.size(), 0);
  std::queue<std::size_t> frontier;
  frontier.push(first);
  seen[first] = 1;
  std::size_t reached = 0;
  while (!frontier.empty()) {
    const std::size_t i = frontier.front();
    frontier.pop();
    ++reached;
    const std::size_t r = i / cols, c = i % cols;
    auto visit = [&](std::size_t rr, std::size_t cc) {
      const std::size_t j = rr * cols + cc;
      if (mask.data()[j] && !seen[j]) {
        seen[j] = 1;
        frontier.push(j);
      }
    };
    if (r > 0) visit(r - 1, c);
    if (r + 1 < rows) visit(r + 1, c);
    if (c > 0) visit(r, c - 1);
    if (c + 1 < cols) visit(r, c + 1);
  }
  require(reached == total, "mask true region is not a single 4-connected component");
}

const char* label_name(Label label) noexcept {
  return label == Label::kMalignant ? "malignant" : "benign";
}

Label parse_label(const std::string& text) {
  if (text == "benign") return Label::kBenign;
  if (text == "malignant") return Label::kMalignant;
  fail(ErrorKind::kInvalidInput, "unknown label '" + text + "'");
}

std::size_t Dataset::frame_count() const noexcept {
  std::size_t n = 0;
  for (const auto& lesion : lesions) n += lesion.scans.size();
  return n;
}

const LesionRecord& Dataset::find(const std::string& lesion_id) const {
  for (const auto& lesion : lesions) {
    if (lesion.lesion_id == lesion_id) return lesion;
  }
  fail(ErrorKind::kInvalidInput, "no lesion '" + lesion_id + "' in dataset '" + name + "'");
}

void Dataset::validate() const {
  std::set<std::string> ids;
  bool benign = false, malignant = false;
  for (const auto& lesion : lesions) {
    require(!lesion.lesion_id.empty(), "lesion with empty id");
    require(!lesion.patient_id.empty(), "lesion '" + lesion.lesion_id + "' has no patient id");
    require(ids.insert(lesion.lesion_id).second, "duplicate lesion_id '" + lesion.lesion_id + "'");
    require(lesion.scans.size() == 2,
            "lesion '" + lesion.lesion_id + "' must have exactly two scans");
    for (const auto& scan : lesion.scans) {
      try {
        scan.frame.validate();
        validate_mask(scan.mask, scan.frame.rows(), scan.frame.cols());
      } catch (const Error& e) {
        fail(e.kind(), "lesion '" + lesion.lesion_id + "': " + e.what());
      }
    }
    (lesion.label == Label::kMalignant ? malignant : benign) = true;
  }
  require(benign && malignant, "dataset '" + name + "' must contain both classes");
}

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIo, "write failed for '" + path.string() + "'");
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) fail(ErrorKind::kIo, "write failed for '" + path.string() + "'");
}

namespace {

std::string context(const std::string& lesion_id, const fs::path& path) {
  return "lesion '" + lesion_id + "' (" + path.string() + ")";
}

Grid<double> read_f32_blob(const fs::path& path, std::size_t rows, std::size_t cols,
                           const std::string& lesion_id) {
  if (!fs::exists(path)) fail(ErrorKind::kIo, "missing RF file for " + context(lesion_id, path));
  const auto bytes = read_file_bytes(path);
  if (bytes.size() != rows * cols * 4) {
    fail(ErrorKind::kInvalidInput,
         "shape mismatch: RF blob size does not match shape for " + context(lesion_id, path));
  }
  Grid<double> out(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) out.data()[i] = detail::get_f32(&bytes[4 * i]);
  return out;
}

RoiMask read_u8_mask(const fs::path& path, std::size_t rows, std::size_t cols,
                     const std::string& lesion_id) {
  if (!fs::exists(path)) fail(ErrorKind::kIo, "missing mask file for " + context(lesion_id, path));
  auto bytes = read_file_bytes(path);
  if (bytes.size() != rows * cols) {
    fail(ErrorKind::kInvalidInput,
         "shape mismatch: mask size does not match frame shape for " + context(lesion_id, path));
  }
  for (auto& b : bytes) {
    if (b > 1) fail(ErrorKind::kInvalidInput, "mask values must be 0/1 for " + context(lesion_id, path));
  }
  return RoiMask(rows, cols, std::move(bytes));
}

RoiMask bbox_mask(const json& box, std::size_t rows, std::size_t cols, const std::string& lesion_id) {
  const auto r0 = box.at("row_begin").get<std::size_t>();
  const auto r1 = box.at("row_end").get<std::size_t>();
  const auto c0 = box.at("col_begin").get<std::size_t>();
  const auto c1 = box.at("col_end").get<std::size_t>();
  if (!(r0 < r1 && r1 <= rows && c0 < c1 && c1 <= cols)) {
    fail(ErrorKind::kInvalidInput, "shape mismatch: mask bounding box outside frame for lesion '" +
                                       lesion_id + "'");
  }
  RoiMask mask(rows, cols, 0);
  for (std::size_t r = r0; r < r1; ++r) {
    for (std::size_t c = c0; c < c1; ++c) mask(r, c) = 1;
  }
  return mask;
}

}  // namespace

Dataset load_dataset(const fs::path& manifest_path) {
  if (!fs::exists(manifest_path)) {
    fail(ErrorKind::kIo, "manifest not found: " + manifest_path.string());
  }
  const fs::path base = manifest_path.parent_path();
  json doc;
  try {
    const auto bytes = read_file_bytes(manifest_path);
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    fail(ErrorKind::kInvalidInput, "malformed manifest " + manifest_path.string() + ": " + e.what());
  }

  Dataset dataset;
  std::set<std::string> seen_ids;
  try {
    dataset.name = doc.at("name").get<std::string>();
    for (const auto& entry : doc.at("lesions")) {
      LesionRecord lesion;
      lesion.lesion_id = entry.at("lesion_id").get<std::string>();
      lesion.patient_id = entry.at("patient_id").get<std::string>();
      if (!seen_ids.insert(lesion.lesion_id).second) {
        fail(ErrorKind::kInvalidInput, "duplicate lesion_id '" + lesion.lesion_id + "' in " +
                                           manifest_path.string());
      }
      try {
        lesion.label = parse_label(entry.at("label").get<std::string>());
      } catch (const Error& e) {
        fail(ErrorKind::kInvalidInput, std::string(e.what()) + " for " +
                                           context(lesion.lesion_id, manifest_path));
      }
      const auto& scans = entry.at("scans");
      if (scans.size() != 2) {
        fail(ErrorKind::kInvalidInput,
             "expected exactly two scans for " + context(lesion.lesion_id, manifest_path));
      }
      int scan_index = 0;
      for (const auto& s : scans) {
        const auto shape = s.at("shape").get<std::vector<std::size_t>>();
        if (shape.size() != 2) {
          fail(ErrorKind::kInvalidInput, "shape must be [rows, cols] for " +
                                             context(lesion.lesion_id, manifest_path));
        }
        Scan scan;
        const fs::path rf_path = base / s.at("rf").get<std::string>();
        scan.frame.samples = read_f32_blob(rf_path, shape[0], shape[1], lesion.lesion_id);
        const auto& g = s.at("geometry");
        try {
          scan.frame.geometry = PixelGeometry::from_acquisition(
              g.at("sampling_rate_hz").get<double>(), g.at("lateral_mm_per_line").get<double>(),
              g.value("speed_of_sound_m_s", 1540.0));
        } catch (const Error& e) {
          fail(ErrorKind::kInvalidInput, std::string(e.what()) + " for " +
                                             context(lesion.lesion_id, rf_path));
        }
        scan.frame.scan_id =
            s.value("scan_id", lesion.lesion_id + "_s" + std::to_string(scan_index));

        if (s.contains("mask_shape") &&
            s.at("mask_shape").get<std::vector<std::size_t>>() != shape) {
          fail(ErrorKind::kInvalidInput,
               "shape mismatch: mask shape differs from frame for " +
                   context(lesion.lesion_id, manifest_path));
        }
        if (s.contains("mask")) {
          scan.mask = read_u8_mask(base / s.at("mask").get<std::string>(), shape[0], shape[1],
                                   lesion.lesion_id);
        } else if (s.contains("mask_bbox")) {
          scan.mask = bbox_mask(s.at("mask_bbox"), shape[0], shape[1], lesion.lesion_id);
        } else {
          fail(ErrorKind::kInvalidInput,
               "scan has neither mask nor mask_bbox for " + context(lesion.lesion_id, manifest_path));
        }
        lesion.scans.push_back(std::move(scan));
        ++scan_index;
      }
      dataset.lesions.push_back(std::move(lesion));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kInvalidInput, "malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  dataset.validate();
  return dataset;
}

fs::path write_dataset(const Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir);
  json lesions = json::array();
  for (const auto& lesion : dataset.lesions) {
    json scans = json::array();
    for (std::size_t k = 0; k < lesion.scans.size(); ++k) {
      const auto& scan = lesion.scans[k];
      const std::string stem = lesion.lesion_id + "_s" + std::to_string(k);
      std::vector<std::uint8_t> rf;
      rf.reserve(scan.frame.samples.size() * 4);
      for (double v : scan.frame.samples.data()) detail::put_f32(rf, static_cast<float>(v));
      write_file_bytes(dir / (stem + ".f32"), rf);
      write_file_bytes(dir / (stem + ".u8"), scan.mask.data());

      const auto& g = scan.frame.geometry;
      scans.push_back({{"rf", stem + ".f32"},
                       {"shape", {scan.frame.rows(), scan.frame.cols()}},
                       {"mask", stem + ".u8"},
                       {"scan_id", scan.frame.scan_id},
                       {"geometry",
                        {{"sampling_rate_hz", g.sampling_rate_hz},
                         {"speed_of_sound_m_s", g.speed_of_sound_m_s},
                         {"lateral_mm_per_line", g.lateral_mm_per_line}}}});
    }
    lesions.push_back({{"lesion_id", lesion.lesion_id},
                       {"patient_id", lesion.patient_id},
                       {"label", label_name(lesion.label)},
                       {"scans", std::move(scans)}});
  }
  json doc = {{"name", dataset.name}, {"lesions", std::move(lesions)}};
  const fs::path manifest = dir / "manifest.json";
  write_text_file(manifest, doc.dump(2) + "\n");
  return manifest;
}

std::vector<std::uint8_t> encode_pgm(const Grid<std::uint8_t>& pixels) {
  const std::string header =
      "P5\n" + std::to_string(pixels.cols()) + " " + std::to_string(pixels.rows()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), pixels.data().begin(), pixels.data().end());
  return out;
}

void write_pgm(const Grid<std::uint8_t>& pixels, const fs::path& path) {
  write_file_bytes(path, encode_pgm(pixels));
}

}  // namespace bmode
