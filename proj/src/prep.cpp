#include "bmode/prep.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace bmode {

using nlohmann::json;

void NetworkPreprocessSpec::validate() const {
  require(!name.empty(), "preprocess spec needs a name");
  require(input_size > 0, "preprocess spec '" + name + "': input_size must be positive");
  require(mode != PreprocessMode::kMeanSubtract || channel_means.has_value(),
          "preprocess spec '" + name + "': mean_subtract requires channel_means");
}

NetworkPreprocessSpec parse_preprocess_spec(const std::string& json_text) {
  NetworkPreprocessSpec spec;
  try {
    const json doc = json::parse(json_text);
    spec.name = doc.at("name").get<std::string>();
    spec.input_size = doc.at("input_size").get<int>();
    const auto mode = doc.at("mode").get<std::string>();
    if (mode == "scale_symmetric") {
      spec.mode = PreprocessMode::kScaleSymmetric;
    } else if (mode == "mean_subtract") {
      spec.mode = PreprocessMode::kMeanSubtract;
    } else {
      fail(ErrorKind::kInvalidInput, "unknown preprocess mode '" + mode + "'");
    }
    if (doc.contains("channel_means") && !doc.at("channel_means").is_null()) {
      const auto means = doc.at("channel_means").get<std::vector<double>>();
      require(means.size() == 3, "channel_means must have three entries");
      spec.channel_means = std::array<double, 3>{means[0], means[1], means[2]};
    }
    const auto order = doc.value("channel_order", std::string("rgb"));
    if (order == "rgb") {
      spec.channel_order = ChannelOrder::kRgb;
    } else if (order == "bgr") {
      spec.channel_order = ChannelOrder::kBgr;
    } else {
      fail(ErrorKind::kInvalidInput, "unknown channel_order '" + order + "'");
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kInvalidInput, std::string("malformed preprocess spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

NetworkPreprocessSpec load_preprocess_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open preprocess spec '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_preprocess_spec(buffer.str());
}

namespace {

std::size_t margin_in_pixels(double margin_mm, double mm_per_pixel) {
  const double x = margin_mm / mm_per_pixel;
  // Guard against 250.00000000000003-style representation noise.
  return static_cast<std::size_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
}

}  // namespace

CropWindow crop_window(const RoiMask& mask, const PixelGeometry& geometry, double margin_mm) {
  require(margin_mm >= 0 && std::isfinite(margin_mm), "margin must be non-negative");
  std::size_t r0 = mask.rows(), r1 = 0, c0 = mask.cols(), c1 = 0;
  for (std::size_t r = 0; r < mask.rows(); ++r) {
    for (std::size_t c = 0; c < mask.cols(); ++c) {
      if (!mask(r, c)) continue;
      r0 = std::min(r0, r);
      r1 = std::max(r1, r + 1);
      c0 = std::min(c0, c);
      c1 = std::max(c1, c + 1);
    }
  }
  require(r1 > 0, "cannot crop with an empty mask");
  const std::size_t dr = margin_in_pixels(margin_mm, geometry.axial_mm_per_sample);
  const std::size_t dc = margin_in_pixels(margin_mm, geometry.lateral_mm_per_line);
  CropWindow w;
  w.row_begin = r0 > dr ? r0 - dr : 0;
  w.row_end = std::min(mask.rows(), r1 + dr);
  w.col_begin = c0 > dc ? c0 - dc : 0;
  w.col_end = std::min(mask.cols(), c1 + dc);
  return w;
}

Grid<std::uint8_t> crop_with_margin(const BModeImage& image, const RoiMask& mask, double margin_mm) {
  require(mask.same_shape(image.pixels.rows(), image.pixels.cols()),
          "mask shape does not match image shape");
  const CropWindow w = crop_window(mask, image.geometry, margin_mm);
  Grid<std::uint8_t> out(w.row_end - w.row_begin, w.col_end - w.col_begin);
  for (std::size_t r = w.row_begin; r < w.row_end; ++r) {
    for (std::size_t c = w.col_begin; c < w.col_end; ++c) {
      out(r - w.row_begin, c - w.col_begin) = image.pixels(r, c);
    }
  }
  return out;
}

double cubic_kernel(double x, double a) {
  x = std::abs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

namespace {

// Four taps per output sample along one axis.
struct Taps {
  std::vector<std::array<std::size_t, 4>> index;
  std::vector<std::array<double, 4>> weight;
};

Taps make_taps(std::size_t in_size, std::size_t out_size) {
  Taps t;
  t.index.resize(out_size);
  t.weight.resize(out_size);
  const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
  const auto last = static_cast<std::ptrdiff_t>(in_size) - 1;
  for (std::size_t o = 0; o < out_size; ++o) {
    const double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    const double base = std::floor(src);
    const double frac = src - base;
    for (int k = 0; k < 4; ++k) {
      const auto i = static_cast<std::ptrdiff_t>(base) - 1 + k;
      t.index[o][k] = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, last));
      t.weight[o][k] = cubic_kernel(frac - (k - 1));
    }
  }
  return t;
}

}  // namespace

Grid<double> bicubic_resize(const Grid<double>& patch, int target) {
  require(patch.rows() >= 2 && patch.cols() >= 2, "bicubic_resize: degenerate patch (< 2x2)");
  require(target > 0, "bicubic_resize: target must be positive");
  const auto n = static_cast<std::size_t>(target);
  const Taps rows = make_taps(patch.rows(), n);
  const Taps cols = make_taps(patch.cols(), n);

  Grid<double> horizontal(patch.rows(), n);
  for (std::size_t r = 0; r < patch.rows(); ++r) {
    for (std::size_t o = 0; o < n; ++o) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += cols.weight[o][k] * patch(r, cols.index[o][k]);
      horizontal(r, o) = acc;
    }
  }
  Grid<double> out(n, n);
  for (std::size_t o = 0; o < n; ++o) {
    for (std::size_t c = 0; c < n; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += rows.weight[o][k] * horizontal(rows.index[o][k], c);
      out(o, c) = std::clamp(acc, 0.0, 255.0);
    }
  }
  return out;
}

Grid<double> bicubic_resize(const Grid<std::uint8_t>& patch, int target) {
  Grid<double> as_real(patch.rows(), patch.cols());
  for (std::size_t i = 0; i < patch.size(); ++i) as_real.data()[i] = patch.data()[i];
  return bicubic_resize(as_real, target);
}

Image3 to_network_input(const Grid<double>& resized, const NetworkPreprocessSpec& spec) {
  spec.validate();
  const auto n = static_cast<std::size_t>(spec.input_size);
  require(resized.same_shape(n, n), "to_network_input: image size does not match spec '" +
                                        spec.name + "' (" + std::to_string(n) + ")");
  Image3 out;
  for (int plane = 0; plane < 3; ++plane) {
    Grid<double> channel(n, n);
    if (spec.mode == PreprocessMode::kScaleSymmetric) {
      for (std::size_t i = 0; i < resized.size(); ++i) {
        channel.data()[i] = resized.data()[i] / 127.5 - 1.0;
      }
    } else {
      const int color = spec.channel_order == ChannelOrder::kRgb ? plane : 2 - plane;
      const double mean = (*spec.channel_means)[color];
      for (std::size_t i = 0; i < resized.size(); ++i) channel.data()[i] = resized.data()[i] - mean;
    }
    out.channels[plane] = std::move(channel);
  }
  return out;
}

std::vector<ImageVariant> enumerate_variants(const LesionRecord& record, const VariantPlan& plan,
                                             const NetworkPreprocessSpec& spec) {
  require(!plan.thresholds_db.empty() && !plan.margins_mm.empty(),
          "variant plan needs at least one threshold and one margin");
  std::vector<ImageVariant> out;
  out.reserve(record.scans.size() * plan.thresholds_db.size() * plan.margins_mm.size());
  for (std::size_t s = 0; s < record.scans.size(); ++s) {
    const Scan& scan = record.scans[s];
    const Grid<double> env = frame_envelope(scan.frame);
    double a_max;
    if (plan.a_max_scope == AmaxScope::kPerDataset) {
      require(plan.dataset_a_max.has_value(), "per-dataset A_max scope needs the dataset maximum");
      a_max = *plan.dataset_a_max;
    } else {
      a_max = *std::max_element(env.data().begin(), env.data().end());
    }
    if (!(a_max > 0)) {
      fail(ErrorKind::kDegenerate, "degenerate input: frame '" + scan.frame.scan_id + "' of lesion '" +
                                       record.lesion_id + "' is all zero");
    }
    std::vector<BModeImage> images;
    for (double threshold : plan.thresholds_db) {
      BModeImage image;
      image.pixels = compress_envelope(env, a_max, threshold);
      image.geometry = scan.frame.geometry;
      image.threshold_db = threshold;
      image.lesion_id = record.lesion_id;
      image.scan_id = scan.frame.scan_id;
      images.push_back(std::move(image));
    }
    for (double margin : plan.margins_mm) {
      for (const BModeImage& image : images) {
        ImageVariant v;
        v.lesion_id = record.lesion_id;
        v.scan_index = static_cast<int>(s);
        v.threshold_db = image.threshold_db;
        v.margin_mm = margin;
        const auto cropped = crop_with_margin(image, scan.mask, margin);
        v.pixels = to_network_input(bicubic_resize(cropped, spec.input_size), spec);
        out.push_back(std::move(v));
      }
    }
  }
  return out;
}

}  // namespace bmode
