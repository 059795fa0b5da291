#include "doctest.h"

#include "bmode/error.hpp"
#include "bmode/prep.hpp"
#include "bmode/rng.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace bmode;

namespace {

BModeImage blank_image(std::size_t rows, std::size_t cols, const PixelGeometry& g) {
  BModeImage img;
  img.pixels = Grid<std::uint8_t>(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) img.pixels(r, c) = static_cast<std::uint8_t>((r + c) % 256);
  }
  img.geometry = g;
  return img;
}

NetworkPreprocessSpec spec_of(const char* name) {
  return load_preprocess_spec(std::filesystem::path(BMODE_CONFIG_DIR) / "preprocess" / name);
}

Grid<double> random_patch(std::size_t rows, std::size_t cols, Rng& rng) {
  Grid<double> g(rows, cols);
  for (auto& v : g.data()) v = rng.uniform(0.0, 255.0);
  return g;
}

}  // namespace

TEST_CASE("margin converts to whole samples with ceil") {
  const auto g = PixelGeometry::from_acquisition(38.5e6, 0.1);
  CHECK(g.axial_mm_per_sample == doctest::Approx(0.02).epsilon(1e-12));
  const auto mask = fixtures::box_mask(1000, 300, 400, 420, 140, 160);
  const CropWindow w = crop_window(mask, g, 5.0);
  CHECK(w.row_begin == 400 - 250);
  CHECK(w.row_end == 420 + 250);
  CHECK(w.col_begin == 140 - 50);
  CHECK(w.col_end == 160 + 50);
  const CropWindow odd = crop_window(mask, g, 0.33);
  CHECK(odd.row_begin == 400 - 17);
  CHECK(odd.col_begin == 140 - 4);
}

TEST_CASE("crop clamps at the image border and margin 0 is the bounding box") {
  const auto g = PixelGeometry::from_acquisition(40e6, 0.1);
  const auto img = blank_image(128, 96, g);
  const auto top = fixtures::box_mask(128, 96, 0, 10, 30, 40);
  const auto crop = crop_with_margin(img, top, 2.0);
  const CropWindow w = crop_window(top, g, 2.0);
  CHECK(w.row_begin == 0);
  CHECK(crop.rows() < 10 + 2 * 104);
  CHECK(crop.rows() == w.row_end);

  const auto exact = crop_with_margin(img, fixtures::box_mask(128, 96, 5, 9, 7, 12), 0.0);
  REQUIRE(exact.rows() == 4);
  REQUIRE(exact.cols() == 5);
  CHECK(exact(0, 0) == img.pixels(5, 7));
  CHECK(exact(3, 4) == img.pixels(8, 11));
  CHECK_THROWS_AS(crop_with_margin(img, RoiMask(128, 96), 2.0), Error);
}

TEST_CASE("Catmull-Rom kernel values") {
  CHECK(cubic_kernel(0.0) == 1.0);
  CHECK(cubic_kernel(1.0) == 0.0);
  CHECK(cubic_kernel(2.0) == 0.0);
  CHECK(cubic_kernel(0.5) == 0.5625);
  CHECK(cubic_kernel(-1.5) == -0.0625);
  for (double x : {0.1, 0.7, 1.3, 1.9}) CHECK(std::fabs(cubic_kernel(x) - oracle::catmull_rom(x)) <= 1e-14);
}

TEST_CASE("resize matches the direct kernel-sum oracle") {
  Rng rng(2024);
  const auto ref = random_patch(16, 16, rng);
  const auto got = bicubic_resize(ref, 8);
  const auto want = oracle::naive_resize(ref, 8);
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::fabs(got.data()[i] - want.data()[i]) <= 1e-9);

  for (int trial = 0; trial < 50; ++trial) {
    const auto rows = 2 + rng.below(40), cols = 2 + rng.below(40);
    const int target = 1 + static_cast<int>(rng.below(48));
    const auto patch = random_patch(rows, cols, rng);
    const auto a = bicubic_resize(patch, target);
    const auto b = oracle::naive_resize(patch, target);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::fabs(a.data()[i] - b.data()[i]));
    CHECK(worst <= 1e-9);
  }
}

TEST_CASE("resize reproduces constants and linear ramps") {
  Grid<double> flat(13, 7);
  for (auto& v : flat.data()) v = 77.25;
  for (int t : {3, 7, 20, 64}) {
    const auto out = bicubic_resize(flat, t);
    for (double v : out.data()) CHECK(std::fabs(v - 77.25) <= 1e-9);
  }
  // Ramp in the interior region where edge clamping plays no part.
  const std::size_t n = 40;
  Grid<double> ramp(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) ramp(r, c) = 10.0 + 2.0 * r + 3.0 * c;
  }
  for (int t : {20, 80}) {
    const auto out = bicubic_resize(ramp, t);
    const double s = static_cast<double>(n) / t;
    for (int oy = 0; oy < t; ++oy) {
      for (int ox = 0; ox < t; ++ox) {
        const double fy = (oy + 0.5) * s - 0.5, fx = (ox + 0.5) * s - 0.5;
        if (fy < 1.0 || fx < 1.0 || fy > n - 3.0 || fx > n - 3.0) continue;
        CHECK(std::fabs(out(oy, ox) - (10.0 + 2.0 * fy + 3.0 * fx)) <= 1e-9);
      }
    }
  }
  CHECK_THROWS_AS(bicubic_resize(Grid<double>(1, 5), 4), Error);
}

TEST_CASE("resize output is clamped to the pixel range") {
  Grid<double> step(8, 8);
  for (std::size_t r = 0; r < 8; ++r) {
    for (std::size_t c = 0; c < 8; ++c) step(r, c) = c < 4 ? 0.0 : 255.0;
  }
  const auto out = bicubic_resize(step, 29);
  for (double v : out.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 255.0);
  }
}

TEST_CASE("network input mapping") {
  const auto sym = spec_of("inceptionv3.json");
  CHECK(sym.input_size == 299);
  Grid<double> px(299, 299);
  px(0, 0) = 255;
  px(0, 1) = 0;
  px(0, 2) = 127.5;
  const Image3 a = to_network_input(px, sym);
  for (int ch = 0; ch < 3; ++ch) {
    CHECK(a.channels[ch](0, 0) == 1.0);
    CHECK(a.channels[ch](0, 1) == -1.0);
    CHECK(a.channels[ch](0, 2) == 0.0);
  }
  CHECK(a.channels[0] == a.channels[1]);
  CHECK(a.channels[1] == a.channels[2]);

  const auto vgg = spec_of("vgg19.json");
  CHECK(vgg.input_size == 224);
  Grid<double> gray(224, 224);
  for (auto& v : gray.data()) v = 128.0;
  const Image3 b = to_network_input(gray, vgg);
  CHECK(b.channels[0](5, 5) == doctest::Approx(128.0 - 123.68));
  CHECK(b.channels[1](5, 5) == doctest::Approx(128.0 - 116.779));
  CHECK(b.channels[2](5, 5) == doctest::Approx(128.0 - 103.939));

  auto bgr = vgg;
  bgr.channel_order = ChannelOrder::kBgr;
  const Image3 c = to_network_input(gray, bgr);
  CHECK(c.channels[0](0, 0) == doctest::Approx(128.0 - 103.939));
  CHECK(c.channels[2](0, 0) == doctest::Approx(128.0 - 123.68));

  CHECK_THROWS_AS(to_network_input(Grid<double>(10, 10), vgg), Error);
}

TEST_CASE("preprocess spec validation") {
  CHECK_THROWS_AS(parse_preprocess_spec(R"({"name":"x","input_size":0,"mode":"scale_symmetric"})"), Error);
  CHECK_THROWS_AS(parse_preprocess_spec(R"({"name":"x","input_size":8,"mode":"mean_subtract"})"), Error);
  CHECK_THROWS_AS(parse_preprocess_spec(R"({"name":"x","input_size":8,"mode":"sharpen"})"), Error);
  CHECK_NOTHROW(parse_preprocess_spec(R"({"name":"x","input_size":8,"mode":"scale_symmetric"})"));
}

TEST_CASE("variant enumeration counts, order and monotonicity") {
  const Dataset ds = synth_dataset(1, 1, fixtures::small_phantom(), 3);
  const auto& lesion = ds.lesions[0];
  const auto spec = spec_of("baseline.json");
  auto plan = [](std::set<double> t, std::set<double> m) {
    VariantPlan p;
    p.thresholds_db = std::move(t);
    p.margins_mm = std::move(m);
    return p;
  };
  CHECK(enumerate_variants(lesion, plan({40}, {2, 5, 10}), spec).size() == 6);
  CHECK(enumerate_variants(lesion, plan({40}, {5}), spec).size() == 2);
  const auto all = enumerate_variants(lesion, plan({40, 50, 60}, {2, 5, 10}), spec);
  REQUIRE(all.size() == 18);
  CHECK(all[0].scan_index == 0);
  CHECK(all[0].margin_mm == 2);
  CHECK(all[0].threshold_db == 40);
  CHECK(all[1].threshold_db == 50);
  CHECK(all[3].margin_mm == 5);
  CHECK(all[9].scan_index == 1);
  for (std::size_t i = 0; i < all.size(); i += 3) {
    const auto mean = [](const Image3& im) {
      double s = 0;
      for (double v : im.channels[0].data()) s += v;
      return s / static_cast<double>(im.channels[0].size());
    };
    CHECK(mean(all[i].pixels) <= mean(all[i + 2].pixels));
    CHECK(all[i].pixels.channels[0] == all[i].pixels.channels[2]);
  }
  const auto again = enumerate_variants(lesion, plan({40, 50, 60}, {2, 5, 10}), spec);
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(again[i].pixels.channels[0] == all[i].pixels.channels[0]);
  CHECK_THROWS_AS(enumerate_variants(lesion, plan({}, {2}), spec), Error);
}
