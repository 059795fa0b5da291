#include "doctest.h"

#include <cmath>
#include <numbers>

#include "bmode/error.hpp"
#include "bmode/reconstruct.hpp"
#include "bmode/rng.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace bmode;

namespace {

std::vector<double> random_line(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  return x;
}

double max_rel_error(const std::vector<double>& got, const std::vector<double>& want) {
  double scale = 0.0, err = 0.0;
  for (double w : want) scale = std::max(scale, std::fabs(w));
  for (std::size_t i = 0; i < got.size(); ++i) err = std::max(err, std::fabs(got[i] - want[i]));
  return err / scale;
}

}  // namespace

TEST_CASE("tone envelope equals its amplitude away from the edges") {
  std::vector<double> x(2048);
  for (std::size_t n = 0; n < x.size(); ++n) x[n] = 3.0 * std::sin(2.0 * std::numbers::pi * 5e6 * n / 40e6);
  const auto env = analytic_envelope(x);
  double worst = 0.0;
  for (std::size_t n = 102; n < 2048 - 102; ++n) worst = std::max(worst, std::fabs(env[n] - 3.0) / 3.0);
  CHECK(worst < 1e-3);
}

TEST_CASE("constant line envelope is its magnitude") {
  for (double c : {2.5, -1.25, 0.0}) {
    const auto env = analytic_envelope(std::vector<double>(100, c));
    for (double e : env) CHECK(e == doctest::Approx(std::fabs(c)).epsilon(1e-14));
  }
}

TEST_CASE("random lines match the direct DFT oracle") {
  for (std::size_t n : {2u, 3u, 17u, 64u, 255u, 256u, 1000u}) {
    const auto x = random_line(n, n);
    CHECK(max_rel_error(analytic_envelope(x), oracle::dft_envelope(x)) < 1e-6);
  }
}

TEST_CASE("envelope is invariant to sign flip") {
  auto x = random_line(777, 3);
  const auto a = analytic_envelope(x);
  for (auto& v : x) v = -v;
  const auto b = analytic_envelope(x);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::fabs(a[i] - b[i]) <= 1e-12 * std::max(1.0, a[i]));
}

TEST_CASE("envelope rejects short or non-finite input") {
  CHECK_THROWS_AS(analytic_envelope(std::vector<double>{1.0}), Error);
  CHECK_THROWS_AS(analytic_envelope(std::vector<double>{1.0, NAN}), Error);
  CHECK_THROWS_AS(analytic_envelope(std::vector<double>{1.0, INFINITY}), Error);
}

TEST_CASE("log compression fixed points") {
  CHECK(log_compress(4.0, 4.0) == 0.0);
  CHECK(log_compress(0.4, 4.0) == doctest::Approx(-20.0).epsilon(1e-14));
  CHECK(log_compress(0.0, 4.0) == kSilentDb);
  CHECK(quantize(log_compress(0.0, 4.0), 40) == 0);
}

TEST_CASE("quantizer fixed points") {
  CHECK(quantize(0.0, 40) == 255);
  CHECK(quantize(-40.0, 40) == 0);
  CHECK(quantize(-55.0, 40) == 0);
  CHECK(quantize(-20.0, 40) == 128);
  CHECK(quantize(5.0, 40) == 255);
  for (double t : {40.0, 50.0, 60.0}) {
    CHECK(quantize(0.0, t) == 255);
    CHECK(quantize(-t, t) == 0);
    CHECK(quantize(-t / 2.0, t) == 128);
  }
}

TEST_CASE("quantizer is monotone in dB and in threshold") {
  for (double t : {40.0, 50.0, 60.0}) {
    int prev = -1;
    for (int i = 0; i <= 10000; ++i) {
      const double db = -80.0 + 85.0 * i / 10000.0;
      const int q = quantize(db, t);
      CHECK(q >= prev);
      prev = q;
    }
  }
  for (int i = 1; i <= 1000; ++i) {
    const double db = -70.0 * i / 1000.0;
    CHECK(quantize(db, 40) <= quantize(db, 50));
    CHECK(quantize(db, 50) <= quantize(db, 60));
  }
}

TEST_CASE("bright tone column against faint noise") {
  auto frame = fixtures::noise_frame(256, 64, 4);
  for (auto& v : frame.samples.data()) v *= 1e-4;
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    frame.samples(r, 10) = 2.0 * std::sin(2.0 * std::numbers::pi * 5e6 * r / 40e6);
  }
  CompressionConfig cfg;
  cfg.threshold_db = 60;
  const auto img = reconstruct_bmode(frame, cfg);
  for (std::size_t r = 26; r < 230; ++r) {
    CHECK(img.pixels(r, 10) >= 250);
    CHECK(img.pixels(r, 40) <= 10);
  }
}

TEST_CASE("fewer pixels survive at a lower threshold") {
  const auto frame = fixtures::noise_frame(128, 96, 8);
  CompressionConfig c40, c60;
  c40.threshold_db = 40;
  c60.threshold_db = 60;
  const auto a = reconstruct_bmode(frame, c40);
  const auto b = reconstruct_bmode(frame, c60);
  const auto zeros = [](const Grid<std::uint8_t>& g) { return std::count(g.data().begin(), g.data().end(), 0); };
  CHECK(zeros(a.pixels) >= zeros(b.pixels));
  CHECK(reconstruct_bmode(frame, c40).pixels == a.pixels);
}

TEST_CASE("per-frame normalization makes the image scale invariant") {
  const auto frame = fixtures::noise_frame(256, 80, 21);
  CompressionConfig cfg;
  const auto ref = reconstruct_bmode(frame, cfg);
  for (double k : {0.5, 3.0, 10.0}) {
    auto scaled = frame;
    for (auto& v : scaled.samples.data()) v *= k;
    CHECK(reconstruct_bmode(scaled, cfg).pixels == ref.pixels);
  }
}

TEST_CASE("reconstruction matches a scalar reimplementation") {
  const auto frame = fixtures::noise_frame(200, 70, 33);
  for (double t : {40.0, 50.0, 60.0}) {
    CompressionConfig cfg;
    cfg.threshold_db = t;
    const auto img = reconstruct_bmode(frame, cfg);
    Grid<double> env(frame.rows(), frame.cols());
    double a_max = 0.0;
    for (std::size_t c = 0; c < frame.cols(); ++c) {
      std::vector<double> line(frame.rows());
      for (std::size_t r = 0; r < frame.rows(); ++r) line[r] = frame.samples(r, c);
      const auto e = analytic_envelope(line);
      for (std::size_t r = 0; r < frame.rows(); ++r) {
        env(r, c) = e[r];
        a_max = std::max(a_max, e[r]);
      }
    }
    for (std::size_t r = 0; r < frame.rows(); ++r) {
      for (std::size_t c = 0; c < frame.cols(); ++c) {
        REQUIRE(img.pixels(r, c) == oracle::pixel_value(env(r, c), a_max, t));
      }
    }
    CHECK(img.geometry == frame.geometry);
    CHECK(img.threshold_db == t);
  }
}

TEST_CASE("override and dataset scopes control the normalization") {
  const auto frame = fixtures::noise_frame(64, 64, 2);
  CompressionConfig cfg;
  cfg.a_max_override = 1e9;
  const auto dark = reconstruct_bmode(frame, cfg);
  CHECK(std::all_of(dark.pixels.data().begin(), dark.pixels.data().end(), [](auto p) { return p == 0; }));
  cfg.a_max_override.reset();
  cfg.a_max_scope = AmaxScope::kPerDataset;
  CHECK_THROWS_AS(reconstruct_bmode(frame, cfg), Error);
  CHECK_NOTHROW(reconstruct_bmode(frame, cfg, 10.0));
  cfg.threshold_db = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("all-zero frame is degenerate") {
  auto frame = fixtures::noise_frame(64, 64, 1);
  for (auto& v : frame.samples.data()) v = 0.0;
  try {
    reconstruct_bmode(frame, CompressionConfig{});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDegenerate);
  }
}
