#include "doctest.h"

#include "bmode/data_io.hpp"
#include "bmode/error.hpp"
#include "bmode/mat5.hpp"
#include "bmode/rng.hpp"
#include "fixtures.hpp"

using namespace bmode;

namespace {

std::vector<std::uint8_t> fixture(const char* name) {
  return read_file_bytes(fixtures::data_dir() / name);
}

void check_rf(const Mat5File& f) {
  const MatArray& rf = f.get("rf");
  CHECK(rf.source_class == MatClass::kDouble);
  REQUIRE(rf.values.rows() == 3);
  REQUIRE(rf.values.cols() == 2);
  CHECK(rf.values(0, 0) == 1.0);
  CHECK(rf.values(0, 1) == 2.0);
  CHECK(rf.values(1, 0) == 3.0);
  CHECK(rf.values(2, 1) == 6.0);
}

}  // namespace

TEST_CASE("uncompressed 3x2 double matrix matches the writer") {
  check_rf(parse_mat5(fixture("rf_plain.mat")));
}

TEST_CASE("zlib-compressed element matches the writer") {
  check_rf(parse_mat5(fixture("rf_compressed.mat")));
}

TEST_CASE("endian indicator selects byte order") {
  auto bytes = fixture("rf_plain.mat");
  CHECK(bytes[126] == 'I');
  CHECK(bytes[127] == 'M');
  bytes[126] = 'X';
  CHECK_THROWS_AS(parse_mat5(bytes), Error);
}

TEST_CASE("int16 and single arrays convert; others are skipped with warnings") {
  const Mat5File f = parse_mat5(fixture("mixed_types.mat"));
  const MatArray& counts = f.get("counts");
  CHECK(counts.source_class == MatClass::kInt16);
  REQUIRE(counts.values.cols() == 3);
  CHECK(counts.values(0, 0) == -3.0);
  CHECK(counts.values(0, 2) == 32767.0);
  const MatArray& gain = f.get("gain");
  CHECK(gain.source_class == MatClass::kSingle);
  REQUIRE(gain.values.rows() == 2);
  CHECK(gain.values(1, 0) == 1.5);

  CHECK(f.skipped.count("meta") == 1);
  CHECK(f.skipped.count("iq") == 1);
  CHECK(f.skipped.count("cube") == 1);
  CHECK(f.warnings.size() >= 3);
  try {
    f.get("meta");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("meta") != std::string::npos);
  }
  CHECK_THROWS_AS(f.get("absent"), Error);
}

TEST_CASE("empty and short input is a bad-header error") {
  CHECK_THROWS_AS(parse_mat5({}), Error);
  const std::vector<std::uint8_t> shortish(100, 0);
  CHECK_THROWS_AS(parse_mat5(shortish), Error);
}

TEST_CASE("truncated element is an error") {
  auto bytes = fixture("rf_plain.mat");
  bytes.resize(bytes.size() - 10);
  CHECK_THROWS_AS(parse_mat5(bytes), Error);
}

TEST_CASE("mutated and truncated files never crash") {
  const std::vector<std::vector<std::uint8_t>> seeds = {
      fixture("rf_plain.mat"), fixture("rf_compressed.mat"), fixture("mixed_types.mat")};
  Rng rng(99);
  int parsed = 0, rejected = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    auto bytes = seeds[trial % seeds.size()];
    const int flips = 1 + static_cast<int>(rng.below(8));
    for (int i = 0; i < flips; ++i) {
      const auto pos = 128 + rng.below(bytes.size() - 128);
      bytes[pos] = static_cast<std::uint8_t>(rng.below(256));
    }
    if (rng.below(4) == 0) bytes.resize(128 + rng.below(bytes.size() - 128));
    try {
      parse_mat5(bytes);
      ++parsed;
    } catch (const Error&) {
      ++rejected;
    }
  }
  CHECK(parsed + rejected == 3000);
}
