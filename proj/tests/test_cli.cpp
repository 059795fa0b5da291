#include "doctest.h"

#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "bmode/data_io.hpp"
#include "cli.hpp"
#include "fixtures.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "bmode");
  return bmode::cli::run(args);
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(run({}) == 1);
  CHECK(run({"run-grid", "--out", "x"}) == 1);
  CHECK(run({"phantom", "--benign", "2", "--out", "x", "--frobnicate"}) == 1);
  CHECK(run({"unknown-command"}) == 1);
}

TEST_CASE("phantom, reconstruct, run-grid and report") {
  const auto root = fixtures::scratch("cli_flow");
  const auto ds = (root / "ds").string();
  REQUIRE(run({"phantom", "--benign", "5", "--malignant", "5", "--seed", "7", "--rows", "160", "--cols", "80",
               "--out", ds}) == 0);
  CHECK(fs::exists(fs::path(ds) / "manifest.json"));
  CHECK(read_json(fs::path(ds) / "run_config.json")["command"] == "phantom");
  const auto manifest = (fs::path(ds) / "manifest.json").string();

  const auto pgm = (root / "pgm").string();
  REQUIRE(run({"reconstruct", "--in", manifest, "--threshold", "40", "--out", pgm}) == 0);
  CHECK(fs::exists(fs::path(pgm) / "L0000_s0_40dB.pgm"));
  CHECK(run({"reconstruct", "--in", manifest, "--threshold", "-3", "--out", pgm}) == 1);
  CHECK(run({"reconstruct", "--in", manifest, "--amax-scope", "sometimes", "--out", pgm}) == 1);

  const auto res = (root / "res").string();
  REQUIRE(run({"--workers", "2", "run-grid", "--data", manifest, "--thresholds", "40,60", "--margins", "2",
               "--folds", "3", "--seed", "42", "--out", res}) == 0);
  const std::string csv = slurp(fs::path(res) / "grid.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 9);
  CHECK(fs::exists(fs::path(res) / "features_baseline.bin"));
  const json cfg = read_json(fs::path(res) / "run_config.json");
  CHECK(cfg["parameters"]["seed"] == 42);
  CHECK(cfg["parameters"]["workers"] == 2);

  const auto res1 = (root / "res1").string();
  REQUIRE(run({"--workers", "1", "run-grid", "--data", manifest, "--thresholds", "40,60", "--margins", "2",
               "--folds", "3", "--seed", "42", "--out", res1}) == 0);
  CHECK(slurp(fs::path(res) / "report.json") == slurp(fs::path(res1) / "report.json"));
  CHECK(slurp(fs::path(res) / "grid.csv") == slurp(fs::path(res1) / "grid.csv"));

  const auto rep = (root / "rep").string();
  REQUIRE(run({"report", "--in", (fs::path(res) / "report.json").string(), "--out", rep}) == 0);
  CHECK(slurp(fs::path(rep) / "grid.csv") == csv);

  CHECK(run({"run-grid", "--data", manifest, "--train-sets", "40", "--test-sets", "40,ALL", "--thresholds", "40,60",
             "--margins", "2", "--folds", "3", "--out", (root / "sub").string()}) == 0);
  CHECK(run({"run-grid", "--data", manifest, "--thresholds", "40,abc", "--out", (root / "bad").string()}) == 1);
  CHECK(run({"run-grid", "--data", manifest, "--extractor", "alexnet", "--out", (root / "bad").string()}) == 1);
  CHECK(run({"run-grid", "--data", manifest, "--extractor", "vgg", "--models-dir", (root / "none").string(),
             "--out", (root / "bad").string()}) == 2);
  CHECK(run({"extract", "--data", manifest, "--thresholds", "40", "--margins", "2,5", "--folds", "3", "--out",
             (root / "ext").string()}) == 0);
  CHECK(run({"run-grid", "--data", (root / "missing.json").string(), "--out", (root / "bad").string()}) == 2);
}

TEST_CASE("convert appends MAT lesions to a native dataset") {
  const auto root = fixtures::scratch("cli_convert");
  const auto mat = (fixtures::data_dir() / "lesion.mat").string();
  const auto out = (root / "converted").string();
  auto convert = [&](const std::string& lesion, const std::string& patient, const std::string& label) {
    return run({"convert", "--mat", mat, "--lesion-id", lesion, "--patient-id", patient, "--label", label,
                "--sampling-rate", "40e6", "--lateral-mm", "0.2", "--out", out});
  };
  REQUIRE(convert("A1", "PA", "benign") == 0);
  REQUIRE(convert("A2", "PB", "malignant") == 0);
  CHECK(convert("A2", "PB", "malignant") == 1);
  CHECK(convert("A3", "PC", "probably") == 1);
  const bmode::Dataset ds = bmode::load_dataset(fs::path(out) / "manifest.json");
  CHECK(ds.lesions.size() == 2);
  CHECK(ds.lesions[0].scans[0].frame.rows() == 96);
  CHECK(ds.lesions[0].scans[0].frame.cols() == 80);
  CHECK(ds.lesions[0].scans[0].mask(40, 30) == 1);
  CHECK(ds.lesions[0].scans[0].mask(10, 10) == 0);
  CHECK(run({"convert", "--mat", mat, "--lesion-id", "A4", "--patient-id", "PD", "--label", "benign",
             "--rf-vars", "nope,rf2", "--sampling-rate", "40e6", "--lateral-mm", "0.2", "--out", out}) == 1);
}
