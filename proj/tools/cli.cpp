#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "bmode/classify.hpp"
#include "bmode/data_io.hpp"
#include "bmode/evaluate.hpp"
#include "bmode/features.hpp"
#include "bmode/mat5.hpp"
#include "bmode/parallel.hpp"
#include "bmode/phantom.hpp"
#include "bmode/prep.hpp"
#include "bmode/reconstruct.hpp"
#include "bmode/rng.hpp"

#ifndef BMODE_CONFIG_DIR
#define BMODE_CONFIG_DIR "config"
#endif

namespace bmode::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::set<double> parse_number_set(const std::string& text, const std::string& what) {
  std::set<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      require(used == item.size() && v > 0, "bad value");
      out.insert(v);
    } catch (const std::exception&) {
      fail(ErrorKind::kInvalidInput, "invalid " + what + " list '" + text + "'");
    }
  }
  require(!out.empty(), what + " list is empty");
  return out;
}

std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

AmaxScope parse_scope(const std::string& text) {
  if (text == "frame") return AmaxScope::kPerFrame;
  if (text == "dataset") return AmaxScope::kPerDataset;
  fail(ErrorKind::kInvalidInput, "unknown --amax-scope '" + text + "' (frame|dataset)");
}

const char* network_for(const std::string& extractor) {
  if (extractor == "inception") return "inceptionv3";
  if (extractor == "vgg") return "vgg19";
  return "baseline";
}

struct ExtractorChoice {
  ExtractorSpec spec;
  NetworkPreprocessSpec preprocess;
};

ExtractorChoice resolve_extractor(const std::string& name, const std::string& model_manifest,
                                  const std::string& models_dir, const std::string& preprocess_path) {
  require(name == "baseline" || name == "inception" || name == "vgg",
          "unknown extractor '" + name + "' (baseline|inception|vgg)");
  ExtractorChoice choice;
  const std::string network = network_for(name);
  if (name == "baseline") {
    choice.spec = baseline_extractor_spec();
  } else {
    const fs::path manifest = model_manifest.empty()
                                  ? fs::path(models_dir) / (network + ".manifest.json")
                                  : fs::path(model_manifest);
    choice.spec = load_model_manifest(manifest);
  }
  const fs::path spec_path = preprocess_path.empty()
                                 ? fs::path(BMODE_CONFIG_DIR) / "preprocess" / (network + ".json")
                                 : fs::path(preprocess_path);
  choice.preprocess = load_preprocess_spec(spec_path);
  return choice;
}

void write_run_config(const fs::path& out_dir, const std::string& command, const json& params) {
  fs::create_directories(out_dir);
  const json doc = {{"command", command}, {"parameters", params}};
  write_text_file(out_dir / "run_config.json", doc.dump(2) + "\n");
}

// --- convert -------------------------------------------------------------

struct ConvertArgs {
  std::string mat;
  std::string lesion_id, patient_id, label;
  std::string rf_vars = "rf1,rf2";
  std::string roi_vars = "roi1,roi2";
  double sampling_rate_hz = 0.0;
  double speed = 1540.0;
  double lateral_mm = 0.0;
  std::string out;
};

int do_convert(const ConvertArgs& a) {
  const auto bytes = read_file_bytes(a.mat);
  const Mat5File mat = parse_mat5(bytes);
  for (const auto& w : mat.warnings) std::cerr << "warning: " << a.mat << ": " << w << "\n";
  const auto rf_names = split(a.rf_vars);
  const auto roi_names = split(a.roi_vars);
  require(rf_names.size() == 2 && roi_names.size() == 2, "--rf-vars and --roi-vars need two names each");
  const Label label = parse_label(a.label);
  const PixelGeometry geometry = PixelGeometry::from_acquisition(a.sampling_rate_hz, a.lateral_mm, a.speed);

  const fs::path out(a.out);
  fs::create_directories(out);
  const fs::path manifest_path = out / "manifest.json";
  json doc = {{"name", out.filename().string().empty() ? "converted" : out.filename().string()},
              {"lesions", json::array()}};
  if (fs::exists(manifest_path)) {
    const auto existing = read_file_bytes(manifest_path);
    doc = json::parse(existing.begin(), existing.end());
  }
  for (const auto& l : doc.at("lesions")) {
    require(l.at("lesion_id").get<std::string>() != a.lesion_id,
            "duplicate lesion_id '" + a.lesion_id + "' in " + manifest_path.string());
  }

  json scans = json::array();
  for (int s = 0; s < 2; ++s) {
    RfFrame frame;
    frame.samples = mat.get(rf_names[s]).values;
    frame.geometry = geometry;
    frame.scan_id = a.lesion_id + "_s" + std::to_string(s);
    frame.validate();
    const Grid<double>& roi = mat.get(roi_names[s]).values;
    RoiMask mask(roi.rows(), roi.cols());
    for (std::size_t i = 0; i < roi.size(); ++i) mask.data()[i] = roi.data()[i] != 0.0 ? 1 : 0;
    try {
      validate_mask(mask, frame.rows(), frame.cols());
    } catch (const Error& e) {
      fail(e.kind(), "lesion '" + a.lesion_id + "' (" + a.mat + "): " + e.what());
    }
    std::vector<std::uint8_t> rf;
    for (double v : frame.samples.data()) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int b = 0; b < 4; ++b) rf.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
    const std::string stem = a.lesion_id + "_s" + std::to_string(s);
    write_file_bytes(out / (stem + ".f32"), rf);
    write_file_bytes(out / (stem + ".u8"), mask.data());
    scans.push_back({{"rf", stem + ".f32"},
                     {"shape", {frame.rows(), frame.cols()}},
                     {"mask", stem + ".u8"},
                     {"scan_id", frame.scan_id},
                     {"geometry",
                      {{"sampling_rate_hz", geometry.sampling_rate_hz},
                       {"speed_of_sound_m_s", geometry.speed_of_sound_m_s},
                       {"lateral_mm_per_line", geometry.lateral_mm_per_line}}}});
  }
  doc["lesions"].push_back({{"lesion_id", a.lesion_id},
                            {"patient_id", a.patient_id},
                            {"label", label_name(label)},
                            {"scans", scans}});
  write_text_file(manifest_path, doc.dump(2) + "\n");
  write_run_config(out, "convert",
                   {{"mat", a.mat}, {"lesion_id", a.lesion_id}, {"patient_id", a.patient_id},
                    {"label", a.label}, {"rf_vars", a.rf_vars}, {"roi_vars", a.roi_vars},
                    {"sampling_rate_hz", a.sampling_rate_hz}, {"speed_of_sound_m_s", a.speed},
                    {"lateral_mm_per_line", a.lateral_mm}});
  std::cout << "appended lesion " << a.lesion_id << " to " << manifest_path.string() << "\n";
  return 0;
}

// --- phantom -------------------------------------------------------------

struct PhantomArgs {
  int benign = 60, malignant = 40;
  std::uint64_t seed = 42;
  int rows = 1024, cols = 256;
  std::string out;
};

int do_phantom(const PhantomArgs& a, int workers) {
  PhantomConfig config;
  config.rows = a.rows;
  config.cols = a.cols;
  const Dataset ds = synth_dataset(a.benign, a.malignant, config, a.seed, workers);
  const fs::path manifest = write_dataset(ds, a.out);
  write_run_config(a.out, "phantom",
                   {{"benign", a.benign}, {"malignant", a.malignant}, {"seed", a.seed},
                    {"rows", a.rows}, {"cols", a.cols}, {"workers", workers}});
  std::cout << "wrote " << ds.lesions.size() << " lesions to " << manifest.string() << "\n";
  return 0;
}

// --- reconstruct ---------------------------------------------------------

struct ReconstructArgs {
  std::string in;
  double threshold = 50.0;
  std::string scope = "frame";
  std::string out;
};

int do_reconstruct(const ReconstructArgs& a, int workers) {
  const Dataset ds = load_dataset(a.in);
  CompressionConfig config;
  config.threshold_db = a.threshold;
  config.a_max_scope = parse_scope(a.scope);
  config.validate();
  std::optional<double> ds_max;
  if (config.a_max_scope == AmaxScope::kPerDataset) ds_max = dataset_a_max(ds);

  std::vector<std::pair<const LesionRecord*, std::size_t>> jobs;
  for (const auto& l : ds.lesions) {
    for (std::size_t s = 0; s < l.scans.size(); ++s) jobs.emplace_back(&l, s);
  }
  fs::create_directories(a.out);
  char suffix[32];
  std::snprintf(suffix, sizeof suffix, "_%gdB.pgm", a.threshold);
  parallel_for(jobs.size(), workers, [&](std::size_t j) {
    const auto& [lesion, s] = jobs[j];
    BModeImage img = reconstruct_bmode(lesion->scans[s].frame, config, ds_max);
    write_pgm(img.pixels, fs::path(a.out) / (lesion->scans[s].frame.scan_id + suffix));
  });
  write_run_config(a.out, "reconstruct",
                   {{"in", a.in}, {"threshold_db", a.threshold}, {"amax_scope", a.scope}, {"workers", workers}});
  std::cout << "wrote " << jobs.size() << " B-mode images to " << a.out << "\n";
  return 0;
}

// --- extract / run-grid --------------------------------------------------

struct GridArgs {
  std::string data;
  std::string extractor = "baseline";
  std::string model_manifest;
  std::string models_dir = "models";
  std::string preprocess;
  std::string thresholds = "40,50,60";
  std::string margins = "2,5,10";
  std::string scope = "frame";
  std::string train_sets;
  std::string test_sets;
  int folds = 5;
  std::uint64_t seed = 42;
  double c = 1.0;
  double gamma = 0.001;
  double tolerance = 1e-6;
  int max_iterations = 20000;
  std::string cache;
  std::string out;
};

json grid_params(const GridArgs& a, int workers) {
  return {{"data", a.data},           {"extractor", a.extractor},   {"model_manifest", a.model_manifest},
          {"models_dir", a.models_dir}, {"preprocess", a.preprocess}, {"thresholds", a.thresholds},
          {"margins", a.margins},     {"amax_scope", a.scope},      {"train_sets", a.train_sets},
          {"test_sets", a.test_sets}, {"folds", a.folds},           {"seed", a.seed},
          {"c", a.c},                 {"gamma", a.gamma},           {"tolerance", a.tolerance},
          {"max_iterations", a.max_iterations}, {"cache", a.cache}, {"workers", workers}};
}

ExperimentGrid build_grid(const GridArgs& a, const Dataset& ds, int workers) {
  const auto thresholds = parse_number_set(a.thresholds, "threshold");
  const auto margins = parse_number_set(a.margins, "margin");
  const ExtractorChoice choice = resolve_extractor(a.extractor, a.model_manifest, a.models_dir, a.preprocess);
  ExperimentGrid grid = default_grid(thresholds, margins, choice.spec, choice.preprocess,
                                     make_folds(ds, a.folds, derive_seed(a.seed, "folds")));
  if (!a.train_sets.empty()) {
    grid.train_sets.clear();
    for (const auto& s : split(a.train_sets)) grid.train_sets.push_back(parse_recon_set(s, thresholds));
  }
  if (!a.test_sets.empty()) {
    grid.test_sets.clear();
    for (const auto& s : split(a.test_sets)) grid.test_sets.push_back(parse_recon_set(s, thresholds));
  }
  // Keep only Bland-Altman pairs whose cells survive custom set lists.
  std::erase_if(grid.bland_altman_pairs, [&](const BlandAltmanPair& p) {
    auto has = [&](const std::vector<ReconSet>& sets, const std::string& name) {
      return std::any_of(sets.begin(), sets.end(), [&](const ReconSet& s) { return s.name == name; });
    };
    return !(has(grid.train_sets, p.a.train_set) && has(grid.test_sets, p.a.test_set) &&
             has(grid.train_sets, p.b.train_set) && has(grid.test_sets, p.b.test_set));
  });
  grid.a_max_scope = parse_scope(a.scope);
  grid.workers = workers;
  grid.validate();
  return grid;
}

fs::path cache_path(const GridArgs& a) {
  return a.cache.empty() ? fs::path(a.out) / ("features_" + a.extractor + ".bin") : fs::path(a.cache);
}

FeatureCache open_cache(const fs::path& path) {
  return fs::exists(path) ? FeatureCache::load(path) : FeatureCache{};
}

int do_extract(const GridArgs& a, int workers) {
  const Dataset ds = load_dataset(a.data);
  const ExperimentGrid grid = build_grid(a, ds, workers);
  const fs::path path = cache_path(a);
  FeatureCache cache = open_cache(path);
  compute_features(ds, grid, &cache);
  fs::create_directories(a.out);
  cache.save(path);
  write_run_config(a.out, "extract", grid_params(a, workers));
  std::cout << "feature cache " << path.string() << " holds " << cache.size() << " vectors\n";
  return 0;
}

int do_run_grid(const GridArgs& a, int workers) {
  const Dataset ds = load_dataset(a.data);
  const ExperimentGrid grid = build_grid(a, ds, workers);
  SvmConfig svm;
  svm.c = a.c;
  svm.gamma = a.gamma;
  svm.tolerance = a.tolerance;
  svm.max_iterations = a.max_iterations;
  svm.seed = derive_seed(a.seed, "classify");
  if (svm.gamma != 0.0) {
    std::cerr << "warning: gamma=" << svm.gamma << " is recorded but unused by the linear kernel\n";
  }
  const fs::path path = cache_path(a);
  FeatureCache cache = open_cache(path);
  const EvalReport report = run_experiment(ds, grid, svm, &cache);
  fs::create_directories(a.out);
  cache.save(path);
  emit_report(report, a.out);
  write_run_config(a.out, "run-grid", grid_params(a, workers));
  std::cout << grid_csv(report);
  return 0;
}

// --- report --------------------------------------------------------------

int do_report(const std::string& in, const std::string& out) {
  const auto bytes = read_file_bytes(in);
  const EvalReport report = report_from_json(std::string(bytes.begin(), bytes.end()));
  emit_report(report, out);
  write_run_config(out, "report", {{"in", in}});
  std::cout << grid_csv(report);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"B-mode reconstruction and lesion-classification toolkit", "bmode"};
  app.require_subcommand(1);
  int workers = 0;
  app.add_option("--workers", workers, "worker threads (0: BMODE_WORKERS or all cores)");

  ConvertArgs conv;
  auto* convert = app.add_subcommand("convert", "append one lesion from a MAT-v5 file to a native dataset");
  convert->add_option("--mat", conv.mat, "MAT-v5 file")->required();
  convert->add_option("--lesion-id", conv.lesion_id)->required();
  convert->add_option("--patient-id", conv.patient_id)->required();
  convert->add_option("--label", conv.label, "benign|malignant")->required();
  convert->add_option("--rf-vars", conv.rf_vars, "MAT variable names of the two RF scans")->capture_default_str();
  convert->add_option("--roi-vars", conv.roi_vars, "MAT variable names of the two ROI masks")->capture_default_str();
  convert->add_option("--sampling-rate", conv.sampling_rate_hz, "Hz")->required();
  convert->add_option("--speed", conv.speed, "speed of sound, m/s")->capture_default_str();
  convert->add_option("--lateral-mm", conv.lateral_mm, "mm per scan line")->required();
  convert->add_option("--out", conv.out, "dataset directory")->required();

  PhantomArgs ph;
  auto* phantom = app.add_subcommand("phantom", "generate a synthetic speckle dataset");
  phantom->add_option("--benign", ph.benign)->capture_default_str();
  phantom->add_option("--malignant", ph.malignant)->capture_default_str();
  phantom->add_option("--seed", ph.seed)->capture_default_str();
  phantom->add_option("--rows", ph.rows)->capture_default_str();
  phantom->add_option("--cols", ph.cols)->capture_default_str();
  phantom->add_option("--out", ph.out)->required();

  ReconstructArgs rec;
  auto* reconstruct = app.add_subcommand("reconstruct", "write one PGM per scan");
  reconstruct->add_option("--in", rec.in, "dataset manifest")->required();
  reconstruct->add_option("--threshold", rec.threshold, "dynamic range, dB")->capture_default_str();
  reconstruct->add_option("--amax-scope", rec.scope, "frame|dataset")->capture_default_str();
  reconstruct->add_option("--out", rec.out)->required();

  GridArgs ga;
  auto add_grid_options = [&ga](CLI::App* sub) {
    sub->add_option("--data", ga.data, "dataset manifest")->required();
    sub->add_option("--extractor", ga.extractor, "baseline|inception|vgg")->capture_default_str();
    sub->add_option("--model-manifest", ga.model_manifest, "exported model manifest (inception|vgg)");
    sub->add_option("--models-dir", ga.models_dir, "directory of <network>.manifest.json")->capture_default_str();
    sub->add_option("--preprocess", ga.preprocess, "preprocess spec JSON (default: shipped config)");
    sub->add_option("--thresholds", ga.thresholds, "comma-separated dB levels")->capture_default_str();
    sub->add_option("--margins", ga.margins, "comma-separated mm margins")->capture_default_str();
    sub->add_option("--amax-scope", ga.scope, "frame|dataset")->capture_default_str();
    sub->add_option("--folds", ga.folds)->capture_default_str();
    sub->add_option("--seed", ga.seed)->capture_default_str();
    sub->add_option("--cache", ga.cache, "feature cache file (default: <out>/features_<extractor>.bin)");
    sub->add_option("--out", ga.out)->required();
  };
  auto* extract = app.add_subcommand("extract", "fill the feature cache for every variant");
  add_grid_options(extract);
  auto* grid = app.add_subcommand("run-grid", "Train_X x Test_Y cross-validated grid");
  add_grid_options(grid);
  grid->add_option("--train-sets", ga.train_sets, "e.g. 40,50,60,ALL");
  grid->add_option("--test-sets", ga.test_sets, "e.g. 40,50,60,ALL");
  grid->add_option("--c", ga.c, "SVM cost")->capture_default_str();
  grid->add_option("--gamma", ga.gamma, "recorded only; linear kernel")->capture_default_str();
  grid->add_option("--tolerance", ga.tolerance)->capture_default_str();
  grid->add_option("--max-iter", ga.max_iterations)->capture_default_str();

  std::string report_in, report_out;
  auto* report = app.add_subcommand("report", "re-emit tables and plots from report.json");
  report->add_option("--in", report_in, "report.json from run-grid")->required();
  report->add_option("--out", report_out)->required();

  try {
    std::vector<std::string> rest(args.begin() + (args.empty() ? 0 : 1), args.end());
    std::reverse(rest.begin(), rest.end());
    app.parse(rest);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    const int w = resolve_workers(workers);
    if (*convert) return do_convert(conv);
    if (*phantom) return do_phantom(ph, w);
    if (*reconstruct) return do_reconstruct(rec, w);
    if (*extract) return do_extract(ga, w);
    if (*grid) return do_run_grid(ga, w);
    if (*report) return do_report(report_in, report_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::kInvalidInput ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace bmode::cli
