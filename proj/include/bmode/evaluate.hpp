#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "bmode/classify.hpp"
#include "bmode/data_io.hpp"
#include "bmode/features.hpp"
#include "bmode/prep.hpp"

namespace bmode {

struct FoldAssignment {
  int k = 5;
  std::uint64_t seed = 0;
  std::map<std::string, int> fold_of_lesion;

  int fold_of(const std::string& lesion_id) const;
};

// Patient-grouped, class-stratified greedy assignment. Patients are placed in
// order (malignant count desc, benign count desc, patient_id) into the fold
// that minimizes the resulting class-count imbalance; ties are broken by a
// seeded draw.
FoldAssignment make_folds(const Dataset& dataset, int k, std::uint64_t seed);

// Same algorithm on a bare patient structure, for callers without frames.
struct PatientLesions {
  std::string patient_id;
  std::vector<std::pair<std::string, Label>> lesions;  // (lesion_id, label)
};
FoldAssignment make_folds(std::vector<PatientLesions> patients, int k, std::uint64_t seed);

double aggregate_lesion_probability(std::span<const double> variant_probs);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // predict positive when score >= threshold
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
};

struct RocCurve {
  std::vector<RocPoint> points;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels);
double auc(std::span<const double> scores, std::span<const int> labels);
double trapezoid_area(const RocCurve& curve);

struct OperatingPoint {
  double sensitivity = 0.0;
  double specificity = 0.0;
  double accuracy = 0.0;
  double threshold = 0.0;
};

// Curve point closest to (0, 1); ties go to higher sensitivity, then lower
// threshold.
OperatingPoint operating_point(const RocCurve& curve);

struct BlandAltmanStats {
  double mean_diff = 0.0;
  double sd_diff = 0.0;
  double loa_low = 0.0;
  double loa_high = 0.0;
  std::vector<std::pair<double, double>> points;  // (mean, difference)
};

BlandAltmanStats bland_altman(std::span<const double> probs_a, std::span<const double> probs_b);

// A named group of reconstruction thresholds: "40dB" = {40}, "ALL" = all.
struct ReconSet {
  std::string name;
  std::set<double> thresholds_db;

  friend bool operator==(const ReconSet&, const ReconSet&) = default;
};

ReconSet single_threshold_set(double threshold_db);
ReconSet all_thresholds_set(const std::set<double>& thresholds_db);
// Parses "40", "40dB" or "ALL" against the configured thresholds.
ReconSet parse_recon_set(const std::string& text, const std::set<double>& thresholds_db);

struct CellId {
  std::string train_set;
  std::string test_set;

  std::string str() const { return train_set + "->" + test_set; }
  friend bool operator==(const CellId&, const CellId&) = default;
};

struct BlandAltmanPair {
  CellId a;
  CellId b;
};

struct ExperimentGrid {
  std::vector<ReconSet> train_sets;
  std::vector<ReconSet> test_sets;
  std::set<double> thresholds_db;
  std::set<double> margins_mm;
  AmaxScope a_max_scope = AmaxScope::kPerFrame;
  ExtractorSpec extractor;
  NetworkPreprocessSpec preprocess;
  FoldAssignment folds;
  std::vector<BlandAltmanPair> bland_altman_pairs;
  int workers = 1;

  void validate() const;
};

// Default layout: train rows {each threshold, ALL} x test columns
// {each threshold, ALL}; Bland-Altman on lowest vs highest threshold.
ExperimentGrid default_grid(const std::set<double>& thresholds_db, const std::set<double>& margins_mm,
                            const ExtractorSpec& extractor, const NetworkPreprocessSpec& preprocess,
                            FoldAssignment folds);

struct CellResult {
  CellId id;
  double auc = 0.0;
  OperatingPoint op;
  RocCurve roc;
  std::vector<double> lesion_probability;  // aligned with EvalReport::lesion_ids
};

struct BlandAltmanResult {
  CellId a;
  CellId b;
  BlandAltmanStats stats;
};

struct EvalReport {
  std::string dataset_name;
  std::string extractor_id;
  std::vector<std::string> lesion_ids;  // sorted
  std::vector<std::string> patient_ids;
  std::vector<int> labels;
  std::vector<int> lesion_fold;
  std::vector<int> source_model_fold;  // fold held out by the model that scored the lesion
  std::vector<CellResult> cells;
  std::vector<BlandAltmanResult> bland_altman;

  const CellResult& cell(const std::string& train_set, const std::string& test_set) const;
};

// Variant-level feature table for one dataset, keyed by sorted lesion index.
struct FeatureTable {
  std::vector<std::string> lesion_ids;
  // [lesion][variant], variant order as enumerate_variants
  std::vector<std::vector<FeatureKey>> keys;
  std::vector<std::vector<std::vector<double>>> values;
};

FeatureTable compute_features(const Dataset& dataset, const ExperimentGrid& grid,
                              FeatureCache* cache = nullptr);

EvalReport run_experiment(const Dataset& dataset, const ExperimentGrid& grid,
                          const SvmConfig& svm_config, FeatureCache* cache = nullptr);

// Same protocol on precomputed features.
EvalReport run_experiment(const Dataset& dataset, const ExperimentGrid& grid,
                          const SvmConfig& svm_config, const FeatureTable& features);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& json_text);

// grid.csv, lesion_probabilities.csv, summary.json, report.json,
// roc_<cell>.svg per cell, bland_altman_<a>_vs_<b>.svg per pair.
void emit_report(const EvalReport& report, const std::filesystem::path& out_dir);

std::string grid_csv(const EvalReport& report);
std::string roc_svg(const CellResult& cell);
std::string bland_altman_svg(const BlandAltmanResult& result);

}  // namespace bmode
