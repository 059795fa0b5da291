#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "bmode/evaluate.hpp"
#include "bmode/parallel.hpp"
#include "bmode/rng.hpp"

namespace bmode {

namespace {

std::string threshold_name(double threshold_db) {
  char buf[32];
  if (threshold_db == std::floor(threshold_db) && std::abs(threshold_db) < 1e9) {
    std::snprintf(buf, sizeof buf, "%.0fdB", threshold_db);
  } else {
    std::snprintf(buf, sizeof buf, "%gdB", threshold_db);
  }
  return buf;
}

}  // namespace

ReconSet single_threshold_set(double threshold_db) {
  return ReconSet{threshold_name(threshold_db), {threshold_db}};
}

ReconSet all_thresholds_set(const std::set<double>& thresholds_db) {
  return ReconSet{"ALL", thresholds_db};
}

ReconSet parse_recon_set(const std::string& text, const std::set<double>& thresholds_db) {
  if (text == "ALL" || text == "all") return all_thresholds_set(thresholds_db);
  std::string number = text;
  if (number.size() > 2 && (number.ends_with("dB") || number.ends_with("db"))) {
    number.resize(number.size() - 2);
  }
  double value = 0.0;
  try {
    std::size_t used = 0;
    value = std::stod(number, &used);
    require(used == number.size(), "trailing characters");
  } catch (const std::exception&) {
    fail(ErrorKind::kInvalidInput, "cannot parse reconstruction set '" + text + "'");
  }
  require(thresholds_db.count(value) == 1,
          "reconstruction set '" + text + "' is not among the configured thresholds");
  return single_threshold_set(value);
}

void ExperimentGrid::validate() const {
  require(!train_sets.empty() && !test_sets.empty(), "grid needs train and test sets");
  require(!thresholds_db.empty() && !margins_mm.empty(), "grid needs thresholds and margins");
  for (const auto* sets : {&train_sets, &test_sets}) {
    for (const auto& s : *sets) {
      require(!s.thresholds_db.empty(), "reconstruction set '" + s.name + "' is empty");
      for (double t : s.thresholds_db) {
        require(thresholds_db.count(t) == 1,
                "set '" + s.name + "' uses a threshold outside the configured thresholds");
      }
    }
  }
  for (const auto& pair : bland_altman_pairs) {
    for (const CellId* id : {&pair.a, &pair.b}) {
      const bool train_ok = std::any_of(train_sets.begin(), train_sets.end(),
                                        [&](const ReconSet& s) { return s.name == id->train_set; });
      const bool test_ok = std::any_of(test_sets.begin(), test_sets.end(),
                                       [&](const ReconSet& s) { return s.name == id->test_set; });
      require(train_ok && test_ok, "Bland-Altman cell " + id->str() + " is not in the grid");
    }
  }
  extractor.validate();
  preprocess.validate();
  if (!extractor.preprocess.empty()) {
    require(extractor.preprocess == preprocess.name,
            "extractor '" + extractor.extractor_id + "' expects preprocess '" + extractor.preprocess +
                "', got '" + preprocess.name + "'");
  }
  if (extractor.input_size > 0) {
    require(extractor.input_size == preprocess.input_size,
            "extractor input size disagrees with preprocess spec '" + preprocess.name + "'");
  }
  require(folds.k >= 2, "grid needs a fold assignment");
}

ExperimentGrid default_grid(const std::set<double>& thresholds_db, const std::set<double>& margins_mm,
                            const ExtractorSpec& extractor, const NetworkPreprocessSpec& preprocess,
                            FoldAssignment folds) {
  ExperimentGrid grid;
  grid.thresholds_db = thresholds_db;
  grid.margins_mm = margins_mm;
  for (double t : thresholds_db) {
    grid.train_sets.push_back(single_threshold_set(t));
    grid.test_sets.push_back(single_threshold_set(t));
  }
  if (thresholds_db.size() > 1) {
    grid.train_sets.push_back(all_thresholds_set(thresholds_db));
    grid.test_sets.push_back(all_thresholds_set(thresholds_db));
    const std::string lo = threshold_name(*thresholds_db.begin());
    const std::string hi = threshold_name(*thresholds_db.rbegin());
    grid.bland_altman_pairs.push_back({{lo, lo}, {hi, hi}});
  }
  grid.extractor = extractor;
  grid.preprocess = preprocess;
  grid.folds = std::move(folds);
  return grid;
}

const CellResult& EvalReport::cell(const std::string& train_set, const std::string& test_set) const {
  for (const auto& c : cells) {
    if (c.id.train_set == train_set && c.id.test_set == test_set) return c;
  }
  fail(ErrorKind::kInvalidInput, "no cell " + train_set + "->" + test_set + " in report");
}

namespace {

std::vector<const LesionRecord*> sorted_lesions(const Dataset& dataset) {
  std::vector<const LesionRecord*> out;
  for (const auto& l : dataset.lesions) out.push_back(&l);
  std::sort(out.begin(), out.end(), [](const LesionRecord* a, const LesionRecord* b) {
    return a->lesion_id < b->lesion_id;
  });
  return out;
}

std::vector<FeatureKey> variant_keys(const LesionRecord& lesion, const ExperimentGrid& grid) {
  std::vector<FeatureKey> keys;
  for (std::size_t s = 0; s < lesion.scans.size(); ++s) {
    for (double margin : grid.margins_mm) {
      for (double threshold : grid.thresholds_db) {
        keys.push_back({lesion.lesion_id, static_cast<int>(s), threshold, margin,
                        grid.extractor.extractor_id});
      }
    }
  }
  return keys;
}

}  // namespace

FeatureTable compute_features(const Dataset& dataset, const ExperimentGrid& grid, FeatureCache* cache) {
  grid.validate();
  const auto lesions = sorted_lesions(dataset);
  FeatureTable table;
  table.lesion_ids.resize(lesions.size());
  table.keys.resize(lesions.size());
  table.values.resize(lesions.size());

  VariantPlan plan;
  plan.thresholds_db = grid.thresholds_db;
  plan.margins_mm = grid.margins_mm;
  plan.a_max_scope = grid.a_max_scope;
  if (grid.a_max_scope == AmaxScope::kPerDataset) plan.dataset_a_max = dataset_a_max(dataset);

  const auto extractor = make_extractor(grid.extractor);
  parallel_for(lesions.size(), grid.workers, [&](std::size_t i) {
    const LesionRecord& lesion = *lesions[i];
    table.lesion_ids[i] = lesion.lesion_id;
    table.keys[i] = variant_keys(lesion, grid);
    auto& values = table.values[i];
    values.resize(table.keys[i].size());

    bool all_cached = cache != nullptr;
    if (cache) {
      for (std::size_t v = 0; v < values.size(); ++v) {
        auto hit = cache->find(table.keys[i][v]);
        if (!hit) {
          all_cached = false;
          break;
        }
        values[v] = std::move(*hit);
      }
    }
    if (all_cached) return;

    const auto variants = enumerate_variants(lesion, plan, grid.preprocess);
    for (std::size_t v = 0; v < variants.size(); ++v) {
      FeatureVector fv = extractor->extract(variants[v].pixels);
      if (fv.dim() != grid.extractor.expected_dim) {
        fail(ErrorKind::kRuntime, "extractor '" + grid.extractor.extractor_id + "' returned dim " +
                                      std::to_string(fv.dim()) + " for lesion '" + lesion.lesion_id + "'");
      }
      fv.validate();
      if (cache) {
        values[v] = cache->insert(table.keys[i][v], fv.values);
      } else {
        // Same f32 rounding as the cache so warm and cold runs agree.
        values[v].resize(fv.dim());
        for (std::size_t j = 0; j < fv.dim(); ++j) {
          values[v][j] = static_cast<double>(static_cast<float>(fv.values[j]));
        }
      }
    }
  });
  return table;
}

EvalReport run_experiment(const Dataset& dataset, const ExperimentGrid& grid, const SvmConfig& svm_config,
                          const FeatureTable& features) {
  grid.validate();
  svm_config.validate();
  const auto lesions = sorted_lesions(dataset);
  require(features.lesion_ids.size() == lesions.size(), "feature table does not match dataset");

  EvalReport report;
  report.dataset_name = dataset.name;
  report.extractor_id = grid.extractor.extractor_id;
  const std::size_t n = lesions.size();
  for (std::size_t i = 0; i < n; ++i) {
    require(features.lesion_ids[i] == lesions[i]->lesion_id, "feature table lesion order mismatch");
    report.lesion_ids.push_back(lesions[i]->lesion_id);
    report.patient_ids.push_back(lesions[i]->patient_id);
    report.labels.push_back(lesions[i]->label == Label::kMalignant ? 1 : 0);
    report.lesion_fold.push_back(grid.folds.fold_of(lesions[i]->lesion_id));
  }
  const int k = grid.folds.k;
  for (int f : report.lesion_fold) require(f >= 0 && f < k, "fold index out of range");

  // job = (train set, held-out fold); each produces per-variant probabilities
  // for the held-out lesions.
  const std::size_t jobs = grid.train_sets.size() * static_cast<std::size_t>(k);
  std::vector<std::vector<std::vector<double>>> variant_probs(jobs);  // [job][lesion][variant]
  parallel_for(jobs, grid.workers, [&](std::size_t job) {
    const std::size_t t = job / static_cast<std::size_t>(k);
    const int fold = static_cast<int>(job % static_cast<std::size_t>(k));
    const ReconSet& train_set = grid.train_sets[t];

    std::set<std::string> train_patients, test_patients;
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    for (std::size_t i = 0; i < n; ++i) {
      if (report.lesion_fold[i] == fold) {
        test_patients.insert(report.patient_ids[i]);
        continue;
      }
      train_patients.insert(report.patient_ids[i]);
      for (std::size_t v = 0; v < features.keys[i].size(); ++v) {
        if (train_set.thresholds_db.count(features.keys[i][v].threshold_db)) {
          x.push_back(features.values[i][v]);
          y.push_back(report.labels[i]);
        }
      }
    }
    for (const auto& p : test_patients) {
      if (train_patients.count(p)) {
        fail(ErrorKind::kRuntime, "patient '" + p + "' appears in both training and test folds");
      }
    }

    SvmConfig cfg = svm_config;
    cfg.seed = derive_seed(svm_config.seed, "svm", job);
    SvmModel model;
    try {
      model = train_svm(x, y, cfg);
    } catch (const Error& e) {
      fail(e.kind(), "cell Train_" + train_set.name + " fold " + std::to_string(fold) + ": " + e.what());
    }

    auto& out = variant_probs[job];
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (report.lesion_fold[i] != fold) continue;
      out[i].resize(features.values[i].size());
      for (std::size_t v = 0; v < features.values[i].size(); ++v) {
        out[i][v] = predict_probability(model, features.values[i][v]);
      }
    }
  });

  report.source_model_fold = report.lesion_fold;
  for (std::size_t t = 0; t < grid.train_sets.size(); ++t) {
    for (const ReconSet& test_set : grid.test_sets) {
      CellResult cell;
      cell.id = {grid.train_sets[t].name, test_set.name};
      cell.lesion_probability.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& probs = variant_probs[t * static_cast<std::size_t>(k) +
                                          static_cast<std::size_t>(report.lesion_fold[i])][i];
        std::vector<double> selected;
        for (std::size_t v = 0; v < probs.size(); ++v) {
          if (test_set.thresholds_db.count(features.keys[i][v].threshold_db)) selected.push_back(probs[v]);
        }
        cell.lesion_probability[i] = aggregate_lesion_probability(selected);
      }
      try {
        cell.roc = roc_curve(cell.lesion_probability, report.labels);
        cell.auc = auc(cell.lesion_probability, report.labels);
        cell.op = operating_point(cell.roc);
      } catch (const Error& e) {
        fail(e.kind(), "cell " + cell.id.str() + ": " + e.what());
      }
      report.cells.push_back(std::move(cell));
    }
  }

  for (const auto& pair : grid.bland_altman_pairs) {
    const auto& a = report.cell(pair.a.train_set, pair.a.test_set);
    const auto& b = report.cell(pair.b.train_set, pair.b.test_set);
    report.bland_altman.push_back({pair.a, pair.b, bland_altman(a.lesion_probability, b.lesion_probability)});
  }
  return report;
}

EvalReport run_experiment(const Dataset& dataset, const ExperimentGrid& grid, const SvmConfig& svm_config,
                          FeatureCache* cache) {
  const FeatureTable table = compute_features(dataset, grid, cache);
  return run_experiment(dataset, grid, svm_config, table);
}

}  // namespace bmode
