#include <algorithm>
#include <map>
#include <numeric>
#include <tuple>

#include "bmode/evaluate.hpp"
#include "bmode/rng.hpp"

namespace bmode {

namespace {

struct PatientCounts {
  std::string patient_id;
  int malignant = 0;
  int benign = 0;
};

struct FoldCounts {
  std::vector<int> malignant, benign;

  explicit FoldCounts(int k) : malignant(k, 0), benign(k, 0) {}

  static int range(const std::vector<int>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
  }
  bool balanced() const { return range(malignant) <= 1 && range(benign) <= 1; }
};

// Lexicographic cost of a fold state: class ranges first, then spread.
std::tuple<int, long, int, long> cost(const FoldCounts& c) {
  long sq = 0, total_sq = 0;
  std::vector<int> total(c.malignant.size());
  for (std::size_t f = 0; f < total.size(); ++f) {
    sq += long{c.malignant[f]} * c.malignant[f] + long{c.benign[f]} * c.benign[f];
    total[f] = c.malignant[f] + c.benign[f];
    total_sq += long{total[f]} * total[f];
  }
  return {FoldCounts::range(c.malignant) + FoldCounts::range(c.benign), sq,
          FoldCounts::range(total), total_sq};
}

void place(FoldCounts& c, const PatientCounts& p, int fold, int sign) {
  c.malignant[fold] += sign * p.malignant;
  c.benign[fold] += sign * p.benign;
}

// Exact search for a +/-1-balanced assignment; folds are interchangeable, so
// a patient may only open the next unused fold. Gives up after `budget` nodes.
struct SearchCaps {
  int malignant = 0;
  int benign = 0;
};

bool balanced_search(const std::vector<PatientCounts>& patients, int k, std::size_t index, int used,
                     const SearchCaps& caps, FoldCounts& counts, std::vector<int>& assignment,
                     long& budget) {
  if (--budget < 0) return false;
  if (index == patients.size()) return used == k && counts.balanced();

  // In a balanced state no fold exceeds the ceiling of the per-fold average.
  const int cap_m = caps.malignant, cap_b = caps.benign;
  const int limit = std::min(k, used + 1);
  for (int f = 0; f < limit; ++f) {
    place(counts, patients[index], f, +1);
    if (counts.malignant[f] <= cap_m && counts.benign[f] <= cap_b) {
      assignment[index] = f;
      if (balanced_search(patients, k, index + 1, std::max(used, f + 1), caps, counts, assignment,
                          budget)) {
        return true;
      }
    }
    place(counts, patients[index], f, -1);
  }
  return false;
}

}  // namespace

int FoldAssignment::fold_of(const std::string& lesion_id) const {
  auto it = fold_of_lesion.find(lesion_id);
  require(it != fold_of_lesion.end(), "lesion '" + lesion_id + "' has no fold");
  return it->second;
}

FoldAssignment make_folds(std::vector<PatientLesions> patients, int k, std::uint64_t seed) {
  require(k >= 2, "need at least two folds");
  std::vector<PatientCounts> counts;
  int malignant_patients = 0, benign_patients = 0;
  std::map<std::string, std::size_t> by_id;
  for (const auto& p : patients) {
    require(by_id.emplace(p.patient_id, counts.size()).second,
            "patient '" + p.patient_id + "' listed twice");
    PatientCounts pc{p.patient_id, 0, 0};
    for (const auto& [lesion, label] : p.lesions) {
      (label == Label::kMalignant ? pc.malignant : pc.benign) += 1;
    }
    malignant_patients += pc.malignant > 0;
    benign_patients += pc.benign > 0;
    counts.push_back(pc);
  }
  require(malignant_patients >= k && benign_patients >= k,
          "too few patients per class for " + std::to_string(k) + " folds");

  std::vector<std::size_t> order(counts.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& pa = counts[a];
    const auto& pb = counts[b];
    return std::tie(pb.malignant, pb.benign, pa.patient_id) <
           std::tie(pa.malignant, pa.benign, pb.patient_id);
  });

  Rng rng(derive_seed(seed, "folds"));
  FoldCounts state(k);
  std::vector<int> fold_of_patient(counts.size(), 0);
  for (std::size_t idx : order) {
    std::vector<int> best;
    std::tuple<int, long, int, long> best_cost{};
    for (int f = 0; f < k; ++f) {
      place(state, counts[idx], f, +1);
      const auto c = cost(state);
      place(state, counts[idx], f, -1);
      if (best.empty() || c < best_cost) {
        best = {f};
        best_cost = c;
      } else if (c == best_cost) {
        best.push_back(f);
      }
    }
    const int chosen = best.size() == 1 ? best[0] : best[rng.below(best.size())];
    fold_of_patient[idx] = chosen;
    place(state, counts[idx], chosen, +1);
  }

  // Greedy placement can miss a reachable +/-1 balance when patients carry
  // several lesions; repair with single-patient moves, then exact search.
  bool improved = !state.balanced();
  while (improved) {
    improved = false;
    const auto current = cost(state);
    for (std::size_t p = 0; p < counts.size() && !improved; ++p) {
      const int from = fold_of_patient[p];
      for (int to = 0; to < k && !improved; ++to) {
        if (to == from) continue;
        place(state, counts[p], from, -1);
        place(state, counts[p], to, +1);
        if (cost(state) < current) {
          fold_of_patient[p] = to;
          improved = true;
        } else {
          place(state, counts[p], to, -1);
          place(state, counts[p], from, +1);
        }
      }
    }
  }
  if (!state.balanced()) {
    std::vector<PatientCounts> sorted;
    for (std::size_t idx : order) sorted.push_back(counts[idx]);
    FoldCounts scratch(k);
    std::vector<int> assignment(sorted.size(), 0);
    SearchCaps caps;
    for (const auto& p : sorted) {
      caps.malignant += p.malignant;
      caps.benign += p.benign;
    }
    caps.malignant = (caps.malignant + k - 1) / k;
    caps.benign = (caps.benign + k - 1) / k;
    long budget = 5'000'000;
    if (balanced_search(sorted, k, 0, 0, caps, scratch, assignment, budget)) {
      for (std::size_t i = 0; i < order.size(); ++i) fold_of_patient[order[i]] = assignment[i];
    }
  }

  FoldAssignment out;
  out.k = k;
  out.seed = seed;
  for (std::size_t p = 0; p < patients.size(); ++p) {
    for (const auto& [lesion, label] : patients[p].lesions) {
      require(out.fold_of_lesion.emplace(lesion, fold_of_patient[p]).second,
              "lesion '" + lesion + "' listed twice");
    }
  }
  return out;
}

FoldAssignment make_folds(const Dataset& dataset, int k, std::uint64_t seed) {
  std::map<std::string, PatientLesions> grouped;
  for (const auto& lesion : dataset.lesions) {
    auto& p = grouped[lesion.patient_id];
    p.patient_id = lesion.patient_id;
    p.lesions.emplace_back(lesion.lesion_id, lesion.label);
  }
  std::vector<PatientLesions> patients;
  for (auto& [id, p] : grouped) {
    std::sort(p.lesions.begin(), p.lesions.end());
    patients.push_back(std::move(p));
  }
  return make_folds(std::move(patients), k, seed);
}

}  // namespace bmode
