#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bmode/evaluate.hpp"

namespace bmode {

namespace {

void check_scored(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), "scores and labels differ in length");
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] == 0 || labels[i] == 1, "labels must be 0 or 1");
    require(!std::isnan(scores[i]), "scores must not be NaN");
    (labels[i] == 1 ? pos : neg) = true;
  }
  require(pos && neg, "ROC analysis needs both classes (single-class input)");
}

// Twice the Mann-Whitney U statistic as an exact integer.
std::uint64_t doubled_u(const RocCurve& curve) {
  std::uint64_t twice_area = 0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    twice_area += (b.false_positives - a.false_positives) * (a.true_positives + b.true_positives);
  }
  return twice_area;
}

}  // namespace

double aggregate_lesion_probability(std::span<const double> variant_probs) {
  require(!variant_probs.empty(), "cannot aggregate an empty probability list");
  double sum = 0.0;
  for (double p : variant_probs) {
    require(p >= 0.0 && p <= 1.0, "probabilities must lie in [0, 1]");
    sum += p;
  }
  return sum / static_cast<double>(variant_probs.size());
}

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_scored(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  RocCurve curve;
  curve.positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  curve.negatives = labels.size() - curve.positives;
  const double p = static_cast<double>(curve.positives);
  const double n = static_cast<double>(curve.negatives);

  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity(), 0, 0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    // Tied scores enter together as one point.
    while (i < order.size() && scores[order[i]] == threshold) {
      (labels[order[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
    curve.points.push_back({static_cast<double>(fp) / n, static_cast<double>(tp) / p, threshold, tp, fp});
  }
  return curve;
}

double trapezoid_area(const RocCurve& curve) {
  require(curve.positives > 0 && curve.negatives > 0, "ROC curve needs both classes");
  return static_cast<double>(doubled_u(curve)) /
         (2.0 * static_cast<double>(curve.positives) * static_cast<double>(curve.negatives));
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  check_scored(scores, labels);
  // Rank-sum over ascending scores; a tie contributes half a pair.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  std::uint64_t twice_u = 0;
  std::uint64_t negatives_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? pos : neg) += 1;
      ++j;
    }
    twice_u += pos * (2 * negatives_below + neg);
    negatives_below += neg;
    i = j;
  }
  const auto positives = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const auto negatives = static_cast<double>(labels.size()) - positives;
  return static_cast<double>(twice_u) / (2.0 * positives * negatives);
}

OperatingPoint operating_point(const RocCurve& curve) {
  require(!curve.points.empty() && curve.positives > 0 && curve.negatives > 0,
          "operating point needs a non-empty two-class ROC curve");
  const RocPoint* best = nullptr;
  double best_dist = 0.0;
  for (const auto& pt : curve.points) {
    const double miss = 1.0 - pt.tpr;
    const double dist = pt.fpr * pt.fpr + miss * miss;
    const bool better = best == nullptr || dist < best_dist ||
                        (dist == best_dist && (pt.tpr > best->tpr ||
                                               (pt.tpr == best->tpr && pt.threshold < best->threshold)));
    if (better) {
      best = &pt;
      best_dist = dist;
    }
  }
  const auto total = static_cast<double>(curve.positives + curve.negatives);
  const std::size_t true_negatives = curve.negatives - best->false_positives;
  OperatingPoint op;
  op.sensitivity = best->tpr;
  op.specificity = static_cast<double>(true_negatives) / static_cast<double>(curve.negatives);
  op.accuracy = static_cast<double>(best->true_positives + true_negatives) / total;
  op.threshold = best->threshold;
  return op;
}

BlandAltmanStats bland_altman(std::span<const double> probs_a, std::span<const double> probs_b) {
  require(probs_a.size() == probs_b.size(), "Bland-Altman inputs differ in length");
  require(probs_a.size() >= 2, "Bland-Altman needs at least two paired values");
  const auto n = static_cast<double>(probs_a.size());
  BlandAltmanStats s;
  double sum = 0.0;
  for (std::size_t i = 0; i < probs_a.size(); ++i) {
    const double d = probs_a[i] - probs_b[i];
    s.points.emplace_back((probs_a[i] + probs_b[i]) / 2.0, d);
    sum += d;
  }
  s.mean_diff = sum / n;
  double ss = 0.0;
  for (const auto& [mean, d] : s.points) ss += (d - s.mean_diff) * (d - s.mean_diff);
  s.sd_diff = std::sqrt(ss / (n - 1.0));
  s.loa_low = s.mean_diff - 1.96 * s.sd_diff;
  s.loa_high = s.mean_diff + 1.96 * s.sd_diff;
  return s;
}

}  // namespace bmode
