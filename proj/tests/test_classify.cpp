#include "doctest.h"

#include "bmode/classify.hpp"
#include "bmode/error.hpp"
#include "bmode/rng.hpp"
#include "oracles.hpp"

using namespace bmode;

namespace {

struct Problem {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
};

// Two overlapping Gaussian clouds in `dim` dimensions.
Problem random_problem(std::uint64_t seed, std::size_t n, std::size_t dim = 2) {
  Rng rng(seed);
  Problem p;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = i < 2 ? static_cast<int>(i) : static_cast<int>(rng.below(2));
    std::vector<double> row(dim);
    for (std::size_t j = 0; j < dim; ++j) row[j] = rng.normal() + (label == 1 ? 1.0 : -0.5) * (j == 0 ? 1.5 : 0.5);
    p.x.push_back(row);
    p.y.push_back(label);
  }
  return p;
}

std::vector<double> class_costs(const std::vector<int>& y, double c) {
  const auto w = class_weights(y, ClassWeighting::kInverseFrequency);
  std::vector<double> out;
  for (int v : y) out.push_back(c * (v == 1 ? w.malignant : w.benign));
  return out;
}

}  // namespace

TEST_CASE("symmetric two-point problem splits at the origin") {
  SvmConfig cfg;
  const SvmModel m = train_svm({{-1.0, 0.0}, {1.0, 0.0}}, std::vector<int>{0, 1}, cfg);
  CHECK(decision_value(m, std::vector<double>{2.0, 0.0}) > 0.0);
  CHECK(decision_value(m, std::vector<double>{-2.0, 0.0}) < 0.0);
  CHECK(decision_value(m, std::vector<double>{1.0, 0.0}) > 0.0);
}

TEST_CASE("inverse-frequency class weights") {
  std::vector<int> y(157, 0);
  y.insert(y.end(), 94, 1);
  const auto w = class_weights(y, ClassWeighting::kInverseFrequency);
  CHECK(w.malignant / w.benign == doctest::Approx(157.0 / 94.0).epsilon(1e-15));
  CHECK(w.benign == doctest::Approx(251.0 / (2.0 * 157.0)));
  const auto none = class_weights(y, ClassWeighting::kNone);
  CHECK(none.benign == 1.0);
  CHECK(none.malignant == 1.0);
}

TEST_CASE("dual coordinate descent reaches the projected-gradient optimum") {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 10 + rng.below(31);
    const Problem p = random_problem(1000 + trial, n);
    const auto costs = class_costs(p.y, 1.0);
    const auto sol = solve_dual_cd(p.x, p.y, costs, 1e-8, 100000, trial);
    const auto ref = oracle::projected_gradient_svm(p.x, p.y, costs);
    CHECK(ref.primal - ref.dual <= 1e-6 * ref.primal);
    const std::vector<double> w(sol.w.begin(), sol.w.end() - 1);
    const double obj = hinge_objective(p.x, p.y, costs, w, sol.w.back());
    CHECK(std::fabs(obj - ref.primal) <= 1e-4 * ref.primal);
    CHECK(obj == doctest::Approx(oracle::primal_value(p.x, p.y, costs, w, sol.w.back())).epsilon(1e-12));

    int agree = 0, total = 0;
    for (int gy = -10; gy <= 10; ++gy) {
      for (int gx = -10; gx <= 10; ++gx) {
        const double a = gx * 0.4, b = gy * 0.4;
        const double f1 = w[0] * a + w[1] * b + sol.w.back();
        const double f2 = ref.w[0] * a + ref.w[1] * b + ref.b;
        agree += (f1 > 0) == (f2 > 0);
        ++total;
      }
    }
    CHECK(agree >= 0.99 * total);
  }
}

TEST_CASE("class weight 2 equals duplicating that class") {
  for (int trial = 0; trial < 10; ++trial) {
    const Problem p = random_problem(500 + trial, 16, 3);
    std::vector<double> weighted;
    Problem dup;
    for (std::size_t i = 0; i < p.x.size(); ++i) {
      weighted.push_back(p.y[i] == 1 ? 2.0 : 1.0);
      dup.x.push_back(p.x[i]);
      dup.y.push_back(p.y[i]);
      if (p.y[i] == 1) {
        dup.x.push_back(p.x[i]);
        dup.y.push_back(p.y[i]);
      }
    }
    const auto a = solve_dual_cd(p.x, p.y, weighted, 1e-10, 200000, 1);
    const auto b = solve_dual_cd(dup.x, dup.y, std::vector<double>(dup.x.size(), 1.0), 1e-10, 200000, 1);
    for (std::size_t j = 0; j < a.w.size(); ++j) CHECK(std::fabs(a.w[j] - b.w[j]) <= 1e-4);
  }
}

TEST_CASE("dropping non-support examples leaves the solution unchanged") {
  for (int trial = 0; trial < 10; ++trial) {
    const Problem p = random_problem(900 + trial, 30, 2);
    const auto costs = class_costs(p.y, 1.0);
    const auto full = solve_dual_cd(p.x, p.y, costs, 1e-12, 500000, 3);
    Problem kept;
    std::vector<double> kept_costs;
    for (std::size_t i = 0; i < p.x.size(); ++i) {
      const double f = full.w[0] * p.x[i][0] + full.w[1] * p.x[i][1] + full.w[2];
      const double margin = (p.y[i] == 1 ? 1.0 : -1.0) * f;
      if (margin > 1.0 + 1e-6) continue;
      kept.x.push_back(p.x[i]);
      kept.y.push_back(p.y[i]);
      kept_costs.push_back(costs[i]);
    }
    REQUIRE(kept.x.size() < p.x.size());
    const auto reduced = solve_dual_cd(kept.x, kept.y, kept_costs, 1e-12, 500000, 3);
    for (std::size_t j = 0; j < full.w.size(); ++j) CHECK(std::fabs(full.w[j] - reduced.w[j]) <= 1e-6);
  }
}

TEST_CASE("training is deterministic and flags non-convergence") {
  const Problem p = random_problem(4, 60, 5);
  SvmConfig cfg;
  cfg.seed = 11;
  const SvmModel a = train_svm(p.x, p.y, cfg);
  const SvmModel b = train_svm(p.x, p.y, cfg);
  CHECK(a.weights == b.weights);
  CHECK(a.bias == b.bias);
  CHECK(a.platt_a == b.platt_a);
  CHECK(a.training_checksum == b.training_checksum);
  CHECK(serialize_model(a) == serialize_model(b));
  CHECK(a.converged);

  cfg.max_iterations = 1;
  const SvmModel c = train_svm(p.x, p.y, cfg);
  CHECK_FALSE(c.converged);
  CHECK(std::isfinite(decision_value(c, p.x[0])));
}

TEST_CASE("training rejects bad input") {
  SvmConfig cfg;
  CHECK_THROWS_AS(train_svm({{1.0}, {2.0}}, std::vector<int>{1, 1}, cfg), Error);
  CHECK_THROWS_AS(train_svm({{1.0}, {2.0, 3.0}}, std::vector<int>{0, 1}, cfg), Error);
  cfg.c = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("decision value is the affine score in raw feature space") {
  const Problem p = random_problem(8, 40, 4);
  const SvmModel m = train_svm(p.x, p.y, SvmConfig{});
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> x(4);
    for (auto& v : x) v = rng.normal();
    double f = m.bias;
    for (std::size_t j = 0; j < 4; ++j) f += m.weights[j] * (x[j] - m.feature_mean[j]) / m.feature_scale[j];
    CHECK(std::fabs(decision_value(m, x) - f) <= 1e-12 * std::max(1.0, std::fabs(f)));
  }
  std::vector<double> at_mean = m.feature_mean;
  CHECK(decision_value(m, at_mean) == doctest::Approx(m.bias).epsilon(1e-12));
  CHECK_THROWS_AS(decision_value(m, std::vector<double>{1.0}), Error);
}

TEST_CASE("Platt orientation, degenerate fit and grid-search oracle") {
  const std::vector<double> sep = {-2, -1, 1, 2};
  const std::vector<int> sep_y = {0, 0, 1, 1};
  CHECK(fit_platt(sep, sep_y).a < 0.0);

  const std::vector<double> flat(7, 0.3);
  const std::vector<int> flat_y = {0, 0, 0, 0, 1, 1, 1};
  const auto pf = fit_platt(flat, flat_y);
  const double prevalence = (3 * (4.0 / 5.0) + 4 * (1.0 / 6.0)) / 7.0;
  CHECK(platt_probability(0.3, pf.a, pf.b) == doctest::Approx(prevalence).epsilon(1e-6));
  CHECK(platt_probability(-5.0, pf.a, pf.b) == doctest::Approx(prevalence).epsilon(1e-6));

  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> f;
    std::vector<int> y;
    for (int i = 0; i < 40; ++i) {
      const int label = i % 3 == 0 ? 1 : 0;
      f.push_back(rng.normal() + (label ? 0.8 : -0.4));
      y.push_back(label);
    }
    const auto fit = fit_platt(f, y);
    const double best = oracle::platt_grid_min(f, y);
    CHECK(platt_nll(f, y, fit.a, fit.b) <= best + 1e-6);
    CHECK(std::fabs(oracle::platt_nll(f, y, fit.a, fit.b) - platt_nll(f, y, fit.a, fit.b)) <= 1e-9);
  }
  CHECK_THROWS_AS(fit_platt(std::vector<double>{1, 2}, std::vector<int>{1, 1}), Error);
}

TEST_CASE("probabilities are bounded and rank like decision values") {
  CHECK(platt_probability(0.0, -3.0, 0.0) == 0.5);
  for (double z : {-800.0, -30.0, 0.0, 30.0, 800.0}) {
    const double p = platt_probability(z, -1.0, 0.0);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    CHECK(std::isfinite(p));
  }
  const Problem p = random_problem(15, 50, 3);
  const SvmModel m = train_svm(p.x, p.y, SvmConfig{});
  for (std::size_t i = 0; i + 1 < p.x.size(); ++i) {
    const double d1 = decision_value(m, p.x[i]), d2 = decision_value(m, p.x[i + 1]);
    const double p1 = predict_probability(m, p.x[i]), p2 = predict_probability(m, p.x[i + 1]);
    if (d1 > d2) CHECK(p1 >= p2);
    if (d1 < d2) CHECK(p1 <= p2);
    CHECK(p1 > 0.0);
    CHECK(p1 < 1.0);
  }
}

TEST_CASE("model serialization round-trips exactly") {
  const Problem p = random_problem(21, 30, 6);
  SvmConfig cfg;
  cfg.seed = 5;
  const SvmModel m = train_svm(p.x, p.y, cfg);
  const std::string text = serialize_model(m);
  CHECK(text.find("\"weights\"") != std::string::npos);
  const SvmModel back = deserialize_model(text);
  CHECK(back.weights == m.weights);
  CHECK(back.feature_mean == m.feature_mean);
  CHECK(back.feature_scale == m.feature_scale);
  CHECK(back.bias == m.bias);
  CHECK(back.platt_a == m.platt_a);
  CHECK(back.platt_b == m.platt_b);
  CHECK(back.training_checksum == m.training_checksum);
  CHECK(back.config.seed == 5);
  CHECK(serialize_model(back) == text);
  CHECK_THROWS_AS(deserialize_model("{}"), Error);
}
