#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bmode {

enum class ClassWeighting { kInverseFrequency, kNone };

struct SvmConfig {
  double c = 1.0;
  double gamma = 0.001;  // kept for provenance; a linear kernel has no gamma
  ClassWeighting class_weighting = ClassWeighting::kInverseFrequency;
  double tolerance = 1e-6;
  int max_iterations = 20000;  // epochs over the training set
  std::uint64_t seed = 0;
  bool standardize = true;

  void validate() const;
};

// Per-class cost multipliers: N / (2 * N_class) under inverse frequency.
struct ClassWeights {
  double benign = 1.0;
  double malignant = 1.0;
};

ClassWeights class_weights(std::span<const int> labels, ClassWeighting weighting);

struct SvmModel {
  std::vector<double> weights;   // in standardized feature space
  double bias = 0.0;
  double platt_a = 0.0;
  double platt_b = 0.0;
  std::vector<double> feature_mean;
  std::vector<double> feature_scale;  // divide by this after centering
  SvmConfig config;
  std::string training_checksum;
  int iterations = 0;
  bool converged = true;

  std::size_t dim() const noexcept { return weights.size(); }
};

// Dual coordinate descent for
//   min 1/2 (|w|^2 + b^2) + sum_i C_i max(0, 1 - y_i (w.x_i + b))
// with C_i = c * class_weight(y_i); the bias is carried as a constant unit
// feature. Per-example costs override the class rule when provided.
SvmModel train_svm(const std::vector<std::vector<double>>& features, std::span<const int> labels,
                   const SvmConfig& config);

// Lower-level solver on already prepared (standardized) data. Returns
// weights with the bias appended as the last element.
struct DualSolution {
  std::vector<double> w;  // size dim + 1, last entry is the bias
  std::vector<double> alpha;
  int iterations = 0;
  bool converged = true;
};

DualSolution solve_dual_cd(const std::vector<std::vector<double>>& x, std::span<const int> labels,
                           std::span<const double> costs, double tolerance, int max_iterations,
                           std::uint64_t seed);

// Primal objective of the problem above (bias regularized).
double hinge_objective(const std::vector<std::vector<double>>& x, std::span<const int> labels,
                       std::span<const double> costs, std::span<const double> w, double bias);

double decision_value(const SvmModel& model, std::span<const double> x);

struct PlattParams {
  double a = 0.0;
  double b = 0.0;
  int iterations = 0;
};

// P(y=1 | f) = 1 / (1 + exp(a f + b)), fitted by Newton's method with
// backtracking on smoothed targets.
PlattParams fit_platt(std::span<const double> decisions, std::span<const int> labels);
double platt_nll(std::span<const double> decisions, std::span<const int> labels, double a,
                 double b);
double platt_probability(double decision, double a, double b);

double predict_probability(const SvmModel& model, std::span<const double> x);

std::string serialize_model(const SvmModel& model);
SvmModel deserialize_model(const std::string& json_text);

}  // namespace bmode
