#include "bmode/classify.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "bmode/error.hpp"
#include "bmode/rng.hpp"
#include "bytes.hpp"

namespace bmode {

using nlohmann::json;

void SvmConfig::validate() const {
  require(c > 0 && std::isfinite(c), "SVM C must be positive");
  require(tolerance > 0, "SVM tolerance must be positive");
  require(max_iterations > 0, "SVM max_iterations must be positive");
}

ClassWeights class_weights(std::span<const int> labels, ClassWeighting weighting) {
  ClassWeights w;
  if (weighting == ClassWeighting::kNone) return w;
  const auto n = static_cast<double>(labels.size());
  const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double neg = n - pos;
  require(pos > 0 && neg > 0, "class weights need both classes");
  w.malignant = n / (2.0 * pos);
  w.benign = n / (2.0 * neg);
  return w;
}

namespace {

double dot_with_bias(std::span<const double> w, const std::vector<double>& x) {
  double acc = w[x.size()];  // bias feature is 1
  for (std::size_t j = 0; j < x.size(); ++j) acc += w[j] * x[j];
  return acc;
}

void check_labels(std::span<const int> labels) {
  bool pos = false, neg = false;
  for (int y : labels) {
    require(y == 0 || y == 1, "labels must be 0 or 1");
    (y == 1 ? pos : neg) = true;
  }
  require(pos && neg, "training needs both classes (single-class input)");
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

DualSolution solve_dual_cd(const std::vector<std::vector<double>>& x, std::span<const int> labels,
                           std::span<const double> costs, double tolerance, int max_iterations,
                           std::uint64_t seed) {
  const std::size_t n = x.size();
  require(n == labels.size() && n == costs.size(), "solver inputs must have equal length");
  require(n > 0, "solver needs at least one example");
  const std::size_t dim = x[0].size();

  DualSolution sol;
  sol.w.assign(dim + 1, 0.0);
  sol.alpha.assign(n, 0.0);
  std::vector<double> sign(n), qdiag(n);
  for (std::size_t i = 0; i < n; ++i) {
    require(x[i].size() == dim, "feature vectors must share one dimension");
    sign[i] = labels[i] == 1 ? 1.0 : -1.0;
    qdiag[i] = 1.0 + std::inner_product(x[i].begin(), x[i].end(), x[i].begin(), 0.0);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  sol.converged = false;
  for (int epoch = 0; epoch < max_iterations; ++epoch) {
    rng.shuffle(order);
    double max_violation = 0.0;
    for (std::size_t i : order) {
      const double grad = sign[i] * dot_with_bias(sol.w, x[i]) - 1.0;
      const double upper = costs[i];
      double projected = grad;
      if (sol.alpha[i] <= 0.0) {
        projected = std::min(grad, 0.0);
      } else if (sol.alpha[i] >= upper) {
        projected = std::max(grad, 0.0);
      }
      max_violation = std::max(max_violation, std::abs(projected));
      if (projected == 0.0) continue;
      const double old = sol.alpha[i];
      sol.alpha[i] = std::clamp(old - grad / qdiag[i], 0.0, upper);
      const double step = (sol.alpha[i] - old) * sign[i];
      for (std::size_t j = 0; j < dim; ++j) sol.w[j] += step * x[i][j];
      sol.w[dim] += step;
    }
    sol.iterations = epoch + 1;
    if (max_violation < tolerance) {
      sol.converged = true;
      break;
    }
  }
  return sol;
}

double hinge_objective(const std::vector<std::vector<double>>& x, std::span<const int> labels,
                       std::span<const double> costs, std::span<const double> w, double bias) {
  double reg = bias * bias;
  for (double v : w) reg += v * v;
  double loss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double f = bias;
    for (std::size_t j = 0; j < w.size(); ++j) f += w[j] * x[i][j];
    const double y = labels[i] == 1 ? 1.0 : -1.0;
    loss += costs[i] * std::max(0.0, 1.0 - y * f);
  }
  return 0.5 * reg + loss;
}

SvmModel train_svm(const std::vector<std::vector<double>>& features, std::span<const int> labels,
                   const SvmConfig& config) {
  config.validate();
  require(features.size() == labels.size(), "features and labels differ in length");
  require(!features.empty(), "no training examples");
  check_labels(labels);
  const std::size_t dim = features[0].size();
  for (const auto& f : features) {
    require(f.size() == dim, "feature vectors must share one dimension");
    for (double v : f) require(std::isfinite(v), "non-finite training feature");
  }

  SvmModel model;
  model.config = config;
  model.feature_mean.assign(dim, 0.0);
  model.feature_scale.assign(dim, 1.0);
  if (config.standardize) {
    const auto n = static_cast<double>(features.size());
    for (const auto& f : features) {
      for (std::size_t j = 0; j < dim; ++j) model.feature_mean[j] += f[j];
    }
    for (double& m : model.feature_mean) m /= n;
    std::vector<double> var(dim, 0.0);
    for (const auto& f : features) {
      for (std::size_t j = 0; j < dim; ++j) {
        const double d = f[j] - model.feature_mean[j];
        var[j] += d * d;
      }
    }
    for (std::size_t j = 0; j < dim; ++j) {
      const double sd = std::sqrt(var[j] / n);
      model.feature_scale[j] = sd > 0 ? sd : 1.0;
    }
  }

  std::vector<std::vector<double>> x(features.size(), std::vector<double>(dim));
  for (std::size_t i = 0; i < features.size(); ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      x[i][j] = (features[i][j] - model.feature_mean[j]) / model.feature_scale[j];
    }
  }

  const ClassWeights cw = class_weights(labels, config.class_weighting);
  std::vector<double> costs(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    costs[i] = config.c * (labels[i] == 1 ? cw.malignant : cw.benign);
  }

  DualSolution sol = solve_dual_cd(x, labels, costs, config.tolerance, config.max_iterations, config.seed);
  model.bias = sol.w.back();
  sol.w.pop_back();
  model.weights = std::move(sol.w);
  model.iterations = sol.iterations;
  model.converged = sol.converged;

  std::vector<double> decisions(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double f = model.bias;
    for (std::size_t j = 0; j < dim; ++j) f += model.weights[j] * x[i][j];
    decisions[i] = f;
  }
  const PlattParams platt = fit_platt(decisions, labels);
  model.platt_a = platt.a;
  model.platt_b = platt.b;

  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& f : features) h = fnv1a(h, f.data(), f.size() * sizeof(double));
  for (int y : labels) h = fnv1a(h, &y, sizeof y);
  const double cfg[] = {config.c, config.gamma, config.tolerance,
                        static_cast<double>(config.max_iterations),
                        static_cast<double>(config.class_weighting == ClassWeighting::kNone),
                        static_cast<double>(config.standardize)};
  h = fnv1a(h, cfg, sizeof cfg);
  h = fnv1a(h, &config.seed, sizeof config.seed);
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  model.training_checksum = hex;
  return model;
}

double decision_value(const SvmModel& model, std::span<const double> x) {
  require(x.size() == model.dim(), "feature dimension " + std::to_string(x.size()) +
                                       " does not match model dimension " +
                                       std::to_string(model.dim()));
  double f = model.bias;
  for (std::size_t j = 0; j < x.size(); ++j) {
    f += model.weights[j] * ((x[j] - model.feature_mean[j]) / model.feature_scale[j]);
  }
  return f;
}

double platt_probability(double decision, double a, double b) {
  const double z = a * decision + b;
  if (z >= 0) {
    const double e = std::exp(-z);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(z));
}

namespace {

std::vector<double> smoothed_targets(std::span<const int> labels) {
  const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double neg = static_cast<double>(labels.size()) - pos;
  const double hi = (pos + 1.0) / (pos + 2.0);
  const double lo = 1.0 / (neg + 2.0);
  std::vector<double> t(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) t[i] = labels[i] == 1 ? hi : lo;
  return t;
}

double nll_with_targets(std::span<const double> f, std::span<const double> t, double a, double b) {
  double total = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double z = a * f[i] + b;
    if (z >= 0) {
      total += t[i] * z + std::log1p(std::exp(-z));
    } else {
      total += (t[i] - 1.0) * z + std::log1p(std::exp(z));
    }
  }
  return total;
}

}  // namespace

double platt_nll(std::span<const double> decisions, std::span<const int> labels, double a, double b) {
  const auto t = smoothed_targets(labels);
  return nll_with_targets(decisions, t, a, b);
}

PlattParams fit_platt(std::span<const double> decisions, std::span<const int> labels) {
  require(decisions.size() == labels.size(), "decisions and labels differ in length");
  check_labels(labels);
  const auto t = smoothed_targets(labels);
  const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double neg = static_cast<double>(labels.size()) - pos;

  constexpr int kMaxIterations = 200;
  constexpr double kGradientTolerance = 1e-8;
  constexpr double kMinStep = 1e-10;
  constexpr double kHessianRidge = 1e-12;

  PlattParams p;
  // Constant decisions leave the slope unidentifiable; the optimum is the
  // flat sigmoid at the mean target.
  const auto [lo_it, hi_it] = std::minmax_element(decisions.begin(), decisions.end());
  if (*lo_it == *hi_it) {
    double mean_t = 0.0;
    for (double v : t) mean_t += v;
    mean_t /= static_cast<double>(t.size());
    p.b = std::log((1.0 - mean_t) / mean_t);
    return p;
  }
  p.a = 0.0;
  p.b = std::log((neg + 1.0) / (pos + 1.0));
  double fval = nll_with_targets(decisions, t, p.a, p.b);

  for (int it = 0; it < kMaxIterations; ++it) {
    double h11 = kHessianRidge, h22 = kHessianRidge, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < decisions.size(); ++i) {
      const double z = decisions[i] * p.a + p.b;
      double prob, q;
      if (z >= 0) {
        prob = std::exp(-z) / (1.0 + std::exp(-z));
        q = 1.0 / (1.0 + std::exp(-z));
      } else {
        prob = 1.0 / (1.0 + std::exp(z));
        q = std::exp(z) / (1.0 + std::exp(z));
      }
      const double d2 = prob * q;
      h11 += decisions[i] * decisions[i] * d2;
      h22 += d2;
      h21 += decisions[i] * d2;
      const double d1 = t[i] - prob;
      g1 += decisions[i] * d1;
      g2 += d1;
    }
    p.iterations = it;
    if (std::hypot(g1, g2) < kGradientTolerance) break;

    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * da + g2 * db;

    double step = 1.0;
    bool moved = false;
    while (step >= kMinStep) {
      const double na = p.a + step * da;
      const double nb = p.b + step * db;
      const double nf = nll_with_targets(decisions, t, na, nb);
      if (nf < fval + 1e-4 * step * gd) {
        p.a = na;
        p.b = nb;
        fval = nf;
        moved = true;
        break;
      }
      step /= 2.0;
    }
    p.iterations = it + 1;
    if (!moved) break;  // line search failed; current point is as good as it gets
  }
  return p;
}

double predict_probability(const SvmModel& model, std::span<const double> x) {
  return platt_probability(decision_value(model, x), model.platt_a, model.platt_b);
}

namespace {

constexpr char kBase64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::vector<std::uint8_t>& in) {
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < in.size(); i += 3) {
    std::uint32_t v = std::uint32_t{in[i]} << 16;
    if (i + 1 < in.size()) v |= std::uint32_t{in[i + 1]} << 8;
    if (i + 2 < in.size()) v |= in[i + 2];
    out += kBase64[(v >> 18) & 63];
    out += kBase64[(v >> 12) & 63];
    out += i + 1 < in.size() ? kBase64[(v >> 6) & 63] : '=';
    out += i + 2 < in.size() ? kBase64[v & 63] : '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& in) {
  auto value = [](char ch) -> int {
    if (ch >= 'A' && ch <= 'Z') return ch - 'A';
    if (ch >= 'a' && ch <= 'z') return ch - 'a' + 26;
    if (ch >= '0' && ch <= '9') return ch - '0' + 52;
    if (ch == '+') return 62;
    if (ch == '/') return 63;
    return -1;
  };
  require(in.size() % 4 == 0, "base64 length must be a multiple of 4");
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < in.size(); i += 4) {
    std::uint32_t v = 0;
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char ch = in[i + k];
      int d = 0;
      if (ch == '=') {
        ++pad;
      } else {
        d = value(ch);
        require(d >= 0 && pad == 0, "invalid base64 data");
      }
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

std::string pack_f64(const std::vector<double>& values) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(values.size() * 8);
  for (double v : values) detail::put_f64(bytes, v);
  return base64_encode(bytes);
}

std::vector<double> unpack_f64(const std::string& text) {
  const auto bytes = base64_decode(text);
  require(bytes.size() % 8 == 0, "packed f64 vector has a partial element");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::get_f64(&bytes[8 * i]);
  return out;
}

}  // namespace

std::string serialize_model(const SvmModel& model) {
  const auto& c = model.config;
  json doc = {
      {"weights", pack_f64(model.weights)},
      {"bias", model.bias},
      {"platt_a", model.platt_a},
      {"platt_b", model.platt_b},
      {"feature_mean", pack_f64(model.feature_mean)},
      {"feature_scale", pack_f64(model.feature_scale)},
      {"config",
       {{"c", c.c},
        {"gamma", c.gamma},
        {"class_weighting", c.class_weighting == ClassWeighting::kNone ? "none" : "inverse_frequency"},
        {"tolerance", c.tolerance},
        {"max_iterations", c.max_iterations},
        {"seed", c.seed},
        {"standardize", c.standardize}}},
      {"training_checksum", model.training_checksum},
      {"iterations", model.iterations},
      {"converged", model.converged},
  };
  return doc.dump(2) + "\n";
}

SvmModel deserialize_model(const std::string& json_text) {
  SvmModel model;
  try {
    const json doc = json::parse(json_text);
    model.weights = unpack_f64(doc.at("weights").get<std::string>());
    model.bias = doc.at("bias").get<double>();
    model.platt_a = doc.at("platt_a").get<double>();
    model.platt_b = doc.at("platt_b").get<double>();
    model.feature_mean = unpack_f64(doc.at("feature_mean").get<std::string>());
    model.feature_scale = unpack_f64(doc.at("feature_scale").get<std::string>());
    const auto& c = doc.at("config");
    model.config.c = c.at("c").get<double>();
    model.config.gamma = c.at("gamma").get<double>();
    model.config.class_weighting = c.at("class_weighting").get<std::string>() == "none"
                                       ? ClassWeighting::kNone
                                       : ClassWeighting::kInverseFrequency;
    model.config.tolerance = c.at("tolerance").get<double>();
    model.config.max_iterations = c.at("max_iterations").get<int>();
    model.config.seed = c.at("seed").get<std::uint64_t>();
    model.config.standardize = c.at("standardize").get<bool>();
    model.training_checksum = doc.at("training_checksum").get<std::string>();
    model.iterations = doc.value("iterations", 0);
    model.converged = doc.value("converged", true);
  } catch (const json::exception& e) {
    fail(ErrorKind::kInvalidInput, std::string("malformed model JSON: ") + e.what());
  }
  require(model.weights.size() == model.feature_mean.size() &&
              model.weights.size() == model.feature_scale.size(),
          "model vectors disagree in dimension");
  return model;
}

}  // namespace bmode
