#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "bmode/evaluate.hpp"

namespace bmode {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double v, const char* format = "%.6f") {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

// JSON has no infinity; the ROC start point's threshold is stored as null.
json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double from_nullable(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

json cell_id_json(const CellId& id) { return {{"train_set", id.train_set}, {"test_set", id.test_set}}; }
CellId cell_id_from(const json& j) {
  return {j.at("train_set").get<std::string>(), j.at("test_set").get<std::string>()};
}

std::string file_token(const CellId& id) { return id.train_set + "_to_" + id.test_set; }

}  // namespace

std::string report_to_json(const EvalReport& report) {
  json cells = json::array();
  for (const auto& c : report.cells) {
    json points = json::array();
    for (const auto& p : c.roc.points) {
      points.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}, {"threshold", finite_or_null(p.threshold)},
                        {"tp", p.true_positives}, {"fp", p.false_positives}});
    }
    cells.push_back({{"id", cell_id_json(c.id)},
                     {"auc", c.auc},
                     {"accuracy", c.op.accuracy},
                     {"sensitivity", c.op.sensitivity},
                     {"specificity", c.op.specificity},
                     {"threshold", finite_or_null(c.op.threshold)},
                     {"roc", {{"positives", c.roc.positives}, {"negatives", c.roc.negatives}, {"points", points}}},
                     {"lesion_probability", c.lesion_probability}});
  }
  json ba = json::array();
  for (const auto& b : report.bland_altman) {
    json points = json::array();
    for (const auto& [m, d] : b.stats.points) points.push_back({m, d});
    ba.push_back({{"a", cell_id_json(b.a)},
                  {"b", cell_id_json(b.b)},
                  {"mean_diff", b.stats.mean_diff},
                  {"sd_diff", b.stats.sd_diff},
                  {"loa_low", b.stats.loa_low},
                  {"loa_high", b.stats.loa_high},
                  {"points", points}});
  }
  json doc = {{"dataset", report.dataset_name},
              {"extractor_id", report.extractor_id},
              {"lesion_ids", report.lesion_ids},
              {"patient_ids", report.patient_ids},
              {"labels", report.labels},
              {"lesion_fold", report.lesion_fold},
              {"source_model_fold", report.source_model_fold},
              {"cells", cells},
              {"bland_altman", ba}};
  return doc.dump(1) + "\n";
}

EvalReport report_from_json(const std::string& json_text) {
  EvalReport r;
  try {
    const json doc = json::parse(json_text);
    r.dataset_name = doc.at("dataset").get<std::string>();
    r.extractor_id = doc.at("extractor_id").get<std::string>();
    r.lesion_ids = doc.at("lesion_ids").get<std::vector<std::string>>();
    r.patient_ids = doc.at("patient_ids").get<std::vector<std::string>>();
    r.labels = doc.at("labels").get<std::vector<int>>();
    r.lesion_fold = doc.at("lesion_fold").get<std::vector<int>>();
    r.source_model_fold = doc.at("source_model_fold").get<std::vector<int>>();
    for (const auto& c : doc.at("cells")) {
      CellResult cell;
      cell.id = cell_id_from(c.at("id"));
      cell.auc = c.at("auc").get<double>();
      cell.op.accuracy = c.at("accuracy").get<double>();
      cell.op.sensitivity = c.at("sensitivity").get<double>();
      cell.op.specificity = c.at("specificity").get<double>();
      cell.op.threshold = from_nullable(c.at("threshold"));
      const auto& roc = c.at("roc");
      cell.roc.positives = roc.at("positives").get<std::size_t>();
      cell.roc.negatives = roc.at("negatives").get<std::size_t>();
      for (const auto& p : roc.at("points")) {
        cell.roc.points.push_back({p.at("fpr").get<double>(), p.at("tpr").get<double>(),
                                   from_nullable(p.at("threshold")), p.at("tp").get<std::size_t>(),
                                   p.at("fp").get<std::size_t>()});
      }
      cell.lesion_probability = c.at("lesion_probability").get<std::vector<double>>();
      r.cells.push_back(std::move(cell));
    }
    for (const auto& b : doc.at("bland_altman")) {
      BlandAltmanResult res;
      res.a = cell_id_from(b.at("a"));
      res.b = cell_id_from(b.at("b"));
      res.stats.mean_diff = b.at("mean_diff").get<double>();
      res.stats.sd_diff = b.at("sd_diff").get<double>();
      res.stats.loa_low = b.at("loa_low").get<double>();
      res.stats.loa_high = b.at("loa_high").get<double>();
      for (const auto& p : b.at("points")) res.stats.points.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
      r.bland_altman.push_back(std::move(res));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kInvalidInput, std::string("malformed report JSON: ") + e.what());
  }
  return r;
}

std::string grid_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "train_set,test_set,auc,accuracy,sensitivity,specificity,threshold\n";
  for (const auto& c : report.cells) {
    os << c.id.train_set << ',' << c.id.test_set << ',' << num(c.auc) << ',' << num(c.op.accuracy) << ','
       << num(c.op.sensitivity) << ',' << num(c.op.specificity) << ',' << num(c.op.threshold, "%.9g")
       << '\n';
  }
  return os.str();
}

namespace {

// Train rows x test columns, in first-appearance order.
std::string auc_table_csv(const EvalReport& report) {
  std::vector<std::string> rows, cols;
  for (const auto& c : report.cells) {
    if (std::find(rows.begin(), rows.end(), c.id.train_set) == rows.end()) rows.push_back(c.id.train_set);
    if (std::find(cols.begin(), cols.end(), c.id.test_set) == cols.end()) cols.push_back(c.id.test_set);
  }
  std::ostringstream os;
  os << "train\\test";
  for (const auto& col : cols) os << ",Test_" << col;
  os << '\n';
  for (const auto& row : rows) {
    os << "Train_" << row;
    for (const auto& col : cols) os << ',' << num(report.cell(row, col).auc, "%.3f");
    os << '\n';
  }
  return os.str();
}

std::string lesion_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "lesion_id,patient_id,label,fold";
  for (const auto& c : report.cells) os << ',' << c.id.train_set << "->" << c.id.test_set;
  os << '\n';
  for (std::size_t i = 0; i < report.lesion_ids.size(); ++i) {
    os << report.lesion_ids[i] << ',' << report.patient_ids[i] << ','
       << (report.labels[i] == 1 ? "malignant" : "benign") << ',' << report.lesion_fold[i];
    for (const auto& c : report.cells) os << ',' << num(c.lesion_probability[i], "%.9f");
    os << '\n';
  }
  return os.str();
}

std::string summary_json(const EvalReport& report) {
  json cells = json::array();
  for (const auto& c : report.cells) {
    cells.push_back({{"train_set", c.id.train_set},
                     {"test_set", c.id.test_set},
                     {"auc", c.auc},
                     {"accuracy", c.op.accuracy},
                     {"sensitivity", c.op.sensitivity},
                     {"specificity", c.op.specificity},
                     {"threshold", finite_or_null(c.op.threshold)}});
  }
  json ba = json::array();
  for (const auto& b : report.bland_altman) {
    ba.push_back({{"a", b.a.str()},
                  {"b", b.b.str()},
                  {"mean_diff", b.stats.mean_diff},
                  {"sd_diff", b.stats.sd_diff},
                  {"loa_low", b.stats.loa_low},
                  {"loa_high", b.stats.loa_high}});
  }
  json doc = {{"dataset", report.dataset_name},
              {"extractor_id", report.extractor_id},
              {"lesions", report.lesion_ids.size()},
              {"cells", cells},
              {"bland_altman", ba}};
  return doc.dump(2) + "\n";
}

constexpr double kPlot = 360.0;
constexpr double kPad = 50.0;

std::string svg_open(const std::string& title) {
  std::ostringstream os;
  const double size = kPlot + 2 * kPad;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(size, "%.0f") << "\" height=\""
     << num(size, "%.0f") << "\" viewBox=\"0 0 " << num(size, "%.0f") << ' ' << num(size, "%.0f") << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << num(size / 2, "%.1f") << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
     << "font-size=\"14\">" << title << "</text>\n"
     << "<rect x=\"" << num(kPad, "%.1f") << "\" y=\"" << num(kPad, "%.1f") << "\" width=\"" << num(kPlot, "%.1f")
     << "\" height=\"" << num(kPlot, "%.1f") << "\" fill=\"none\" stroke=\"black\"/>\n";
  return os.str();
}

}  // namespace

std::string roc_svg(const CellResult& cell) {
  auto px = [](double fpr) { return kPad + fpr * kPlot; };
  auto py = [](double tpr) { return kPad + (1.0 - tpr) * kPlot; };
  std::ostringstream os;
  os << svg_open("ROC Train_" + cell.id.train_set + " / Test_" + cell.id.test_set + "  AUC=" +
                 num(cell.auc, "%.3f"));
  os << "<line class=\"chance\" x1=\"" << num(px(0), "%.2f") << "\" y1=\"" << num(py(0), "%.2f") << "\" x2=\""
     << num(px(1), "%.2f") << "\" y2=\"" << num(py(1), "%.2f")
     << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
  os << "<polyline class=\"roc\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < cell.roc.points.size(); ++i) {
    const auto& p = cell.roc.points[i];
    os << (i ? " " : "") << num(px(p.fpr), "%.2f") << ',' << num(py(p.tpr), "%.2f");
  }
  os << "\"/>\n";
  const double op_fpr = 1.0 - cell.op.specificity;
  os << "<circle class=\"operating-point\" cx=\"" << num(px(op_fpr), "%.2f") << "\" cy=\""
     << num(py(cell.op.sensitivity), "%.2f") << "\" r=\"4\" fill=\"crimson\"/>\n";
  os << "<text x=\"" << num(kPad + kPlot / 2, "%.1f") << "\" y=\"" << num(2 * kPad + kPlot - 12, "%.1f")
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">false positive rate</text>\n";
  os << "<text x=\"14\" y=\"" << num(kPad + kPlot / 2, "%.1f")
     << "\" transform=\"rotate(-90 14 " << num(kPad + kPlot / 2, "%.1f")
     << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">true positive rate</text>\n";
  os << "</svg>\n";
  return os.str();
}

std::string bland_altman_svg(const BlandAltmanResult& result) {
  const auto& s = result.stats;
  // y range symmetric around zero, wide enough for points and limits.
  double span = std::max({std::abs(s.loa_low), std::abs(s.loa_high), 0.1});
  for (const auto& [m, d] : s.points) span = std::max(span, std::abs(d));
  span *= 1.1;
  auto px = [](double mean) { return kPad + mean * kPlot; };
  auto py = [span](double diff) { return kPad + (0.5 - diff / (2.0 * span)) * kPlot; };

  std::ostringstream os;
  os << svg_open("Bland-Altman " + result.a.str() + " vs " + result.b.str());
  for (const auto& [m, d] : s.points) {
    os << "<circle cx=\"" << num(px(m), "%.2f") << "\" cy=\"" << num(py(d), "%.2f")
       << "\" r=\"2.5\" fill=\"steelblue\"/>\n";
  }
  const std::pair<const char*, double> lines[] = {
      {"mean", s.mean_diff}, {"loa-low", s.loa_low}, {"loa-high", s.loa_high}};
  for (const auto& [name, value] : lines) {
    const bool is_mean = std::string(name) == "mean";
    os << "<line class=\"" << name << "\" x1=\"" << num(px(0), "%.2f") << "\" y1=\"" << num(py(value), "%.2f")
       << "\" x2=\"" << num(px(1), "%.2f") << "\" y2=\"" << num(py(value), "%.2f") << "\" stroke=\""
       << (is_mean ? "black" : "crimson") << "\"" << (is_mean ? "" : " stroke-dasharray=\"6 3\"") << "/>\n";
  }
  os << "<text x=\"" << num(kPad + kPlot / 2, "%.1f") << "\" y=\"" << num(2 * kPad + kPlot - 12, "%.1f")
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">mean probability</text>\n";
  os << "<text x=\"14\" y=\"" << num(kPad + kPlot / 2, "%.1f") << "\" transform=\"rotate(-90 14 "
     << num(kPad + kPlot / 2, "%.1f")
     << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">difference</text>\n";
  os << "</svg>\n";
  return os.str();
}

void emit_report(const EvalReport& report, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create '" + out_dir.string() + "': " + ec.message());
  write_text_file(out_dir / "grid.csv", grid_csv(report));
  write_text_file(out_dir / "auc_table.csv", auc_table_csv(report));
  write_text_file(out_dir / "lesion_probabilities.csv", lesion_csv(report));
  write_text_file(out_dir / "summary.json", summary_json(report));
  write_text_file(out_dir / "report.json", report_to_json(report));
  for (const auto& c : report.cells) {
    write_text_file(out_dir / ("roc_" + file_token(c.id) + ".svg"), roc_svg(c));
  }
  for (const auto& b : report.bland_altman) {
    write_text_file(out_dir / ("bland_altman_" + file_token(b.a) + "_vs_" + file_token(b.b) + ".svg"),
                    bland_altman_svg(b));
  }
}

}  // namespace bmode
