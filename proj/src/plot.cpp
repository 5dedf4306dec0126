#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "boostdet/errors.hpp"
#include "boostdet/postprocess.hpp"
#include "boostdet/runner.hpp"

namespace boostdet {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 64.0;
constexpr double kRight = 20.0;
constexpr double kTop = 24.0;
constexpr double kBottom = 56.0;

std::string svg_header() {
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(kWidth) << "\" height=\""
      << fmt(kHeight) << "\" viewBox=\"0 0 " << fmt(kWidth) << " " << fmt(kHeight) << "\">\n"
      << "<rect width=\"" << fmt(kWidth) << "\" height=\"" << fmt(kHeight)
      << "\" fill=\"white\"/>\n";
  return out.str();
}

std::string svg_text(double x, double y, const std::string& text, int size = 12,
                     const std::string& anchor = "middle") {
  std::ostringstream out;
  out << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" font-size=\"" << size
      << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\">" << text
      << "</text>\n";
  return out.str();
}

std::string svg_axes(const std::string& x_label, const std::string& y_label) {
  std::ostringstream out;
  out << "<line x1=\"" << fmt(kLeft) << "\" y1=\"" << fmt(kHeight - kBottom) << "\" x2=\""
      << fmt(kWidth - kRight) << "\" y2=\"" << fmt(kHeight - kBottom)
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << fmt(kLeft) << "\" y1=\"" << fmt(kTop) << "\" x2=\"" << fmt(kLeft)
      << "\" y2=\"" << fmt(kHeight - kBottom) << "\" stroke=\"black\"/>\n";
  out << svg_text(kLeft + (kWidth - kLeft - kRight) / 2, kHeight - 12, x_label);
  out << svg_text(16, kTop + (kHeight - kTop - kBottom) / 2, y_label);
  return out.str();
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    throw InputError("plot: CSV is missing column '" + name + "'");
  }
};

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("plot: cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (first) {
      table.header = fields;
      first = false;
    } else {
      table.rows.push_back(fields);
    }
  }
  if (first) throw InputError("plot: '" + path + "' is empty");
  return table;
}

const char* kPalette[] = {"#3366cc", "#dc3912", "#ff9900", "#109618", "#990099", "#0099c6"};

// mean AP per variant label in first-seen order
std::vector<std::pair<std::string, double>> aggregate_by_variant(const CsvTable& table) {
  const int variant_col = table.column("variant");
  const int ap_col = table.column("ap");
  std::vector<std::pair<std::string, double>> labels;  // label -> sum
  std::map<std::string, int> counts;
  for (const auto& row : table.rows) {
    const std::string& label = row[variant_col];
    const double ap = std::stod(row[ap_col]);
    auto it = std::find_if(labels.begin(), labels.end(),
                           [&](const auto& p) { return p.first == label; });
    if (it == labels.end()) {
      labels.push_back({label, ap});
    } else {
      it->second += ap;
    }
    counts[label] += 1;
  }
  for (auto& [label, sum] : labels) sum /= counts[label];
  return labels;
}

std::string render_bars(const std::vector<std::pair<std::string, double>>& bars,
                        const std::string& title) {
  if (bars.empty()) throw InputError("plot: no bars to draw");
  double max_value = 0.0;
  for (const auto& [label, value] : bars) max_value = std::max(max_value, value);
  if (max_value <= 0.0) max_value = 1.0;

  std::ostringstream out;
  out << svg_header();
  out << svg_text(kWidth / 2, 16, title, 13);
  out << svg_axes("variant", "AP");
  const double span_x = kWidth - kLeft - kRight;
  const double span_y = kHeight - kTop - kBottom;
  const double slot = span_x / bars.size();
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double height = span_y * bars[i].second / max_value;
    const double x = kLeft + slot * i + slot * 0.2;
    const double y = kHeight - kBottom - height;
    out << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(slot * 0.6)
        << "\" height=\"" << fmt(height) << "\" fill=\"" << kPalette[i % 6] << "\"/>\n";
    out << svg_text(x + slot * 0.3, y - 4, fmt(bars[i].second), 11);
    out << svg_text(x + slot * 0.3, kHeight - kBottom + 16, bars[i].first, 11);
  }
  out << "</svg>\n";
  return out.str();
}

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

std::string render_lines(const std::vector<Series>& series, const std::string& title,
                         const std::string& x_label, const std::string& y_label) {
  double x_lo = 1e300, x_hi = -1e300, y_hi = 0.0;
  for (const Series& s : series) {
    for (const auto& [x, y] : s.points) {
      x_lo = std::min(x_lo, x);
      x_hi = std::max(x_hi, x);
      y_hi = std::max(y_hi, y);
    }
  }
  if (x_hi <= x_lo) x_hi = x_lo + 1.0;
  if (y_hi <= 0.0) y_hi = 1.0;

  const double span_x = kWidth - kLeft - kRight;
  const double span_y = kHeight - kTop - kBottom;
  auto map_x = [&](double x) { return kLeft + span_x * (x - x_lo) / (x_hi - x_lo); };
  auto map_y = [&](double y) { return kHeight - kBottom - span_y * y / y_hi; };

  std::ostringstream out;
  out << svg_header();
  out << svg_text(kWidth / 2, 16, title, 13);
  out << svg_axes(x_label, y_label);
  out << svg_text(kLeft, kHeight - kBottom + 16, fmt(x_lo), 10);
  out << svg_text(kWidth - kRight, kHeight - kBottom + 16, fmt(x_hi), 10, "end");
  out << svg_text(kLeft - 6, kTop + 4, fmt(y_hi), 10, "end");
  out << svg_text(kLeft - 6, kHeight - kBottom, "0", 10, "end");
  for (std::size_t s = 0; s < series.size(); ++s) {
    std::ostringstream poly;
    for (const auto& [x, y] : series[s].points) {
      poly << fmt(map_x(x)) << "," << fmt(map_y(y)) << " ";
    }
    out << "<polyline fill=\"none\" stroke=\"" << kPalette[s % 6] << "\" stroke-width=\"2\" "
        << "points=\"" << poly.str() << "\"/>\n";
    for (const auto& [x, y] : series[s].points) {
      out << "<circle cx=\"" << fmt(map_x(x)) << "\" cy=\"" << fmt(map_y(y))
          << "\" r=\"3\" fill=\"" << kPalette[s % 6] << "\"/>\n";
    }
    out << svg_text(kWidth - kRight - 4, kTop + 14 + 14 * s, series[s].name, 11, "end");
  }
  out << "</svg>\n";
  return out.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("plot: cannot open '" + path + "' for writing");
  out << text;
}

}  // namespace

PlotOutcome run_plot(const RunConfig& cfg) {
  PlotOutcome outcome;
  const std::string plot_dir = cfg.out_dir + "/plots";
  bool any_input = false;

  const std::string ablation = cfg.ablation_path();
  if (fs::exists(ablation)) {
    any_input = true;
    std::error_code ec;
    fs::create_directories(plot_dir, ec);
    const CsvTable table = read_csv(ablation);
    const int variant_col = table.column("variant");
    const bool eta_sweep = !table.rows.empty() &&
                           table.rows.front()[variant_col].rfind("eta=", 0) == 0;
    const bool omega_sweep = !table.rows.empty() &&
                             table.rows.front()[variant_col].rfind("omega=", 0) == 0;
    if (eta_sweep || omega_sweep) {
      const int param_col = table.column("parameter");
      const int norm_col = table.column("normalize");
      const int ap_col = table.column("ap");
      // mean AP per (parameter, normalize)
      std::map<std::pair<int, double>, std::pair<double, int>> agg;
      for (const auto& row : table.rows) {
        const double param = std::stod(row[param_col]);
        const int norm = std::stoi(row[norm_col]);
        auto& slot = agg[{norm, param}];
        slot.first += std::stod(row[ap_col]);
        slot.second += 1;
      }
      std::vector<Series> series;
      for (int norm : {1, 0}) {
        Series s;
        s.name = eta_sweep ? "fiou" : (norm ? "with normalization" : "without normalization");
        for (const auto& [key, value] : agg) {
          if (key.first != norm) continue;
          s.points.push_back({key.second, value.first / value.second});
        }
        std::sort(s.points.begin(), s.points.end());
        if (!s.points.empty()) series.push_back(s);
        if (eta_sweep) break;  // single series
      }
      const std::string name = eta_sweep ? "eta_sweep" : "omega_sweep";
      const std::string path = plot_dir + "/" + name + ".svg";
      write_file(path, render_lines(series, eta_sweep ? "fast IoU loss exponent sweep"
                                                      : "boosting exponent sweep",
                                    eta_sweep ? "eta" : "omega", "AP"));
      outcome.files.push_back(path);
    } else {
      const std::string path = plot_dir + "/ablation_bars.svg";
      write_file(path, render_bars(aggregate_by_variant(table), "ablation ladder (mean AP)"));
      outcome.files.push_back(path);
    }
  }

  const std::string det_path = cfg.detections_path();
  const std::string gt_path = cfg.gt_path();
  if (fs::exists(det_path) && fs::exists(gt_path)) {
    any_input = true;
    std::error_code ec;
    fs::create_directories(plot_dir, ec);
    const std::vector<EvalDetection> dets = read_detection_dump(det_path);
    const std::vector<EvalGt> gts = read_gt_dump(gt_path);
    std::vector<int> classes;
    for (const EvalGt& gt : gts) {
      if (std::find(classes.begin(), classes.end(), gt.class_id) == classes.end()) {
        classes.push_back(gt.class_id);
      }
    }
    std::sort(classes.begin(), classes.end());
    if (classes.empty()) throw InputError("plot: gt dump has no objects");

    std::vector<Series> series;
    std::string csv = "class_id,recall,precision\n";
    for (int cls : classes) {
      std::vector<PrPoint> points = pr_curve(dets, gts, cls, 0.5);
      Series s;
      s.name = "class " + std::to_string(cls);
      if (!points.empty()) {
        // anchor the curve at recall 0
        s.points.push_back({0.0, points.front().precision});
      }
      for (const PrPoint& p : points) s.points.push_back({p.recall, p.precision});
      for (const auto& [r, p] : s.points) {
        csv += std::to_string(cls) + "," + fmt(r) + "," + fmt(p) + "\n";
      }
      series.push_back(std::move(s));
    }
    const std::string svg_path = plot_dir + "/pr_curves.svg";
    write_file(svg_path, render_lines(series, "precision-recall at IoU 0.5", "recall", "precision"));
    outcome.files.push_back(svg_path);
    const std::string csv_path = plot_dir + "/pr_curves.csv";
    write_file(csv_path, csv);
    outcome.files.push_back(csv_path);
  }

  if (!any_input) {
    throw InputError("plot: no inputs available (need an ablation CSV or detection/gt dumps)");
  }
  return outcome;
}

}  // namespace boostdet
