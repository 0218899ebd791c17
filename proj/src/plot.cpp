#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "vogue/error.hpp"
#include "vogue/harness.hpp"

namespace vogue {

namespace fs = std::filesystem;

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::set<std::string> numeric_keys(const RunSeries& run) {
  std::set<std::string> keys;
  for (const auto& r : run.records)
    for (auto it = r.begin(); it != r.end(); ++it)
      if (it.value().is_number() && it.key() != "step" && it.key() != "schema") keys.insert(it.key());
  return keys;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

RunSeries load_run(const std::string& run_dir) {
  const fs::path dir(run_dir);
  const fs::path file = fs::is_directory(dir) ? dir / "metrics.jsonl" : dir;
  RunSeries s;
  s.records = read_metrics_file(file.string());
  if (s.records.empty()) throw Error("plot: run '" + run_dir + "' has no metric records");
  const fs::path d = fs::is_directory(dir) ? dir : dir.parent_path();
  const fs::path clean = d.lexically_normal().has_filename() ? d.lexically_normal() : d.lexically_normal().parent_path();
  s.label = clean.parent_path().filename().empty() ? clean.filename().string()
                                                   : clean.parent_path().filename().string() + "/" +
                                                         clean.filename().string();
  return s;
}

std::string render_svg(const std::vector<RunSeries>& runs, const std::string& key) {
  const double W = 720, H = 420, L = 70, R = 170, T = 40, B = 50;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& run : runs)
    for (const auto& r : run.records) {
      if (!r.contains(key) || !r.at(key).is_number()) continue;
      const double x = r.at("step").get<double>(), y = r.at(key).get<double>();
      xmin = std::min(xmin, x), xmax = std::max(xmax, x), ymin = std::min(ymin, y), ymax = std::max(ymax, y);
    }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymin -= 0.5, ymax += 0.5;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad, ymax += pad;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << key << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = ymin + (ymax - ymin) * i / 4, xv = xmin + (xmax - xmin) * i / 4;
    o << "<line x1=\"" << L << "\" y1=\"" << py(yv) << "\" x2=\"" << W - R << "\" y2=\"" << py(yv)
      << "\" stroke=\"#ddd\"/>\n";
    o << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << fmt(yv) << "</text>\n";
    o << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << fmt(xv) << "</text>\n";
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">step</text>\n";
  for (std::size_t s = 0; s < runs.size(); ++s) {
    const char* color = kPalette[s % std::size(kPalette)];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& r : runs[s].records) {
      if (!r.contains(key) || !r.at(key).is_number()) continue;
      o << px(r.at("step").get<double>()) << "," << py(r.at(key).get<double>()) << " ";
    }
    o << "\"/>\n";
    const double ly = T + 16 * static_cast<double>(s);
    o << "<line x1=\"" << W - R + 12 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 32 << "\" y2=\"" << ly
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << W - R + 38 << "\" y=\"" << ly + 4 << "\">" << runs[s].label << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::vector<std::string> plot_runs(const std::vector<RunSeries>& runs, const std::vector<std::string>& keys,
                                   const std::string& out_dir) {
  if (runs.empty()) throw Error("plot: no runs given");
  if (keys.empty()) throw Error("plot: no keys given");
  for (const auto& run : runs) {
    if (run.records.empty()) throw Error("plot: run '" + run.label + "' has no metric records");
    const auto avail = numeric_keys(run);
    for (const auto& k : keys) {
      if (!avail.count(k)) {
        std::string list;
        for (const auto& a : avail) list += (list.empty() ? "" : ", ") + a;
        throw ConfigError("plot: key '" + k + "' not in run '" + run.label + "' (available: " + list + ")");
      }
    }
  }
  fs::create_directories(out_dir);
  std::vector<std::string> written;
  for (const auto& key : keys) {
    std::set<std::uint64_t> steps;
    std::vector<std::map<std::uint64_t, std::string>> cols(runs.size());
    for (std::size_t s = 0; s < runs.size(); ++s)
      for (const auto& r : runs[s].records) {
        const auto step = r.at("step").get<std::uint64_t>();
        steps.insert(step);
        if (r.contains(key)) cols[s][step] = r.at(key).dump();  // shortest round-trip form
      }
    std::ostringstream csv;
    csv << "step";
    for (const auto& run : runs) csv << "," << run.label;
    csv << "\n";
    for (auto step : steps) {
      csv << step;
      for (const auto& c : cols) {
        csv << ",";
        if (auto it = c.find(step); it != c.end()) csv << it->second;
      }
      csv << "\n";
    }
    const fs::path base = fs::path(out_dir) / key;
    std::ofstream(base.string() + ".csv") << csv.str();
    std::ofstream(base.string() + ".svg") << render_svg(runs, key);
    written.push_back(base.string() + ".csv");
    written.push_back(base.string() + ".svg");
  }
  return written;
}

}  // namespace vogue
