#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "vogue/error.hpp"
#include "vogue/harness.hpp"

namespace vogue {

namespace fs = std::filesystem;

const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> v{"no-uv",          "no-entropy", "no-uv-no-entropy", "fixed-prob-0.5",
                                          "forward-kl",     "sigma-0.2",  "sigma-0.4",        "sigma-0.8"};
  return v;
}

json variant_overrides(const std::string& name) {
  if (name == "grpo") return {{"algorithm", "grpo"}};
  json o{{"algorithm", "vogue"}};
  if (name == "vogue") return o;
  if (name == "no-uv") {
    o["vogue.enable_uv"] = false;
  } else if (name == "no-entropy") {
    o["vogue.enable_entropy"] = false;
  } else if (name == "no-uv-no-entropy") {
    o["vogue.enable_uv"] = false;
    o["vogue.enable_entropy"] = false;
  } else if (name == "fixed-prob-0.5") {
    o["vogue.p_start"] = 0.5;
    o["vogue.p_end"] = 0.5;
  } else if (name == "forward-kl") {
    o["vogue.divergence"] = "forward-kl";
  } else if (name == "sigma-0.2") {
    o["augment.sigma"] = 0.2;
  } else if (name == "sigma-0.4") {
    o["augment.sigma"] = 0.4;
  } else if (name == "sigma-0.8") {
    o["augment.sigma"] = 0.8;
  } else {
    std::string valid = "grpo, vogue";
    for (const auto& v : ablation_variants()) valid += ", " + v;
    throw ConfigError("ablate: unknown variant '" + name + "' (valid: " + valid + ")");
  }
  return o;
}

namespace {

RunConfig variant_config(json doc, const json& overrides, std::uint64_t seed) {
  for (auto it = overrides.begin(); it != overrides.end(); ++it) apply_override(doc, it.key() + "=" + it.value().dump());
  apply_override(doc, "seed=" + std::to_string(seed));
  return config_from_json(doc);
}

template <class Real>
RunResult<Real> run_checked(const RunConfig& c, const std::string& dir, const std::string& what, std::ostream* log) {
  auto r = run_training<Real>(c, dir, nullptr);
  if (r.status != "complete") throw NumericError("ablate: run '" + what + "' aborted: " + r.error);
  if (log) {
    const double acc = r.metrics.empty() ? 0.0 : r.metrics.back().accuracy_reward_mean;
    char buf[200];
    std::snprintf(buf, sizeof buf, "%-22s pass@1 %.4f  final acc-reward %.4f\n", what.c_str(), r.final_eval->pass1,
                  acc);
    *log << buf;
  }
  return r;
}

struct Curve {
  std::vector<double> sum;
  std::size_t runs = 0;
};

template <class Real>
AblationReport ablate_impl(const json& base_doc, const AblationOptions& options, const std::string& out_dir,
                           std::ostream* log) {
  std::vector<std::string> names{"grpo", "vogue"};
  const auto& wanted = options.variants.empty() ? ablation_variants() : options.variants;
  for (const auto& v : wanted) {
    variant_overrides(v);  // rejects unknown names before any compute
    if (std::find(names.begin(), names.end(), v) == names.end()) names.push_back(v);
  }
  const RunConfig base = config_from_json(base_doc);
  AblationReport report;
  for (std::size_t k : base.eval.ks) report.k_top = std::max(report.k_top, k);

  std::map<std::string, Curve> curves;
  std::map<std::uint64_t, std::vector<std::string>> grpo_lines;
  for (const auto& name : names) {
    VariantSummary row;
    row.name = name;
    const json over = variant_overrides(name);
    for (std::size_t s = 0; s < options.seeds; ++s) {
      const std::uint64_t seed = base.seed + s;
      const RunConfig c = variant_config(base_doc, over, seed);
      const std::string dir = (fs::path(out_dir) / name / ("seed" + std::to_string(seed))).string();
      auto r = run_checked<Real>(c, dir, name + "/seed" + std::to_string(seed), log);
      if (name == "grpo") grpo_lines[seed] = r.metric_lines;
      row.pass1.push_back(r.final_eval->pass1);
      row.pass_k_top.push_back(r.final_eval->pass_k.count(report.k_top) ? r.final_eval->pass_k.at(report.k_top) : 0);
      const std::size_t tail = std::max<std::size_t>(1, r.metrics.size() / 10);
      double acc = 0;
      for (std::size_t i = r.metrics.size() - tail; i < r.metrics.size(); ++i) acc += r.metrics[i].accuracy_reward_mean;
      row.final_accuracy.push_back(acc / static_cast<double>(tail));
      for (const auto& [fam, fr] : r.final_eval->per_family) row.family_pass1[fam].push_back(fr.pass1);
      Curve& cv = curves[name];
      cv.sum.resize(r.metrics.size(), 0.0);
      for (std::size_t i = 0; i < r.metrics.size(); ++i) cv.sum[i] += r.metrics[i].accuracy_reward_mean;
      ++cv.runs;
    }
    report.rows.push_back(std::move(row));
  }

  if (options.check_equivalence) {
    // VOGUE with both bonuses off, p_noi pinned at 0 and lazy noisy rollouts
    // must reproduce the GRPO baseline line for line.
    const std::uint64_t seed = base.seed;
    json over = variant_overrides("no-uv-no-entropy");
    over["vogue.p_start"] = 0.0;
    over["vogue.p_end"] = 0.0;
    over["vogue.lazy_noisy"] = true;
    const RunConfig c = variant_config(base_doc, over, seed);
    auto r = run_checked<Real>(c, (fs::path(out_dir) / "equivalence" / "no-uv-no-entropy-p0").string(),
                               "equivalence/no-uv-no-entropy-p0", log);
    const auto& ref = grpo_lines.at(seed);
    report.equivalence_checked = true;
    report.equivalence_holds = ref == r.metric_lines;
    if (report.equivalence_holds) {
      report.equivalence_detail = "identical over " + std::to_string(ref.size()) + " metric records";
    } else {
      std::size_t i = 0;
      while (i < ref.size() && i < r.metric_lines.size() && ref[i] == r.metric_lines[i]) ++i;
      report.equivalence_detail = "first differing metric record at step " + std::to_string(i);
    }
    if (log) *log << "equivalence: " << report.equivalence_detail << "\n";
  }

  fs::create_directories(out_dir);
  std::vector<RunSeries> series;
  for (const auto& name : names) {
    RunSeries rs{name, {}};
    const Curve& cv = curves[name];
    for (std::size_t i = 0; i < cv.sum.size(); ++i) {
      ojson rec;
      rec["step"] = i;
      rec["accuracy_reward_mean"] = cv.sum[i] / static_cast<double>(cv.runs);
      rs.records.push_back(rec);
    }
    series.push_back(std::move(rs));
  }
  plot_runs(series, {"accuracy_reward_mean"}, (fs::path(out_dir) / "plots").string());
  std::ofstream(fs::path(out_dir) / "comparison.md") << comparison_markdown(report);
  std::ofstream(fs::path(out_dir) / "comparison.csv") << comparison_csv(report);
  std::ofstream(fs::path(out_dir) / "comparison.json") << comparison_json(report).dump(2) << "\n";
  if (report.equivalence_checked && !report.equivalence_holds) {
    throw ContractError("ablate: no-uv-no-entropy with p_noi = 0 diverged from grpo: " + report.equivalence_detail);
  }
  return report;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string cell(const std::vector<double>& v) {
  char buf[64];
  if (v.size() > 1) {
    std::snprintf(buf, sizeof buf, "%.4f ± %.4f", mean_of(v), std_of(v));
  } else {
    std::snprintf(buf, sizeof buf, "%.4f", mean_of(v));
  }
  return buf;
}

std::set<std::string> families_of(const AblationReport& r) {
  std::set<std::string> f;
  for (const auto& row : r.rows)
    for (const auto& [name, v] : row.family_pass1) f.insert(name);
  return f;
}

std::string row_label(const std::string& name) {
  if (name == "grpo") return "GRPO";
  if (name == "vogue") return "VOGUE (full)";
  return "  " + name;
}

}  // namespace

AblationReport run_ablation(const json& base_doc, const AblationOptions& options, const std::string& out_dir,
                            std::ostream* log) {
  if (options.seeds == 0) throw ConfigError("ablate: seeds must be positive");
  const RunConfig base = config_from_json(base_doc);
  if (base.precision == "f64") return ablate_impl<double>(base_doc, options, out_dir, log);
  return ablate_impl<float>(base_doc, options, out_dir, log);
}

std::string comparison_markdown(const AblationReport& r) {
  const auto fams = families_of(r);
  std::ostringstream o;
  const std::size_t seeds = r.rows.empty() ? 0 : r.rows.front().pass1.size();
  o << "# Ablation comparison\n\n";
  o << "Final-evaluation pass@1 per task family, overall pass@1 and pass@" << r.k_top
    << ", and the accuracy reward averaged over the last tenth of training. ";
  o << seeds << " seed(s) per row" << (seeds > 1 ? "; cells are mean ± sample std.\n\n" : ".\n\n");
  o << "| Approach |";
  for (const auto& f : fams) o << " " << f << " pass@1 |";
  o << " pass@1 | pass@" << r.k_top << " | final acc-reward |\n|---|";
  for (std::size_t i = 0; i < fams.size() + 3; ++i) o << "---|";
  o << "\n";
  for (const auto& row : r.rows) {
    o << "| " << row_label(row.name) << " |";
    for (const auto& f : fams) o << " " << (row.family_pass1.count(f) ? cell(row.family_pass1.at(f)) : "") << " |";
    o << " " << cell(row.pass1) << " | " << cell(row.pass_k_top) << " | " << cell(row.final_accuracy) << " |\n";
  }
  if (r.equivalence_checked) {
    o << "\nGRPO equivalence (no-uv-no-entropy, p_noi = 0, lazy noisy branch): "
      << (r.equivalence_holds ? "holds" : "FAILS") << ", " << r.equivalence_detail << ".\n";
  }
  return o.str();
}

std::string comparison_csv(const AblationReport& r) {
  const auto fams = families_of(r);
  std::ostringstream o;
  o.precision(17);
  o << "variant,seeds,pass1_mean,pass1_std,pass" << r.k_top << "_mean,pass" << r.k_top
    << "_std,final_accuracy_mean,final_accuracy_std";
  for (const auto& f : fams) o << "," << f << "_pass1_mean";
  o << "\n";
  for (const auto& row : r.rows) {
    o << row.name << "," << row.pass1.size() << "," << mean_of(row.pass1) << "," << std_of(row.pass1) << ","
      << mean_of(row.pass_k_top) << "," << std_of(row.pass_k_top) << "," << mean_of(row.final_accuracy) << ","
      << std_of(row.final_accuracy);
    for (const auto& f : fams) o << "," << (row.family_pass1.count(f) ? mean_of(row.family_pass1.at(f)) : 0.0);
    o << "\n";
  }
  return o.str();
}

json comparison_json(const AblationReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"variant", row.name},
                    {"pass1", row.pass1},
                    {"pass_k", row.pass_k_top},
                    {"final_accuracy", row.final_accuracy},
                    {"family_pass1", row.family_pass1},
                    {"pass1_mean", mean_of(row.pass1)},
                    {"pass_k_mean", mean_of(row.pass_k_top)},
                    {"final_accuracy_mean", mean_of(row.final_accuracy)}});
  }
  return {{"k", r.k_top},
          {"rows", rows},
          {"equivalence", {{"checked", r.equivalence_checked},
                           {"holds", r.equivalence_holds},
                           {"detail", r.equivalence_detail}}}};
}

}  // namespace vogue
