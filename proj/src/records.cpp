#include "vogue/records.hpp"

#include <sstream>

#include "vogue/error.hpp"

namespace vogue {

namespace {

struct Field {
  std::string name;
  double StepMetrics::*member;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> f{
      {"reward_mean", &StepMetrics::reward_mean},
      {"accuracy_reward_mean", &StepMetrics::accuracy_reward_mean},
      {"format_reward_mean", &StepMetrics::format_reward_mean},
      {"noisy_reward_mean", &StepMetrics::noisy_reward_mean},
      {"noisy_accuracy_reward_mean", &StepMetrics::noisy_accuracy_reward_mean},
      {"uv_mean", &StepMetrics::uv_mean},
      {"entropy_mean", &StepMetrics::entropy_mean},
      {"bv_mean", &StepMetrics::bv_mean},
      {"be_mean", &StepMetrics::be_mean},
      {"p_noi", &StepMetrics::p_noi},
      {"noisy_fraction", &StepMetrics::noisy_fraction},
      {"clip_fraction", &StepMetrics::clip_fraction},
      {"objective", &StepMetrics::objective},
      {"mean_ratio", &StepMetrics::mean_ratio},
      {"response_len_mean", &StepMetrics::response_len_mean},
  };
  return f;
}

}  // namespace

const std::vector<std::string>& metric_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.name);
    return k;
  }();
  return keys;
}

ojson metrics_to_json(const StepMetrics& m) {
  ojson j;
  j["schema"] = kMetricsSchema;
  j["step"] = m.step;
  for (const auto& f : fields()) {
    const double v = m.*f.member;
    if (!std::isfinite(v)) throw NumericError("metrics: '" + f.name + "' is not finite at step " + std::to_string(m.step));
    j[f.name] = v;
  }
  return j;
}

StepMetrics metrics_from_json(const ojson& j) {
  StepMetrics m;
  m.step = j.at("step").get<std::uint64_t>();
  for (const auto& f : fields())
    if (j.contains(f.name)) m.*f.member = j.at(f.name).get<double>();
  return m;
}

MetricsWriter::MetricsWriter(const std::string& path, std::size_t flush_every)
    : out_(path, std::ios::trunc), flush_every_(flush_every ? flush_every : 1) {
  if (!out_) throw Error("metrics: cannot open '" + path + "'");
}

void MetricsWriter::write(const ojson& record) {
  out_ << record.dump() << '\n';
  if (++pending_ >= flush_every_) flush();
}

void MetricsWriter::flush() {
  out_.flush();
  pending_ = 0;
}

std::vector<ojson> read_metrics_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("metrics: cannot open '" + path + "'");
  std::vector<ojson> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ojson j = ojson::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw FormatError("metrics: line " + std::to_string(lineno) + " of '" + path + "' is not a JSON object");
    }
    if (j.value("schema", 0) > kMetricsSchema) {
      throw VersionError("metrics: '" + path + "' uses schema " + std::to_string(j.value("schema", 0)) +
                         ", this build knows up to " + std::to_string(kMetricsSchema));
    }
    out.push_back(std::move(j));
  }
  return out;
}

nlohmann::json task_to_json(const TaskInstance& t) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : t.scene.cells) {
    cells.push_back(c.occupied ? nlohmann::json{c.kind == ShapeKind::disc ? "disc" : "rect", c.color_class}
                               : nlohmann::json(nullptr));
  }
  std::vector<std::string> safe;
  for (auto s : t.safe_transforms) safe.emplace_back(transform_name(s));
  return {{"family", std::string(family_name(t.family))},
          {"difficulty", t.difficulty},
          {"image_size", t.image.height},
          {"grid", t.scene.grid},
          {"cells", cells},
          {"palette", t.scene.palette},
          {"question", t.question},
          {"answer", t.answer},
          {"safe_transforms", safe},
          {"ambiguous", t.ambiguous},
          {"jitter_bound", t.jitter_bound}};
}

TaskInstance task_from_json(const nlohmann::json& j) {
  try {
    TaskInstance t;
    t.family = parse_family(j.at("family").get<std::string>());
    t.difficulty = j.at("difficulty").get<std::size_t>();
    t.scene.grid = j.at("grid").get<std::size_t>();
    for (const auto& c : j.at("cells")) {
      Cell cell;
      if (!c.is_null()) {
        cell.occupied = true;
        cell.kind = c.at(0).get<std::string>() == "disc" ? ShapeKind::disc : ShapeKind::rect;
        cell.color_class = c.at(1).get<std::size_t>();
        if (cell.color_class >= kNumColors) throw FormatError("suite: color class out of range");
      }
      t.scene.cells.push_back(cell);
    }
    if (t.scene.cells.size() != t.scene.grid * t.scene.grid) throw FormatError("suite: cell count does not match grid");
    t.scene.palette = j.at("palette").get<std::array<Color, kNumColors + 1>>();
    t.question = j.at("question").get<Tokens>();
    t.answer = j.at("answer").get<Tokens>();
    for (const auto& s : j.at("safe_transforms")) t.safe_transforms.push_back(parse_transform(s.get<std::string>()));
    t.ambiguous = j.at("ambiguous").get<bool>();
    t.jitter_bound = j.at("jitter_bound").get<double>();
    t.image = render(t.scene, j.at("image_size").get<std::size_t>());
    if (answer_for(t.family, t.scene, t.question) != t.answer) {
      throw FormatError("suite: stored answer disagrees with the scene");
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("suite: malformed task record: ") + e.what());
  }
}

void write_suite(const std::string& path, const std::vector<TaskInstance>& suite) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("suite: cannot write '" + path + "'");
  for (const auto& t : suite) out << task_to_json(t).dump() << '\n';
}

std::vector<TaskInstance> read_suite(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("suite: cannot open '" + path + "'");
  std::vector<TaskInstance> suite;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw FormatError("suite: line " + std::to_string(suite.size() + 1) + " is not JSON");
    suite.push_back(task_from_json(j));
  }
  return suite;
}

std::vector<TaskInstance> generate_suite(const std::vector<std::pair<Family, double>>& mix, std::size_t difficulty,
                                         const EnvOptions& options, std::size_t size, std::uint64_t seed) {
  std::vector<double> weights;
  for (const auto& [f, w] : mix) weights.push_back(w);
  const RngStream root = RngStream(seed).derive("suite");
  std::vector<TaskInstance> suite;
  for (std::size_t i = 0; i < size; ++i) {
    RngStream rng = root.derive("task", i);
    const Family f = mix[rng.categorical(weights)].first;
    suite.push_back(generate_task(f, difficulty, rng, options));
  }
  return suite;
}

ojson report_to_json(const EvalReport& r) {
  auto pk = [](const std::map<std::size_t, double>& m) {
    ojson o = ojson::object();
    for (const auto& [k, v] : m) o[std::to_string(k)] = v;
    return o;
  };
  ojson j;
  j["suite_id"] = r.suite_id;
  j["n"] = r.n;
  j["pass1"] = r.pass1;
  j["pass_k"] = pk(r.pass_k);
  ojson fam = ojson::object();
  for (const auto& [name, f] : r.per_family) fam[name] = {{"tasks", f.tasks}, {"pass1", f.pass1}, {"pass_k", pk(f.pass_k)}};
  j["per_family"] = fam;
  j["correct"] = r.correct;
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  auto pk = [](const nlohmann::json& o) {
    std::map<std::size_t, double> m;
    for (auto it = o.begin(); it != o.end(); ++it) m[std::stoul(it.key())] = it.value().get<double>();
    return m;
  };
  try {
    EvalReport r;
    r.suite_id = j.at("suite_id").get<std::string>();
    r.n = j.at("n").get<std::size_t>();
    r.pass1 = j.at("pass1").get<double>();
    r.pass_k = pk(j.at("pass_k"));
    for (auto it = j.at("per_family").begin(); it != j.at("per_family").end(); ++it) {
      FamilyReport f;
      f.tasks = it.value().at("tasks").get<std::size_t>();
      f.pass1 = it.value().at("pass1").get<double>();
      f.pass_k = pk(it.value().at("pass_k"));
      r.per_family[it.key()] = f;
    }
    r.correct = j.at("correct").get<std::vector<std::size_t>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report: malformed record: ") + e.what());
  }
}

}  // namespace vogue
