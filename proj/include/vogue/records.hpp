#pragma once

// Line-delimited records: per-step metrics, task suites, evaluation reports.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vogue/env.hpp"
#include "vogue/eval.hpp"
#include "vogue/grpo.hpp"

namespace vogue {

using ojson = nlohmann::ordered_json;

inline constexpr int kMetricsSchema = 1;

// Metric keys in record order (after "schema" and "step").
const std::vector<std::string>& metric_keys();

ojson metrics_to_json(const StepMetrics& m);
// Unknown fields are ignored here but kept by read_metrics_file.
StepMetrics metrics_from_json(const ojson& j);

class MetricsWriter {
 public:
  MetricsWriter(const std::string& path, std::size_t flush_every);
  void write(const ojson& record);
  void flush();

 private:
  std::ofstream out_;
  std::size_t flush_every_;
  std::size_t pending_ = 0;
};

// Every record verbatim, including fields this build does not know.
std::vector<ojson> read_metrics_file(const std::string& path);

nlohmann::json task_to_json(const TaskInstance& t);
TaskInstance task_from_json(const nlohmann::json& j);
void write_suite(const std::string& path, const std::vector<TaskInstance>& suite);
std::vector<TaskInstance> read_suite(const std::string& path);
std::vector<TaskInstance> generate_suite(const std::vector<std::pair<Family, double>>& mix, std::size_t difficulty,
                                         const EnvOptions& options, std::size_t size, std::uint64_t seed);

ojson report_to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

}  // namespace vogue
