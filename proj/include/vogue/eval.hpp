#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "vogue/env.hpp"
#include "vogue/policy.hpp"
#include "vogue/rng.hpp"

namespace vogue {

// 1 - C(n-c, k) / C(n, k), evaluated as 1 - prod_{i=n-c+1}^{n} (1 - k/i).
double pass_at_k(std::size_t n, std::size_t c, std::size_t k);

enum class Pass1Mode { mean, first };

struct EvalOptions {
  std::size_t n = 4;
  std::vector<std::size_t> ks{1, 4};
  double temperature = 1.0;
  bool greedy = false;
  std::size_t max_response_len = 12;
  Pass1Mode pass1 = Pass1Mode::mean;
};

struct FamilyReport {
  std::size_t tasks = 0;
  double pass1 = 0;
  std::map<std::size_t, double> pass_k;
};

struct EvalReport {
  std::string suite_id;
  std::size_t n = 0;
  std::vector<std::size_t> correct;  // per task
  double pass1 = 0;
  std::map<std::size_t, double> pass_k;
  std::map<std::string, FamilyReport> per_family;

  bool operator==(const EvalReport&) const;
};

// Produces one response for a task, drawing randomness from rng.
using Responder = std::function<Tokens(const TaskInstance&, RngStream&)>;

EvalReport evaluate_suite(const Responder& responder, const std::vector<TaskInstance>& suite,
                          const std::string& suite_id, const EvalOptions& options, const RngStream& rng);

template <class Real>
Responder policy_responder(const PolicyConfig& policy, const PolicyParams<Real>& params, const EvalOptions& options);

// Always answers correctly with a well-formed response.
Responder oracle_responder();

}  // namespace vogue
