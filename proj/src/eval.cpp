#include "vogue/eval.hpp"

#include <algorithm>
#include <memory>

#include "vogue/error.hpp"

namespace vogue {

double pass_at_k(std::size_t n, std::size_t c, std::size_t k) {
  if (k == 0) throw ContractError("pass_at_k: k must be >= 1");
  if (k > n) throw ContractError("pass_at_k: k = " + std::to_string(k) + " exceeds n = " + std::to_string(n));
  if (c > n) throw ContractError("pass_at_k: c = " + std::to_string(c) + " exceeds n = " + std::to_string(n));
  if (n - c < k) return 1.0;
  double miss = 1.0;
  for (std::size_t i = n - c + 1; i <= n; ++i) miss *= 1.0 - static_cast<double>(k) / static_cast<double>(i);
  return 1.0 - miss;
}

bool EvalReport::operator==(const EvalReport& o) const {
  if (suite_id != o.suite_id || n != o.n || correct != o.correct || pass1 != o.pass1 || pass_k != o.pass_k) return false;
  if (per_family.size() != o.per_family.size()) return false;
  for (const auto& [name, f] : per_family) {
    auto it = o.per_family.find(name);
    if (it == o.per_family.end()) return false;
    if (f.tasks != it->second.tasks || f.pass1 != it->second.pass1 || f.pass_k != it->second.pass_k) return false;
  }
  return true;
}

EvalReport evaluate_suite(const Responder& responder, const std::vector<TaskInstance>& suite,
                          const std::string& suite_id, const EvalOptions& options, const RngStream& rng) {
  if (suite.empty()) throw ContractError("evaluate_suite: empty suite");
  if (options.n == 0) throw ContractError("evaluate_suite: n must be positive");
  for (auto k : options.ks) {
    if (k == 0 || k > options.n) {
      throw ContractError("evaluate_suite: k = " + std::to_string(k) + " needs 1 <= k <= n = " + std::to_string(options.n));
    }
  }
  EvalReport report;
  report.suite_id = suite_id;
  report.n = options.n;
  std::map<std::string, std::vector<std::size_t>> family_tasks;
  std::vector<double> task_pass1;
  for (std::size_t i = 0; i < suite.size(); ++i) {
    const RngStream task_rng = rng.derive("task", i);
    std::size_t c = 0;
    bool first_ok = false;
    for (std::size_t s = 0; s < options.n; ++s) {
      RngStream sample_rng = task_rng.derive("sample", s);
      const bool ok = verify(responder(suite[i], sample_rng), suite[i]).accuracy == 1;
      c += ok ? 1 : 0;
      if (s == 0) first_ok = ok;
    }
    report.correct.push_back(c);
    task_pass1.push_back(options.pass1 == Pass1Mode::mean ? static_cast<double>(c) / static_cast<double>(options.n)
                                                          : (first_ok ? 1.0 : 0.0));
    family_tasks[std::string(family_name(suite[i].family))].push_back(i);
  }
  auto aggregate = [&](const std::vector<std::size_t>& tasks, double& pass1, std::map<std::size_t, double>& pk) {
    pass1 = 0;
    for (auto t : tasks) pass1 += task_pass1[t];
    pass1 /= static_cast<double>(tasks.size());
    for (auto k : options.ks) {
      double s = 0;
      for (auto t : tasks) s += pass_at_k(options.n, report.correct[t], k);
      pk[k] = s / static_cast<double>(tasks.size());
    }
  };
  std::vector<std::size_t> all(suite.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  aggregate(all, report.pass1, report.pass_k);
  for (const auto& [name, tasks] : family_tasks) {
    FamilyReport f;
    f.tasks = tasks.size();
    aggregate(tasks, f.pass1, f.pass_k);
    report.per_family[name] = std::move(f);
  }
  return report;
}

template <class Real>
Responder policy_responder(const PolicyConfig& policy, const PolicyParams<Real>& params, const EvalOptions& options) {
  auto frozen = std::make_shared<const PolicyParams<Real>>(snapshot(params));
  return [policy, frozen, options](const TaskInstance& task, RngStream& rng) {
    return sample_response(policy, *frozen, task.image, task.question, options.max_response_len, options.temperature,
                           rng, options.greedy)
        .tokens;
  };
}

Responder oracle_responder() {
  return [](const TaskInstance& task, RngStream&) {
    Tokens r{tok::THINK_OPEN, tok::THINK_CLOSE, tok::ANS_OPEN};
    r.insert(r.end(), task.answer.begin(), task.answer.end());
    r.push_back(tok::ANS_CLOSE);
    r.push_back(tok::EOS);
    return r;
  };
}

template Responder policy_responder(const PolicyConfig&, const PolicyParams<float>&, const EvalOptions&);
template Responder policy_responder(const PolicyConfig&, const PolicyParams<double>&, const EvalOptions&);

}  // namespace vogue
