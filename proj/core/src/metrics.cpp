#include "v2xfl/metrics.hpp"

#include <algorithm>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "v2xfl/error.hpp"

namespace v2xfl {

namespace {

constexpr double kConvergenceFraction = 0.95;

double max_of(const AccuracyTrace& t) { return *std::max_element(t.values.begin(), t.values.end()); }

std::optional<double> mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return std::nullopt;
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

template <typename T>
nlohmann::json optional_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string optional_cell(const std::optional<double>& v) {
  return v ? fmt::format("{}", *v) : std::string{};
}

}  // namespace

std::optional<std::size_t> convergence_speed(const AccuracyTrace& trace,
                                             const AccuracyTrace& baseline) {
  if (trace.values.empty()) throw ArgumentError("convergence speed of an empty trace");
  if (baseline.values.empty()) throw ArgumentError("convergence speed against an empty baseline");
  const double threshold = kConvergenceFraction * max_of(baseline);
  for (std::size_t t = 0; t < trace.values.size(); ++t) {
    if (trace.values[t] >= threshold) return t + 1;
  }
  return std::nullopt;
}

double maximal_accuracy_ratio(const AccuracyTrace& trace, const AccuracyTrace& baseline) {
  if (trace.values.empty() || baseline.values.empty()) {
    throw ArgumentError("maximal accuracy needs nonempty traces");
  }
  const double base = max_of(baseline);
  if (!(base > 0.0)) throw ArgumentError("baseline never exceeds zero accuracy");
  return max_of(trace) / base;
}

const CaseSummary* ComparisonReport::find(std::string_view name) const {
  for (const auto& c : cases) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

ComparisonReport aggregate_report(std::span<const CaseRuns> cases, const ReportContext& context) {
  const auto baseline_it = std::find_if(cases.begin(), cases.end(), [&](const CaseRuns& c) {
    return c.name == context.baseline_case;
  });
  if (baseline_it == cases.end()) {
    throw ArgumentError(fmt::format("report needs a '{}' case", context.baseline_case));
  }
  for (const auto& c : cases) {
    if (c.runs.empty()) throw ArgumentError(fmt::format("case '{}' has no runs", c.name));
  }

  ComparisonReport report;
  report.master_seed = context.master_seed;
  report.config_hash = context.config_hash;
  report.eval_set = baseline_it->runs.front().trace.eval_set;
  report.random_expectation =
      context.classes > 0 ? random_guess_expectation(context.participants, context.classes) : 0.0;
  for (const auto& c : cases) report.repetitions = std::max(report.repetitions, c.runs.size());

  const auto& baselines = baseline_it->runs;
  for (const auto& c : cases) {
    CaseSummary summary;
    summary.name = c.name;
    std::vector<double> cs, ma, r, r_max, ties, initial;
    for (std::size_t k = 0; k < c.runs.size(); ++k) {
      const auto& run = c.runs[k];
      const auto& base = baselines[k % baselines.size()].trace;
      RunMetrics m;
      m.initial_accuracy = run.initial_accuracy;
      initial.push_back(run.initial_accuracy);
      if (!run.trace.values.empty()) {
        m.best_accuracy = max_of(run.trace);
        m.final_accuracy = run.trace.values.back();
        if (!base.values.empty() && max_of(base) > 0.0) {
          m.convergence_speed = convergence_speed(run.trace, base);
          m.maximal_accuracy = maximal_accuracy_ratio(run.trace, base);
          ma.push_back(*m.maximal_accuracy);
          if (m.convergence_speed) {
            cs.push_back(static_cast<double>(*m.convergence_speed));
          } else {
            ++summary.non_convergent;
          }
        }
      }
      if (run.attack && !run.attack->per_round.empty()) {
        m.attack_success = run.attack->tail_mean;
        m.attack_success_max = run.attack->max;
        m.attack_tie_hits = run.attack->tail_tie_hits;
        r.push_back(run.attack->tail_mean);
        r_max.push_back(run.attack->max);
        ties.push_back(run.attack->tail_tie_hits);
      }
      summary.runs.push_back(std::move(m));
    }
    summary.mean_initial_accuracy = mean_of(initial).value_or(0.0);
    summary.mean_convergence_speed = mean_of(cs);
    summary.mean_maximal_accuracy = mean_of(ma);
    summary.mean_attack_success = mean_of(r);
    summary.mean_attack_success_max = mean_of(r_max);
    if (summary.mean_attack_success) {
      summary.secure = is_secure(*summary.mean_attack_success, report.random_expectation,
                                 mean_of(ties).value_or(0.0));
    }
    report.cases.push_back(std::move(summary));
  }
  return report;
}

std::string report_to_json(const ComparisonReport& report) {
  nlohmann::json doc;
  doc["config_hash"] = report.config_hash;
  doc["master_seed"] = report.master_seed;
  doc["repetitions"] = report.repetitions;
  doc["eval_set"] = report.eval_set;
  doc["random_expectation"] = report.random_expectation;
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& c : report.cases) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& m : c.runs) {
      runs.push_back({{"initial_accuracy", m.initial_accuracy},
                      {"cs", optional_json(m.convergence_speed)},
                      {"ma", optional_json(m.maximal_accuracy)},
                      {"best_accuracy", optional_json(m.best_accuracy)},
                      {"final_accuracy", optional_json(m.final_accuracy)},
                      {"r", optional_json(m.attack_success)},
                      {"r_max", optional_json(m.attack_success_max)},
                      {"tie_hits", optional_json(m.attack_tie_hits)}});
    }
    cases.push_back({{"method", c.name},
                     {"cs", optional_json(c.mean_convergence_speed)},
                     {"non_convergent", c.non_convergent},
                     {"ma", optional_json(c.mean_maximal_accuracy)},
                     {"initial_accuracy", c.mean_initial_accuracy},
                     {"r", optional_json(c.mean_attack_success)},
                     {"r_max", optional_json(c.mean_attack_success_max)},
                     {"secure", optional_json(c.secure)},
                     {"runs", std::move(runs)}});
  }
  doc["cases"] = std::move(cases);
  return doc.dump(2) + "\n";
}

void write_report_csv(std::ostream& out, const ComparisonReport& report) {
  out << "# config_hash=" << report.config_hash << '\n';
  out << "method,CS,MA,R,non_convergent,secure\n";
  for (const auto& c : report.cases) {
    out << c.name << ',' << optional_cell(c.mean_convergence_speed) << ','
        << optional_cell(c.mean_maximal_accuracy) << ',' << optional_cell(c.mean_attack_success)
        << ',' << c.non_convergent << ',' << (c.secure ? (*c.secure ? "yes" : "no") : "") << '\n';
  }
}

}  // namespace v2xfl
