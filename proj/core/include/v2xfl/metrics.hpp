#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "v2xfl/adversary.hpp"

namespace v2xfl {

/// Accuracy of the global (or centralized) model after rounds 1..T.
struct AccuracyTrace {
  std::vector<double> values;
  std::string eval_set;
};

/// First 1-based round whose accuracy reaches 95% of the baseline's best;
/// nullopt if the trace never gets there.
std::optional<std::size_t> convergence_speed(const AccuracyTrace& trace,
                                             const AccuracyTrace& baseline);

/// max(trace) / max(baseline); may exceed 1.
double maximal_accuracy_ratio(const AccuracyTrace& trace, const AccuracyTrace& baseline);

struct RunResult {
  double initial_accuracy = 0.0;
  AccuracyTrace trace;
  std::optional<AttackSummary> attack;
};

struct CaseRuns {
  std::string name;
  std::vector<RunResult> runs;
};

/// CS and MA are absent when either trace is empty (zero rounds).
struct RunMetrics {
  double initial_accuracy = 0.0;
  std::optional<std::size_t> convergence_speed;
  std::optional<double> maximal_accuracy;
  std::optional<double> best_accuracy;
  std::optional<double> final_accuracy;
  std::optional<double> attack_success;       ///< tail mean of R
  std::optional<double> attack_success_max;
  std::optional<double> attack_tie_hits;
};

struct CaseSummary {
  std::string name;
  std::vector<RunMetrics> runs;
  /// Mean over convergent runs only.
  std::optional<double> mean_convergence_speed;
  std::size_t non_convergent = 0;
  double mean_initial_accuracy = 0.0;
  std::optional<double> mean_maximal_accuracy;
  std::optional<double> mean_attack_success;
  std::optional<double> mean_attack_success_max;
  std::optional<bool> secure;
};

struct ReportContext {
  std::string baseline_case = "baseline";
  std::size_t participants = 0;
  std::size_t classes = 0;
  std::uint64_t master_seed = 0;
  std::string config_hash;
};

struct ComparisonReport {
  std::vector<CaseSummary> cases;
  std::size_t repetitions = 0;
  std::uint64_t master_seed = 0;
  std::string config_hash;
  std::string eval_set;
  double random_expectation = 0.0;

  const CaseSummary* find(std::string_view name) const;
};

/// Per-case means over repetitions; run k of every case is scored against
/// run k of the baseline case. Throws ArgumentError without a baseline or
/// with an empty case.
ComparisonReport aggregate_report(std::span<const CaseRuns> cases, const ReportContext& context);

std::string report_to_json(const ComparisonReport& report);
/// method,CS,MA,R plus non_convergent and secure columns.
void write_report_csv(std::ostream& out, const ComparisonReport& report);

}  // namespace v2xfl
