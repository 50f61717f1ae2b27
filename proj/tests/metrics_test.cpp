#include "v2xfl/metrics.hpp"

#include <gtest/gtest.h>

#include <nlohmann/json.hpp>
#include <sstream>

#include "v2xfl/error.hpp"

using namespace v2xfl;

namespace {

AccuracyTrace trace(std::vector<double> v) { return AccuracyTrace{std::move(v), "pool"}; }

RunResult run(std::vector<double> v, std::optional<double> r = std::nullopt) {
  RunResult out;
  out.initial_accuracy = 0.1;
  out.trace = trace(std::move(v));
  if (r) {
    const std::vector<double> per_round{*r};
    const std::vector<std::size_t> ties{0};
    out.attack = summarize_attack(per_round, ties);
  }
  return out;
}

ReportContext context() {
  ReportContext ctx;
  ctx.participants = 10;
  ctx.classes = 10;
  ctx.master_seed = 3;
  ctx.config_hash = "abc";
  return ctx;
}

}  // namespace

TEST(ConvergenceSpeed, IdenticalToBaseline) {
  const auto b = trace({0.2, 0.5, 0.96, 1.0, 0.99});
  // 0.95 * 1.0 is first reached at round 3
  EXPECT_EQ(convergence_speed(b, b), 3u);
}

TEST(ConvergenceSpeed, ConstantTraceConvergesAtOnce) {
  EXPECT_EQ(convergence_speed(trace({1.0, 1.0, 1.0}), trace({1.0})), 1u);
}

TEST(ConvergenceSpeed, NeverReachingIsAbsent) {
  EXPECT_FALSE(convergence_speed(trace({0.1, 0.5}), trace({1.0})).has_value());
  EXPECT_THROW(convergence_speed(trace({}), trace({1.0})), ArgumentError);
}

TEST(MaximalAccuracy, Ratios) {
  const auto b = trace({0.4, 1.0});
  EXPECT_DOUBLE_EQ(maximal_accuracy_ratio(b, b), 1.0);
  EXPECT_DOUBLE_EQ(maximal_accuracy_ratio(trace({0.5, 0.2}), b), 0.5);
  EXPECT_THROW(maximal_accuracy_ratio(b, trace({0.0})), ArgumentError);
}

TEST(AggregateReport, SingleRunEchoesValues) {
  const std::vector<CaseRuns> cases{{"baseline", {run({0.5, 1.0})}},
                                    {"noniid", {run({0.3, 0.96, 0.9}, 7.0)}}};
  const auto report = aggregate_report(cases, context());
  const auto* c = report.find("noniid");
  ASSERT_NE(c, nullptr);
  EXPECT_DOUBLE_EQ(*c->mean_convergence_speed, 2.0);
  EXPECT_DOUBLE_EQ(*c->mean_maximal_accuracy, 0.96);
  EXPECT_DOUBLE_EQ(*c->mean_attack_success, 7.0);
  EXPECT_FALSE(*c->secure);
  EXPECT_DOUBLE_EQ(report.random_expectation, 1.0);
  EXPECT_EQ(report.find("missing"), nullptr);
}

TEST(AggregateReport, MeansOverRuns) {
  std::vector<double> ten(10, 0.0), twenty(20, 0.0);
  ten.back() = 1.0;
  twenty.back() = 1.0;
  const std::vector<CaseRuns> cases{{"baseline", {run({1.0}), run({1.0})}},
                                    {"iid", {run(ten, 1.0), run(twenty, 0.0)}}};
  const auto report = aggregate_report(cases, context());
  const auto* iid = report.find("iid");
  EXPECT_DOUBLE_EQ(*iid->mean_convergence_speed, 15.0);
  EXPECT_DOUBLE_EQ(*iid->mean_attack_success, 0.5);
  EXPECT_TRUE(*iid->secure);
  EXPECT_EQ(report.repetitions, 2u);
}

TEST(AggregateReport, NonConvergentRunsAreCounted) {
  const std::vector<CaseRuns> cases{{"baseline", {run({1.0}), run({1.0})}},
                                    {"iid", {run({0.2}), run({1.0})}}};
  const auto* iid = aggregate_report(cases, context()).find("iid");
  EXPECT_EQ(iid->non_convergent, 1u);
  EXPECT_DOUBLE_EQ(*iid->mean_convergence_speed, 1.0);
}

TEST(AggregateReport, ZeroRoundsKeepsInitialAccuracyOnly) {
  const std::vector<CaseRuns> cases{{"baseline", {run({})}}, {"iid", {run({})}}};
  const auto report = aggregate_report(cases, context());
  const auto* iid = report.find("iid");
  EXPECT_DOUBLE_EQ(iid->mean_initial_accuracy, 0.1);
  EXPECT_FALSE(iid->mean_convergence_speed.has_value());
  EXPECT_FALSE(iid->mean_maximal_accuracy.has_value());
}

TEST(AggregateReport, NeedsBaselineAndRuns) {
  const std::vector<CaseRuns> no_baseline{{"iid", {run({1.0})}}};
  EXPECT_THROW(aggregate_report(no_baseline, context()), ArgumentError);
  const std::vector<CaseRuns> empty_case{{"baseline", {run({1.0})}}, {"iid", {}}};
  EXPECT_THROW(aggregate_report(empty_case, context()), ArgumentError);
}

TEST(ReportSerialization, JsonAndCsv) {
  const std::vector<CaseRuns> cases{{"baseline", {run({0.5, 1.0})}},
                                    {"exchange", {run({0.96}, 1.0)}}};
  const auto report = aggregate_report(cases, context());
  const auto doc = nlohmann::json::parse(report_to_json(report));
  EXPECT_EQ(doc["config_hash"], "abc");
  EXPECT_EQ(doc["cases"][1]["method"], "exchange");
  EXPECT_EQ(doc["cases"][1]["cs"], 1);
  EXPECT_TRUE(doc["cases"][0]["r"].is_null());
  std::ostringstream csv;
  write_report_csv(csv, report);
  EXPECT_EQ(csv.str(),
            "# config_hash=abc\n"
            "method,CS,MA,R,non_convergent,secure\n"
            "baseline,2,1,,0,\n"
            "exchange,1,0.96,1,0,yes\n");
}
