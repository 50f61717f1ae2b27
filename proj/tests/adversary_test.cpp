#include "v2xfl/adversary.hpp"

#include <gtest/gtest.h>

#include <sstream>

#include "test_util.hpp"
#include "v2xfl/error.hpp"

using namespace v2xfl;
using namespace v2xfl::testing;

namespace {

// Logistic model whose bias makes it predict `label` for every input.
ModelParameters constant_predictor(std::size_t dim, std::size_t classes, Label label) {
  ModelParameters m{ModelShape{Architecture::logistic, dim, 0, classes},
                    std::vector<double>(dim * classes + classes, 0.0)};
  m.values[dim * classes + label] = 1.0;
  return m;
}

std::vector<std::optional<Label>> identity_truth(std::size_t n, std::size_t classes) {
  std::vector<std::optional<Label>> t;
  for (std::size_t i = 0; i < n; ++i) t.emplace_back(static_cast<Label>(i % classes));
  return t;
}

}  // namespace

TEST(BuildProbe, WholePool) {
  const auto pool = balanced_dataset(2, 10, 30, 1);
  Rng rng(1);
  const auto probe = build_probe(pool, 0, rng);
  ASSERT_EQ(probe.per_class.size(), 10u);
  EXPECT_EQ(probe.per_class_size, 30u);
  for (std::size_t c = 0; c < 10; ++c) {
    EXPECT_EQ(probe.per_class[c].size(), 30u);
    for (std::size_t i = 0; i < probe.per_class[c].size(); ++i) EXPECT_EQ(probe.per_class[c].label(i), c);
  }
}

TEST(BuildProbe, SingletonsAndSampledSizes) {
  const auto pool = balanced_dataset(2, 10, 150, 1);
  Rng rng(2);
  for (std::size_t k : {1u, 100u}) {
    const auto probe = build_probe(pool, k, rng);
    for (std::size_t c = 0; c < 10; ++c) {
      const auto counts = scan_counts(probe.per_class[c], 10);
      EXPECT_EQ(counts[c], k);
      EXPECT_EQ(probe.per_class[c].size(), k);
    }
  }
  EXPECT_THROW(build_probe(pool, 151, rng), ArgumentError);
}

TEST(Infer, SingleClassModelPointsAtItsClass) {
  const auto pool = balanced_dataset(3, 5, 20, 1);
  Rng rng(1);
  const auto probe = build_probe(pool, 0, rng);
  for (Label k = 0; k < 5; ++k) {
    const auto ev = infer_overrepresented(constant_predictor(3, 5, k), probe);
    EXPECT_EQ(ev.inferred, k);
    EXPECT_FALSE(ev.tied);
    EXPECT_DOUBLE_EQ(ev.per_class_accuracy[k], 1.0);
  }
}

TEST(Infer, TrainedOnOneClassPointsAtIt) {
  Rng data_rng(3);
  const auto pool = synthesize(4, 60, 4, 0.2, data_rng);
  Rng rng(1);
  const auto probe = build_probe(pool, 0, rng);
  for (Label k = 0; k < 4; ++k) {
    const auto only_k = pool.subset(pool.class_index()[k]);
    auto m = init_model(ModelSpec{Architecture::logistic, 0, 5}, 4, 4);
    auto opt = OptimizerState::fresh(OptimizerSettings{0.05, 0.9, 8}, m.values.size());
    Rng train_rng(k);
    m = train_epoch(m, opt, only_k, 8, train_rng).model;
    EXPECT_EQ(infer_overrepresented(m, probe).inferred, k);
  }
}

TEST(Infer, UniformModelPointsAtClassZero) {
  const auto pool = balanced_dataset(3, 10, 5, 1);
  Rng rng(1);
  const auto probe = build_probe(pool, 0, rng);
  ModelParameters zero{ModelShape{Architecture::logistic, 3, 0, 10}, std::vector<double>(40, 0.0)};
  // argmax over an all-equal output is class 0, the IID artifact where
  // class 0 looks like the best estimate for every participant
  const auto ev = infer_overrepresented(zero, probe);
  EXPECT_EQ(ev.inferred, 0);
  EXPECT_DOUBLE_EQ(ev.per_class_accuracy[0], 1.0);
}

TEST(Infer, EqualEvidenceTiesToLowestClass) {
  // one sample per class at x = +1 / -1; a perfect separator scores 1 on both
  const auto pool = LabeledDataset::from_arrays(1, 2, {1.0, -1.0}, {0, 1});
  Rng rng(1);
  const auto probe = build_probe(pool, 0, rng);
  ModelParameters m{ModelShape{Architecture::logistic, 1, 0, 2}, {1.0, -1.0, 0.0, 0.0}};
  const auto ev = infer_overrepresented(m, probe);
  EXPECT_EQ(ev.per_class_accuracy, (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(ev.inferred, 0);
  EXPECT_TRUE(ev.tied);

  const std::vector<LocalUpdate> updates{{0, m, 1}, {1, m, 1}};
  const std::vector<std::optional<Label>> truth{Label{0}, Label{1}};
  const auto round = attack_round(updates, probe, truth, 1);
  EXPECT_DOUBLE_EQ(round.success, 1.0);
  EXPECT_EQ(round.tie_hits, 1u);
}

TEST(AttackRound, AllCorrectAndNoneCorrect) {
  const auto pool = balanced_dataset(2, 10, 3, 1);
  Rng rng(1);
  const auto probe = build_probe(pool, 0, rng);
  const auto truth = identity_truth(10, 10);
  std::vector<LocalUpdate> right, wrong;
  for (ParticipantId i = 0; i < 10; ++i) {
    right.push_back({i, constant_predictor(2, 10, static_cast<Label>(i)), 1});
    wrong.push_back({i, constant_predictor(2, 10, static_cast<Label>((i + 1) % 10)), 1});
  }
  const auto all = attack_round(right, probe, truth, 4);
  EXPECT_DOUBLE_EQ(all.success, 10.0);
  EXPECT_EQ(all.verdicts.size(), 10u);
  EXPECT_EQ(all.verdicts[3].round, 4u);
  EXPECT_EQ(all.tie_hits, 0u);
  EXPECT_DOUBLE_EQ(attack_round(wrong, probe, truth, 4).success, 0.0);
}

TEST(AttackRound, MissingTruthIsAnError) {
  const auto pool = balanced_dataset(2, 2, 3, 1);
  Rng rng(1);
  const auto probe = build_probe(pool, 0, rng);
  const std::vector<LocalUpdate> updates{{5, constant_predictor(2, 2, 0), 1}};
  EXPECT_THROW(attack_round(updates, probe, identity_truth(2, 2), 1), ArgumentError);
}

// Uniform-verdict oracle: every participant's model predicts a class drawn
// uniformly at random, so each verdict is right with probability 1/10.
TEST(AttackRound, RandomGuessCalibration) {
  const auto pool = balanced_dataset(1, 10, 1, 1);
  Rng rng(1);
  const auto probe = build_probe(pool, 0, rng);
  const auto truth = identity_truth(10, 10);
  std::vector<ModelParameters> predictors;
  for (Label k = 0; k < 10; ++k) predictors.push_back(constant_predictor(1, 10, k));
  Rng oracle(77);
  double total = 0.0;
  const int batches = 10000;
  for (int b = 0; b < batches; ++b) {
    std::vector<LocalUpdate> updates;
    for (ParticipantId i = 0; i < 10; ++i) updates.push_back({i, predictors[oracle.uniform_below(10)], 1});
    total += attack_round(updates, probe, truth, 1).success;
  }
  const double mean = total / batches;
  EXPECT_GE(mean, 0.9);
  EXPECT_LE(mean, 1.1);
  EXPECT_DOUBLE_EQ(random_guess_expectation(10, 10), 1.0);
}

TEST(Summary, TailMeanAndSecurity) {
  std::vector<double> r(100, 1.0);
  std::vector<std::size_t> ties(100, 0);
  for (std::size_t i = 90; i < 100; ++i) {
    r[i] = 3.0;
    ties[i] = 2;
  }
  r[10] = 9.0;
  const auto s = summarize_attack(r, ties);
  EXPECT_DOUBLE_EQ(s.tail_mean, 3.0);
  EXPECT_DOUBLE_EQ(s.max, 9.0);
  EXPECT_DOUBLE_EQ(s.tail_tie_hits, 2.0);
  EXPECT_TRUE(is_secure(1.0, 1.0, 0.0));
  EXPECT_TRUE(is_secure(3.0, 1.0, 2.0));
  EXPECT_FALSE(is_secure(3.0, 1.0, 0.0));
  const std::vector<double> one{4.0};
  const std::vector<std::size_t> no_ties{0};
  EXPECT_DOUBLE_EQ(summarize_attack(one, no_ties).tail_mean, 4.0);
}

TEST(VerdictCsv, HeaderAndRow) {
  std::ostringstream out;
  write_verdict_csv_header(out, 2, "h1");
  AttackVerdict v;
  v.participant = 1;
  v.round = 3;
  v.inferred = 1;
  v.truth = 1;
  v.evidence = {0.25, 0.5};
  write_verdict_csv_rows(out, std::vector<AttackVerdict>{v});
  EXPECT_EQ(out.str(), "# config_hash=h1\nround,participant,inferred,truth,correct,ev_0,ev_1\n3,1,1,1,1,0.25,0.5\n");
}
