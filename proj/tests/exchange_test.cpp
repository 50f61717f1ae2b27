#include "v2xfl/exchange.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "test_util.hpp"
#include "v2xfl/error.hpp"
#include "v2xfl/partition.hpp"

using namespace v2xfl;
using namespace v2xfl::testing;

namespace {

struct ReferenceSetup {
  LabeledDataset pool;
  std::vector<ParticipantDataset> parts;
};

const ReferenceSetup& reference() {
  static const ReferenceSetup setup = [] {
    ReferenceSetup s;
    s.pool = balanced_dataset(1, 10, 5421, 21);
    Rng rng(4);
    s.parts = partition_noniid(s.pool, PartitionConfig{10, 10, 0.5, 5421}, rng);
    return s;
  }();
  return setup;
}

}  // namespace

TEST(SelectToSend, ReferenceQuota) {
  Rng rng(1);
  const auto sel = select_to_send(reference().parts[3], 27, rng);
  ASSERT_EQ(sel.per_class.size(), 10u);
  for (std::size_t c = 0; c < 10; ++c) {
    EXPECT_EQ(sel.per_class[c].size(), 27u);
    EXPECT_EQ(sel.shortfall[c], 0u);
    for (std::size_t i = 0; i < 27; ++i) EXPECT_EQ(sel.per_class[c].label(i), c);
  }
  EXPECT_EQ(sel.merged().size(), 270u);
}

TEST(SelectToSend, ZeroQuotaIsEmpty) {
  Rng rng(1);
  EXPECT_TRUE(select_to_send(reference().parts[0], 0, rng).merged().empty());
}

TEST(SelectToSend, ShortClassSendsAllAndRecordsShortfall) {
  std::vector<Label> labels(5, 1);
  labels.insert(labels.end(), 40, 0);
  ParticipantDataset p{0, random_dataset(1, 2, labels, 3), Label{0}};
  Rng rng(1);
  const auto sel = select_to_send(p, 27, rng);
  EXPECT_EQ(sel.per_class[1].size(), 5u);
  EXPECT_EQ(sel.shortfall[1], 22u);
  EXPECT_EQ(sel.per_class[0].size(), 27u);
  EXPECT_EQ(sel.shortfall[0], 0u);
}

TEST(RunExchange, PacketCountsAndInflow) {
  const auto packets = run_exchange(reference().parts, 27, 1, 99);
  EXPECT_EQ(packets.size(), 90u);
  for (ParticipantId r = 0; r < 10; ++r) {
    const auto inbox = inbox_for(packets, r);
    EXPECT_EQ(inbox.size(), 9u);
    std::vector<std::size_t> inflow(10, 0);
    for (const auto& p : inbox) {
      EXPECT_NE(p.sender, r);
      EXPECT_EQ(p.round, 1u);
      const auto counts = scan_counts(p.samples, 10);
      for (std::size_t c = 0; c < 10; ++c) inflow[c] += counts[c];
    }
    for (auto n : inflow) EXPECT_EQ(n, 243u);
  }
}

TEST(RunExchange, TwoParticipantsMirror) {
  const std::vector<ParticipantDataset> two{reference().parts[0], reference().parts[1]};
  const auto packets = run_exchange(two, 5, 2, 7);
  ASSERT_EQ(packets.size(), 2u);
  EXPECT_EQ(packets[0].sender, packets[1].receiver);
  EXPECT_EQ(packets[1].sender, packets[0].receiver);
}

TEST(RunExchange, DeterministicPerSeedAndRound) {
  const auto a = run_exchange(reference().parts, 27, 3, 5);
  const auto b = run_exchange(reference().parts, 27, 3, 5);
  const auto c = run_exchange(reference().parts, 27, 4, 5);
  ASSERT_EQ(a.size(), b.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::vector<SampleId> ia(a[i].samples.ids().begin(), a[i].samples.ids().end());
    const std::vector<SampleId> ib(b[i].samples.ids().begin(), b[i].samples.ids().end());
    const std::vector<SampleId> ic(c[i].samples.ids().begin(), c[i].samples.ids().end());
    EXPECT_EQ(ia, ib);
    differs = differs || ia != ic;
  }
  EXPECT_TRUE(differs);
}

TEST(TrainingMixture, LiteralMixtureCounts) {
  const auto packets = run_exchange(reference().parts, 27, 1, 99);
  for (const auto& part : reference().parts) {
    Rng rng(1);
    const auto own_before = std::vector<SampleId>(part.data.ids().begin(), part.data.ids().end());
    const auto mix = build_training_mixture(part, inbox_for(packets, part.owner), {}, nullptr, rng);
    EXPECT_EQ(mix.size(), part.data.size() + 2430);
    EXPECT_NEAR(static_cast<double>(mix.size()), 7851.0, 3.0);
    const auto counts = scan_counts(mix, 10);
    for (std::size_t c = 0; c < 10; ++c) {
      if (c == part.owner) continue;
      EXPECT_GE(counts[c], 543u);
      EXPECT_LE(counts[c], 545u);
    }
    EXPECT_LT(overrepresentation_rate(mix).rate, overrepresentation_rate(part).rate);
    EXPECT_EQ(std::vector<SampleId>(part.data.ids().begin(), part.data.ids().end()), own_before);
  }
}

TEST(TrainingMixture, CappedIidBalancesClasses) {
  const auto packets = run_exchange(reference().parts, 27, 1, 99);
  const MixturePolicy policy{MixtureMode::capped_iid, false};
  for (const auto& part : reference().parts) {
    Rng rng(part.owner);
    const auto mix = build_training_mixture(part, inbox_for(packets, part.owner), policy, nullptr, rng);
    const auto counts = scan_counts(mix, 10);
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    EXPECT_LE(*hi - *lo, 1u);
    const double rate = overrepresentation_rate(mix).rate;
    EXPECT_GE(rate, 0.0995);
    EXPECT_LE(rate, 0.105);
  }
}

TEST(TrainingMixture, EmptyInboxIsOwnPartition) {
  const auto& part = reference().parts[2];
  Rng rng(1);
  const auto mix = build_training_mixture(part, {}, {}, nullptr, rng);
  EXPECT_EQ(std::vector<SampleId>(mix.ids().begin(), mix.ids().end()),
            std::vector<SampleId>(part.data.ids().begin(), part.data.ids().end()));
}

TEST(TrainingMixture, MisaddressedPacketIsRejected) {
  const auto packets = run_exchange(reference().parts, 27, 1, 99);
  const auto inbox = inbox_for(packets, 1);
  Rng rng(1);
  EXPECT_THROW(build_training_mixture(reference().parts[0], inbox, {}, nullptr, rng), RoutingError);
}

TEST(TrainingMixture, AccumulateDeduplicatesAcrossRounds) {
  const auto& part = reference().parts[0];
  const MixturePolicy policy{MixtureMode::paper_mixture, true};
  ReceivedArchive archive;
  Rng rng(1);
  Rng no_archive_rng(1);
  EXPECT_THROW(build_training_mixture(part, {}, policy, nullptr, no_archive_rng), ArgumentError);

  const auto r1 = run_exchange(reference().parts, 27, 1, 99);
  const auto m1 = build_training_mixture(part, inbox_for(r1, 0), policy, &archive, rng);
  EXPECT_EQ(m1.size(), part.data.size() + 2430);
  // re-delivering the same packets adds nothing
  const auto again = build_training_mixture(part, inbox_for(r1, 0), policy, &archive, rng);
  EXPECT_EQ(again.size(), m1.size());
  const auto r2 = run_exchange(reference().parts, 27, 2, 99);
  const auto m2 = build_training_mixture(part, inbox_for(r2, 0), policy, &archive, rng);
  EXPECT_GT(m2.size(), m1.size());
  EXPECT_EQ(m2.size(), part.data.size() + archive.size());
  const std::set<SampleId> unique(m2.ids().begin(), m2.ids().end());
  EXPECT_EQ(unique.size(), m2.size());
}

TEST(ExchangeLog, OneLinePerPacket) {
  const std::vector<ParticipantDataset> two{reference().parts[0], reference().parts[1]};
  const auto packets = run_exchange(two, 2, 1, 7);
  std::ostringstream out;
  write_exchange_log(out, packets, "abc");
  const auto text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  EXPECT_NE(text.find("\"config_hash\":\"abc\""), std::string::npos);
}

TEST(MixtureMode, Names) {
  EXPECT_EQ(parse_mixture_mode("capped-iid"), MixtureMode::capped_iid);
  EXPECT_EQ(to_string(MixtureMode::paper_mixture), "paper-mixture");
  EXPECT_THROW(parse_mixture_mode("iid"), ArgumentError);
}
