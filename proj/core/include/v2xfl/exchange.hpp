#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "v2xfl/dataset.hpp"
#include "v2xfl/partition.hpp"
#include "v2xfl/rng.hpp"

namespace v2xfl {

/// Samples one participant sends a peer over the trusted V2V link in one round.
struct ExchangePacket {
  ParticipantId sender = 0;
  ParticipantId receiver = 0;
  std::size_t round = 0;
  LabeledDataset samples;
};

enum class MixtureMode {
  /// Own partition plus everything received.
  paper_mixture,
  /// As paper_mixture, then the overrepresented class is subsampled down to
  /// the per-class median of the mixture.
  capped_iid,
};

std::string_view to_string(MixtureMode mode);
MixtureMode parse_mixture_mode(std::string_view name);

struct MixturePolicy {
  MixtureMode mode = MixtureMode::paper_mixture;
  /// Keep samples received in earlier rounds (deduplicated by sample id).
  bool accumulate = false;
};

/// One round's to-be-sent selection of a participant.
struct Selection {
  std::vector<LabeledDataset> per_class;
  /// Per class, how many of the x requested samples the sender lacked.
  std::vector<std::size_t> shortfall;

  LabeledDataset merged() const { return LabeledDataset::concat(per_class); }
};

/// min(x, available) samples of every class, uniformly without replacement.
Selection select_to_send(const ParticipantDataset& participant, std::size_t quota, Rng& rng);

/// All-pairs exchange: each sender draws one selection per round (from the
/// stream derive_seed(seed, "exchange", round, sender)) and sends it to every
/// other participant. Packets are ordered by sender, then receiver.
std::vector<ExchangePacket> run_exchange(std::span<const ParticipantDataset> participants,
                                         std::size_t quota, std::size_t round,
                                         std::uint64_t seed);

/// Packets addressed to `receiver`, in sender order.
std::vector<ExchangePacket> inbox_for(std::span<const ExchangePacket> packets,
                                      ParticipantId receiver);

/// Samples received across rounds, used when MixturePolicy::accumulate is set.
class ReceivedArchive {
 public:
  /// Adds samples not seen before; returns how many were new.
  std::size_t add(const LabeledDataset& samples);
  const std::vector<LabeledDataset>& batches() const noexcept { return batches_; }
  std::size_t size() const noexcept { return seen_.size(); }

 private:
  std::unordered_set<SampleId> seen_;
  std::vector<LabeledDataset> batches_;
};

/// The participant's training data for this round. `archive` is required
/// when policy.accumulate is set; `rng` drives capped_iid subsampling.
/// Throws RoutingError if a packet is addressed to someone else.
LabeledDataset build_training_mixture(const ParticipantDataset& participant,
                                      std::span<const ExchangePacket> inbox,
                                      const MixturePolicy& policy, ReceivedArchive* archive,
                                      Rng& rng);

/// One JSON object per packet: sender, receiver, round, per-class counts.
void write_exchange_log(std::ostream& out, std::span<const ExchangePacket> packets,
                        std::string_view config_hash);

}  // namespace v2xfl
