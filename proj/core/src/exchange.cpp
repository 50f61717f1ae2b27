#include "v2xfl/exchange.hpp"

#include <algorithm>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "v2xfl/error.hpp"

namespace v2xfl {

std::string_view to_string(MixtureMode mode) {
  return mode == MixtureMode::paper_mixture ? "paper-mixture" : "capped-iid";
}

MixtureMode parse_mixture_mode(std::string_view name) {
  if (name == "paper-mixture") return MixtureMode::paper_mixture;
  if (name == "capped-iid") return MixtureMode::capped_iid;
  throw ArgumentError(fmt::format("unknown mixture policy '{}'", name));
}

Selection select_to_send(const ParticipantDataset& participant, std::size_t quota, Rng& rng) {
  const auto& data = participant.data;
  const auto& index = data.class_index();
  Selection out;
  out.per_class.reserve(index.size());
  out.shortfall.reserve(index.size());
  for (const auto& positions : index) {
    const auto draw = rng.sample(std::span<const std::uint32_t>(positions), quota);
    out.per_class.push_back(data.subset(draw));
    out.shortfall.push_back(quota - draw.size());
  }
  return out;
}

std::vector<ExchangePacket> run_exchange(std::span<const ParticipantDataset> participants,
                                         std::size_t quota, std::size_t round,
                                         std::uint64_t seed) {
  if (participants.size() < 2) throw ArgumentError("exchange needs at least two participants");
  std::vector<ExchangePacket> packets;
  packets.reserve(participants.size() * (participants.size() - 1));
  for (const auto& sender : participants) {
    Rng rng(derive_seed(seed, "exchange", round, sender.owner));
    const auto payload = select_to_send(sender, quota, rng).merged();
    for (const auto& receiver : participants) {
      if (receiver.owner == sender.owner) continue;
      packets.push_back({sender.owner, receiver.owner, round, payload});
    }
  }
  return packets;
}

std::vector<ExchangePacket> inbox_for(std::span<const ExchangePacket> packets,
                                      ParticipantId receiver) {
  std::vector<ExchangePacket> out;
  for (const auto& p : packets) {
    if (p.receiver == receiver) out.push_back(p);
  }
  return out;
}

std::size_t ReceivedArchive::add(const LabeledDataset& samples) {
  std::vector<SampleId> fresh;
  for (auto id : samples.ids()) {
    if (seen_.insert(id).second) fresh.push_back(id);
  }
  const std::size_t added = fresh.size();
  if (added > 0) batches_.push_back(samples.with_ids(std::move(fresh)));
  return added;
}

LabeledDataset build_training_mixture(const ParticipantDataset& participant,
                                      std::span<const ExchangePacket> inbox,
                                      const MixturePolicy& policy, ReceivedArchive* archive,
                                      Rng& rng) {
  for (const auto& p : inbox) {
    if (p.receiver != participant.owner) {
      throw RoutingError(fmt::format("packet from {} to {} delivered to participant {}", p.sender,
                                     p.receiver, participant.owner));
    }
  }
  if (policy.accumulate && archive == nullptr) {
    throw ArgumentError("accumulating mixture needs a received-sample archive");
  }

  std::vector<LabeledDataset> parts{participant.data};
  if (policy.accumulate) {
    for (const auto& p : inbox) archive->add(p.samples);
    parts.insert(parts.end(), archive->batches().begin(), archive->batches().end());
  } else {
    for (const auto& p : inbox) parts.push_back(p.samples);
  }
  auto mixture = LabeledDataset::concat(parts);
  if (policy.mode == MixtureMode::paper_mixture || mixture.empty()) return mixture;

  auto counts = mixture.class_counts();
  const Label over = participant.overrepresented_class.value_or(
      static_cast<Label>(std::max_element(counts.begin(), counts.end()) - counts.begin()));
  auto sorted = counts;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t median = sorted[(sorted.size() - 1) / 2];
  if (counts[over] <= median) return mixture;

  const auto& over_positions = mixture.class_index()[over];
  auto keep_over = rng.sample(std::span<const std::uint32_t>(over_positions), median);
  std::vector<std::uint32_t> keep;
  keep.reserve(mixture.size() - counts[over] + median);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (c == over) continue;
    const auto& pos = mixture.class_index()[c];
    keep.insert(keep.end(), pos.begin(), pos.end());
  }
  keep.insert(keep.end(), keep_over.begin(), keep_over.end());
  std::sort(keep.begin(), keep.end());
  return mixture.subset(keep);
}

void write_exchange_log(std::ostream& out, std::span<const ExchangePacket> packets,
                        std::string_view config_hash) {
  for (const auto& p : packets) {
    nlohmann::json line = {{"config_hash", config_hash},
                           {"round", p.round},
                           {"sender", p.sender},
                           {"receiver", p.receiver},
                           {"class_counts", p.samples.class_counts()}};
    out << line.dump() << '\n';
  }
}

}  // namespace v2xfl
