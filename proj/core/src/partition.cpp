#include "v2xfl/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "v2xfl/error.hpp"

namespace v2xfl {

namespace {

constexpr double kRateEps = 1e-12;

// Deals `shuffled` out to `recipients` in near-equal contiguous chunks. The
// n % k leftover samples go to the recipients holding the fewest samples so
// far, ties broken at random, which keeps participant totals balanced too.
void deal(std::span<const std::uint32_t> shuffled, std::span<const std::size_t> recipients,
          std::vector<std::vector<std::uint32_t>>& assigned, Rng& rng) {
  const std::size_t k = recipients.size();
  const std::size_t base = shuffled.size() / k;
  const std::size_t extra = shuffled.size() % k;

  struct Slot {
    std::size_t load;
    std::uint64_t tiebreak;
    std::size_t slot;
  };
  std::vector<Slot> order;
  order.reserve(k);
  for (std::size_t s = 0; s < k; ++s) {
    order.push_back({assigned[recipients[s]].size(), rng.next(), s});
  }
  std::sort(order.begin(), order.end(), [](const Slot& a, const Slot& b) {
    return a.load != b.load ? a.load < b.load : a.tiebreak < b.tiebreak;
  });
  std::vector<std::size_t> quota(k, base);
  for (std::size_t i = 0; i < extra; ++i) ++quota[order[i].slot];

  std::size_t cursor = 0;
  for (std::size_t s = 0; s < k; ++s) {
    auto& dest = assigned[recipients[s]];
    dest.insert(dest.end(), shuffled.begin() + cursor, shuffled.begin() + cursor + quota[s]);
    cursor += quota[s];
  }
}

void require_balanced(const LabeledDataset& pool, std::size_t per_class) {
  const auto counts = pool.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] != per_class) {
      throw PreconditionError(fmt::format(
          "pool is not class-balanced: class {} has {} samples, expected {}", c, counts[c],
          per_class));
    }
  }
}

}  // namespace

void PartitionConfig::validate() const {
  if (participants < 2) throw ArgumentError("partition needs at least 2 participants");
  if (classes < 2) throw ArgumentError("partition needs at least 2 classes");
  if (!(overrepresentation >= 1.0 / static_cast<double>(classes) - kRateEps) ||
      !(overrepresentation <= 1.0 + kRateEps)) {
    throw ArgumentError(fmt::format("overrepresentation rate {} outside [1/{}, 1]",
                                    overrepresentation, classes));
  }
  if (samples_per_class < classes) {
    throw ArgumentError(fmt::format("samples per class ({}) must be at least the class count ({})",
                                    samples_per_class, classes));
  }
}

std::vector<ParticipantDataset> partition_noniid(const LabeledDataset& pool,
                                                 const PartitionConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.participants != cfg.classes) {
    throw UnsupportedConfigError(fmt::format(
        "non-IID partitioning assigns one overrepresented class per participant; got {} "
        "participants for {} classes",
        cfg.participants, cfg.classes));
  }
  if (pool.num_classes() != cfg.classes) {
    throw PreconditionError(
        fmt::format("pool has {} classes, config expects {}", pool.num_classes(), cfg.classes));
  }
  require_balanced(pool, cfg.samples_per_class);

  const std::size_t n_p = cfg.participants;
  const auto own_count = static_cast<std::size_t>(
      std::floor(cfg.overrepresentation * static_cast<double>(cfg.samples_per_class) + 1e-9));

  std::vector<std::vector<std::uint32_t>> assigned(n_p);
  std::vector<std::size_t> peers;
  peers.reserve(n_p - 1);
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    auto positions = pool.class_index()[c];
    rng.shuffle(std::span<std::uint32_t>(positions));
    assigned[c].insert(assigned[c].end(), positions.begin(), positions.begin() + own_count);

    peers.clear();
    for (std::size_t j = 0; j < n_p; ++j) {
      if (j != c) peers.push_back(j);
    }
    deal(std::span<const std::uint32_t>(positions).subspan(own_count), peers, assigned, rng);
  }

  std::vector<ParticipantDataset> out;
  out.reserve(n_p);
  for (std::size_t i = 0; i < n_p; ++i) {
    std::sort(assigned[i].begin(), assigned[i].end());
    out.push_back({static_cast<ParticipantId>(i), pool.subset(assigned[i]),
                   static_cast<Label>(i)});
  }
  return out;
}

std::vector<ParticipantDataset> partition_iid(const LabeledDataset& pool, std::size_t participants,
                                              Rng& rng) {
  if (participants < 1) throw ArgumentError("partition needs at least one participant");
  const auto counts = pool.class_counts();
  if (!counts.empty() && std::adjacent_find(counts.begin(), counts.end(),
                                            std::not_equal_to<>()) != counts.end()) {
    throw PreconditionError("IID partitioning expects a class-balanced pool");
  }
  if (participants == 1) return {{0, pool, std::nullopt}};

  std::vector<std::vector<std::uint32_t>> assigned(participants);
  std::vector<std::size_t> everyone(participants);
  std::iota(everyone.begin(), everyone.end(), std::size_t{0});
  for (const auto& class_positions : pool.class_index()) {
    auto positions = class_positions;
    rng.shuffle(std::span<std::uint32_t>(positions));
    deal(positions, everyone, assigned, rng);
  }

  std::vector<ParticipantDataset> out;
  out.reserve(participants);
  for (std::size_t i = 0; i < participants; ++i) {
    std::sort(assigned[i].begin(), assigned[i].end());
    out.push_back({static_cast<ParticipantId>(i), pool.subset(assigned[i]), std::nullopt});
  }
  return out;
}

Overrepresentation overrepresentation_rate(const LabeledDataset& data) {
  if (data.empty()) throw ArgumentError("overrepresentation rate of an empty dataset");
  const auto counts = data.class_counts();
  const auto top = std::max_element(counts.begin(), counts.end());
  return {static_cast<double>(*top) / static_cast<double>(data.size()),
          static_cast<Label>(top - counts.begin())};
}

std::size_t sharing_quota(const PartitionConfig& cfg) {
  cfg.validate();
  if (cfg.overrepresentation >= 1.0 - kRateEps) {
    throw InfeasibleConfigError(
        "p = 1 leaves participants without samples of other classes to share");
  }
  const auto n_s = static_cast<double>(cfg.samples_per_class);
  const auto n_c = static_cast<double>(cfg.classes);
  const auto n_p = static_cast<double>(cfg.participants);
  const double held = n_s * (1.0 - cfg.overrepresentation) / (n_c - 1.0);
  const double x = (n_s / n_c - held) / (n_p - 1.0);
  // The tolerance keeps p = 1/n_c (x = 0 up to rounding) from ceiling to 1.
  const double rounded = std::ceil(x - 1e-9);
  return rounded <= 0.0 ? 0 : static_cast<std::size_t>(rounded);
}

void write_partition_csv(std::ostream& out, const std::vector<ParticipantDataset>& parts) {
  const std::size_t n_c = parts.empty() ? 0 : parts.front().data.num_classes();
  out << "participant";
  for (std::size_t c = 0; c < n_c; ++c) out << ",class_" << c;
  out << ",total,rate,argmax\n";
  for (const auto& part : parts) {
    out << part.owner;
    for (auto count : part.data.class_counts()) out << ',' << count;
    out << ',' << part.data.size();
    if (part.data.empty()) {
      out << ",,\n";
      continue;
    }
    const auto over = overrepresentation_rate(part.data);
    out << fmt::format(",{:.6f},{}\n", over.rate, over.label);
  }
}

}  // namespace v2xfl
