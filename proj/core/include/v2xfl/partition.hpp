#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include "v2xfl/dataset.hpp"
#include "v2xfl/rng.hpp"

namespace v2xfl {

using ParticipantId = std::uint32_t;

struct PartitionConfig {
  std::size_t participants = 10;
  std::size_t classes = 10;
  /// Share of a participant's data held by its overrepresented class.
  double overrepresentation = 0.5;
  /// Samples per class in the source pool.
  std::size_t samples_per_class = 5421;

  /// Throws ArgumentError when an invariant is violated.
  void validate() const;
};

struct ParticipantDataset {
  ParticipantId owner = 0;
  LabeledDataset data;
  /// Absent for IID partitions.
  std::optional<Label> overrepresented_class;
};

struct Overrepresentation {
  double rate = 0.0;
  Label label = 0;
};

/// One overrepresented class per participant: participant i keeps
/// floor(p * n_s) samples of class i and the rest of class i is spread
/// uniformly over the other participants. Requires participants == classes
/// and a pool with exactly n_s samples per class.
std::vector<ParticipantDataset> partition_noniid(const LabeledDataset& pool,
                                                 const PartitionConfig& cfg, Rng& rng);

/// Every class split into near-equal shares (within one sample) across
/// participants; participant totals are balanced the same way.
std::vector<ParticipantDataset> partition_iid(const LabeledDataset& pool, std::size_t participants,
                                              Rng& rng);

/// Largest class share and its class (lowest index on ties).
Overrepresentation overrepresentation_rate(const LabeledDataset& data);
inline Overrepresentation overrepresentation_rate(const ParticipantDataset& d) {
  return overrepresentation_rate(d.data);
}

/// Per-class count each participant must send every peer so that an
/// underrepresented class reaches n_s / n_c:
///   n_s (1 - p) / (n_c - 1) + (n_p - 1) x = n_s / n_c,
/// solved for the smallest integer x, clamped at zero. Throws
/// InfeasibleConfigError for p = 1.
std::size_t sharing_quota(const PartitionConfig& cfg);

/// participant,class_0..class_{n-1},total,rate,argmax
void write_partition_csv(std::ostream& out, const std::vector<ParticipantDataset>& parts);

}  // namespace v2xfl
