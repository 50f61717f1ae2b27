#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "v2xfl/dataset.hpp"
#include "v2xfl/exchange.hpp"
#include "v2xfl/model.hpp"
#include "v2xfl/partition.hpp"

namespace v2xfl {

enum class PartitionScheme { iid, noniid };

std::string_view to_string(PartitionScheme scheme);

struct FederationConfig {
  std::size_t rounds = 500;
  std::size_t participants = 10;
  /// Fraction of participants trained each round.
  double participation = 1.0;
  std::size_t local_epochs = 1;
  PartitionScheme partitioning = PartitionScheme::noniid;
  double overrepresentation = 0.5;
  bool exchange_enabled = false;
  MixturePolicy mixture;
  ModelSpec model;
  OptimizerSettings optimizer;
  /// Weight FedAvg by training-set size; uniform weights otherwise.
  bool weight_by_samples = true;
  /// Seeds the partition, exchange and training streams.
  std::uint64_t seed = 0;
  /// Seeds the partitioning. Runs that share it see identical partitions.
  std::uint64_t partition_seed = 0;
  /// Worker threads for local training; results do not depend on it.
  std::size_t threads = 1;

  void validate() const;
  std::size_t participants_per_round() const;
};

struct LocalUpdate {
  ParticipantId participant = 0;
  ModelParameters model;
  std::size_t sample_count = 0;
};

struct ParticipantState {
  ParticipantId id = 0;
  ParticipantDataset dataset;
  ModelParameters model;
  OptimizerState optimizer;
  ReceivedArchive archive;
};

struct ServerState {
  ModelParameters global_model;
  std::size_t round = 0;
  std::vector<LocalUpdate> received_updates;
};

struct RoundRecord {
  std::size_t round = 0;  ///< 1-based index of the completed round
  double global_accuracy = 0.0;
  /// Uploaded local models, in participant order (what the server observes).
  std::vector<LocalUpdate> updates;
  /// V2V traffic of this round; empty without exchange.
  std::vector<ExchangePacket> packets;
};

struct ExperimentReport {
  double initial_accuracy = 0.0;
  /// Accuracy of the global model after each round (or epoch).
  std::vector<double> accuracies;
  std::size_t sharing_quota = 0;
  /// Participant -> overrepresented class (non-IID partitions only).
  std::vector<std::optional<Label>> overrepresented;
  ModelParameters final_model;
};

/// Sample-count-weighted coordinate mean. Throws AggregationError on shape
/// mismatch and ArgumentError on an empty list or non-positive weights.
ModelParameters fedavg(std::span<const LocalUpdate> updates);

/// Shared inputs of every round of one experiment.
struct RoundContext {
  const FederationConfig& config;
  const LabeledDataset& eval_set;
  std::size_t sharing_quota = 0;
};

/// exchange -> local training -> upload -> FedAvg -> redistribution.
RoundRecord run_round(ServerState& server, std::vector<ParticipantState>& participants,
                      const RoundContext& context);

using RoundObserver = std::function<void(const RoundRecord&)>;

/// Partitions `pool`, runs cfg.rounds rounds and evaluates the global model
/// on `eval_set` after each. `observer` sees every round record.
ExperimentReport run_experiment(const FederationConfig& cfg, const LabeledDataset& pool,
                                const LabeledDataset& eval_set,
                                const RoundObserver& observer = {});

/// Single model trained on the whole pool; accuracies holds one value per epoch.
ExperimentReport run_centralized(const ModelSpec& spec, const OptimizerSettings& optimizer,
                                 const LabeledDataset& pool, std::size_t epochs,
                                 const LabeledDataset& eval_set, std::uint64_t seed);

}  // namespace v2xfl
