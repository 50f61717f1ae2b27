#include "v2xfl/federation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include <fmt/format.h>

#include "v2xfl/error.hpp"

namespace v2xfl {

namespace {

// out = x_0 + sum_k a_k (x_k - x_0) with a_k = w_k / sum(w). Identical inputs
// come back bit-exact and every coordinate stays inside [min, max].
ModelParameters weighted_average(std::span<const LocalUpdate> updates,
                                 std::span<const double> weights) {
  if (updates.empty()) throw ArgumentError("FedAvg needs at least one update");
  const auto& shape = updates.front().model.shape;
  double total = 0.0;
  for (std::size_t k = 0; k < updates.size(); ++k) {
    if (!(updates[k].model.shape == shape) ||
        updates[k].model.values.size() != updates.front().model.values.size()) {
      throw AggregationError(fmt::format("update from participant {} has a different shape",
                                         updates[k].participant));
    }
    if (!(weights[k] > 0.0)) {
      throw ArgumentError(fmt::format("update from participant {} has non-positive weight",
                                      updates[k].participant));
    }
    total += weights[k];
  }

  ModelParameters out = updates.front().model;
  const auto& anchor = updates.front().model.values;
  for (std::size_t k = 1; k < updates.size(); ++k) {
    const double a = weights[k] / total;
    const auto& x = updates[k].model.values;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += a * (x[i] - anchor[i]);
  }
  return out;
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. The lowest-index
// failure is rethrown, so errors are reported deterministically.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::min(threads, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) run(i);
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

std::string_view to_string(PartitionScheme scheme) {
  return scheme == PartitionScheme::iid ? "iid" : "noniid";
}

void FederationConfig::validate() const {
  if (rounds > 0 && participants < 1) throw ArgumentError("federation needs participants");
  if (!(participation > 0.0 && participation <= 1.0)) {
    throw ArgumentError(fmt::format("participation {} outside (0, 1]", participation));
  }
  if (local_epochs < 1) throw ArgumentError("local_epochs must be at least 1");
  if (optimizer.batch_size < 1) throw ArgumentError("batch size must be at least 1");
  if (exchange_enabled && participants < 2) {
    throw ArgumentError("data exchange needs at least two participants");
  }
}

std::size_t FederationConfig::participants_per_round() const {
  const auto n = static_cast<std::size_t>(
      std::ceil(participation * static_cast<double>(participants) - 1e-9));
  return std::clamp<std::size_t>(n, 1, participants);
}

ModelParameters fedavg(std::span<const LocalUpdate> updates) {
  std::vector<double> weights;
  weights.reserve(updates.size());
  for (const auto& u : updates) weights.push_back(static_cast<double>(u.sample_count));
  return weighted_average(updates, weights);
}

RoundRecord run_round(ServerState& server, std::vector<ParticipantState>& participants,
                      const RoundContext& context) {
  const auto& cfg = context.config;
  const std::size_t round = server.round + 1;
  for (const auto& p : participants) {
    if (!(p.model.shape == server.global_model.shape)) {
      throw ArgumentError(fmt::format("participant {} model shape differs from the server's", p.id));
    }
  }

  RoundRecord record;
  record.round = round;

  // (1) V2V exchange and per-participant training mixtures.
  std::vector<LabeledDataset> training(participants.size());
  if (cfg.exchange_enabled) {
    std::vector<ParticipantDataset> datasets;
    datasets.reserve(participants.size());
    for (const auto& p : participants) datasets.push_back(p.dataset);
    record.packets = run_exchange(datasets, context.sharing_quota, round, cfg.seed);
    for (std::size_t i = 0; i < participants.size(); ++i) {
      auto& p = participants[i];
      const auto inbox = inbox_for(record.packets, p.id);
      Rng rng(derive_seed(cfg.seed, "mixture", p.id, round));
      training[i] = build_training_mixture(p.dataset, inbox, cfg.mixture, &p.archive, rng);
    }
  } else {
    for (std::size_t i = 0; i < participants.size(); ++i) training[i] = participants[i].dataset.data;
  }

  std::vector<std::size_t> selected(participants.size());
  std::iota(selected.begin(), selected.end(), std::size_t{0});
  const std::size_t per_round = std::min(cfg.participants_per_round(), participants.size());
  if (per_round < participants.size()) {
    Rng rng(derive_seed(cfg.seed, "select", round));
    selected = rng.sample(std::span<const std::size_t>(selected), per_round);
    std::sort(selected.begin(), selected.end());
  }

  // (2) local training from the current global model.
  record.updates.resize(selected.size());
  parallel_for(selected.size(), cfg.threads, [&](std::size_t k) {
    auto& p = participants[selected[k]];
    const auto& data = training[selected[k]];
    if (data.empty()) {
      throw ArgumentError(fmt::format("participant {} has no training data", p.id));
    }
    Rng rng(derive_seed(cfg.seed, "train", p.id, round));
    ModelParameters model = server.global_model;
    auto optimizer = OptimizerState::fresh(cfg.optimizer, model.values.size());
    for (std::size_t e = 0; e < cfg.local_epochs; ++e) {
      try {
        auto step = train_epoch(model, optimizer, data, cfg.optimizer.batch_size, rng);
        model = std::move(step.model);
        optimizer = std::move(step.optimizer);
      } catch (const NumericalDivergence& d) {
        throw NumericalDivergence(d.batch_index(),
                                  fmt::format("participant {} round {}: {}", p.id, round, d.what()));
      }
    }
    p.optimizer = std::move(optimizer);
    // (3) upload.
    record.updates[k] = {p.id, std::move(model), data.size()};
  });

  // (4) aggregation.
  std::vector<double> weights;
  weights.reserve(record.updates.size());
  for (const auto& u : record.updates) {
    weights.push_back(cfg.weight_by_samples ? static_cast<double>(u.sample_count) : 1.0);
  }
  server.global_model = weighted_average(record.updates, weights);
  server.round = round;
  server.received_updates = record.updates;

  // (5) redistribution.
  for (auto& p : participants) p.model = server.global_model;

  record.global_accuracy = evaluate_accuracy(server.global_model, context.eval_set);
  return record;
}

ExperimentReport run_experiment(const FederationConfig& cfg, const LabeledDataset& pool,
                                const LabeledDataset& eval_set, const RoundObserver& observer) {
  cfg.validate();
  if (pool.empty()) throw ArgumentError("experiment pool is empty");
  const auto counts = pool.class_counts();

  PartitionConfig pcfg;
  pcfg.participants = cfg.participants;
  pcfg.classes = pool.num_classes();
  pcfg.overrepresentation = cfg.overrepresentation;
  pcfg.samples_per_class = counts.front();

  Rng partition_rng(cfg.partition_seed);
  auto partitions = cfg.partitioning == PartitionScheme::noniid
                        ? partition_noniid(pool, pcfg, partition_rng)
                        : partition_iid(pool, cfg.participants, partition_rng);

  ExperimentReport report;
  report.sharing_quota = cfg.exchange_enabled ? sharing_quota(pcfg) : 0;

  ServerState server;
  server.global_model = init_model(cfg.model, pool.dim(), pool.num_classes());
  std::vector<ParticipantState> participants;
  participants.reserve(partitions.size());
  for (auto& part : partitions) {
    report.overrepresented.push_back(part.overrepresented_class);
    ParticipantState state;
    state.id = part.owner;
    state.dataset = std::move(part);
    state.model = server.global_model;
    state.optimizer = OptimizerState::fresh(cfg.optimizer, server.global_model.values.size());
    participants.push_back(std::move(state));
  }

  report.initial_accuracy = evaluate_accuracy(server.global_model, eval_set);
  report.accuracies.reserve(cfg.rounds);
  const RoundContext context{cfg, eval_set, report.sharing_quota};
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    auto record = run_round(server, participants, context);
    report.accuracies.push_back(record.global_accuracy);
    if (observer) observer(record);
  }
  report.final_model = server.global_model;
  return report;
}

ExperimentReport run_centralized(const ModelSpec& spec, const OptimizerSettings& optimizer,
                                 const LabeledDataset& pool, std::size_t epochs,
                                 const LabeledDataset& eval_set, std::uint64_t seed) {
  if (pool.empty()) throw ArgumentError("centralized training on an empty pool");
  ExperimentReport report;
  auto model = init_model(spec, pool.dim(), pool.num_classes());
  auto state = OptimizerState::fresh(optimizer, model.values.size());
  report.initial_accuracy = evaluate_accuracy(model, eval_set);
  report.accuracies.reserve(epochs);
  for (std::size_t e = 0; e < epochs; ++e) {
    Rng rng(derive_seed(seed, "centralized", e + 1));
    auto step = train_epoch(model, state, pool, optimizer.batch_size, rng);
    model = std::move(step.model);
    state = std::move(step.optimizer);
    report.accuracies.push_back(evaluate_accuracy(model, eval_set));
  }
  report.final_model = std::move(model);
  return report;
}

}  // namespace v2xfl
