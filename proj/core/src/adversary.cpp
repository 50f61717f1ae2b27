#include "v2xfl/adversary.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "v2xfl/error.hpp"

namespace v2xfl {

AttackProbe build_probe(const LabeledDataset& pool, std::size_t per_class_size, Rng& rng) {
  const auto& index = pool.class_index();
  if (index.empty()) throw ArgumentError("attack probe needs a labelled pool");
  AttackProbe probe;
  if (per_class_size == 0) {
    probe.per_class_size = index.front().size();
    for (std::size_t c = 0; c < index.size(); ++c) {
      if (index[c].size() != probe.per_class_size || index[c].empty()) {
        throw ArgumentError(
            fmt::format("using the whole pool as probe needs equally sized, nonempty classes "
                        "(class {} has {})",
                        c, index[c].size()));
      }
      probe.per_class.push_back(pool.subset(index[c]));
    }
    return probe;
  }
  probe.per_class_size = per_class_size;
  for (std::size_t c = 0; c < index.size(); ++c) {
    if (index[c].size() < per_class_size) {
      throw ArgumentError(fmt::format("probe needs {} samples of class {}, pool has {}",
                                      per_class_size, c, index[c].size()));
    }
    auto draw = rng.sample(std::span<const std::uint32_t>(index[c]), per_class_size);
    std::sort(draw.begin(), draw.end());
    probe.per_class.push_back(pool.subset(draw));
  }
  return probe;
}

AttackEvidence infer_overrepresented(const ModelParameters& model, const AttackProbe& probe) {
  AttackEvidence out;
  out.per_class_accuracy.reserve(probe.per_class.size());
  for (const auto& set : probe.per_class) {
    out.per_class_accuracy.push_back(evaluate_accuracy(model, set));
  }
  const auto& ev = out.per_class_accuracy;
  const auto top = std::max_element(ev.begin(), ev.end());
  out.inferred = static_cast<Label>(top - ev.begin());
  out.tied = std::count(ev.begin(), ev.end(), *top) > 1;
  return out;
}

AttackRound attack_round(std::span<const LocalUpdate> updates, const AttackProbe& probe,
                         std::span<const std::optional<Label>> truth, std::size_t round) {
  AttackRound out;
  out.verdicts.reserve(updates.size());
  for (const auto& u : updates) {
    if (u.participant >= truth.size() || !truth[u.participant]) {
      throw ArgumentError(fmt::format("no ground truth for participant {}", u.participant));
    }
    auto evidence = infer_overrepresented(u.model, probe);
    AttackVerdict v;
    v.participant = u.participant;
    v.round = round;
    v.inferred = evidence.inferred;
    v.truth = *truth[u.participant];
    v.tied = evidence.tied;
    v.evidence = std::move(evidence.per_class_accuracy);
    if (v.correct() && v.tied) ++out.tie_hits;
    out.verdicts.push_back(std::move(v));
  }
  out.success = success_rate(out.verdicts);
  return out;
}

double success_rate(std::span<const AttackVerdict> verdicts) {
  return static_cast<double>(
      std::count_if(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.correct(); }));
}

double random_guess_expectation(std::size_t participants, std::size_t classes) {
  if (classes == 0) throw ArgumentError("random guess over zero classes");
  return static_cast<double>(participants) / static_cast<double>(classes);
}

AttackSummary summarize_attack(std::span<const double> per_round_success,
                               std::span<const std::size_t> per_round_tie_hits) {
  AttackSummary out;
  out.per_round.assign(per_round_success.begin(), per_round_success.end());
  if (per_round_success.empty()) return out;
  if (per_round_tie_hits.size() != per_round_success.size()) {
    throw ArgumentError("tie-hit trace length differs from the success trace");
  }
  const std::size_t n = per_round_success.size();
  const std::size_t tail = std::max<std::size_t>(1, n / 10);
  double sum = 0.0;
  double ties = 0.0;
  for (std::size_t i = n - tail; i < n; ++i) {
    sum += per_round_success[i];
    ties += static_cast<double>(per_round_tie_hits[i]);
  }
  out.tail_mean = sum / static_cast<double>(tail);
  out.tail_tie_hits = ties / static_cast<double>(tail);
  out.max = *std::max_element(per_round_success.begin(), per_round_success.end());
  return out;
}

bool is_secure(double mean_success, double random_expectation, double tie_inflation) {
  return mean_success <= random_expectation + tie_inflation + 1e-12;
}

void write_verdict_csv_header(std::ostream& out, std::size_t classes,
                              std::string_view config_hash) {
  out << "# config_hash=" << config_hash << '\n';
  out << "round,participant,inferred,truth,correct";
  for (std::size_t c = 0; c < classes; ++c) out << ",ev_" << c;
  out << '\n';
}

void write_verdict_csv_rows(std::ostream& out, std::span<const AttackVerdict> verdicts) {
  for (const auto& v : verdicts) {
    out << fmt::format("{},{},{},{},{}", v.round, v.participant, v.inferred, v.truth,
                       v.correct() ? 1 : 0);
    for (double e : v.evidence) out << fmt::format(",{}", e);
    out << '\n';
  }
}

}  // namespace v2xfl
