#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "v2xfl/dataset.hpp"
#include "v2xfl/federation.hpp"
#include "v2xfl/model.hpp"
#include "v2xfl/partition.hpp"
#include "v2xfl/rng.hpp"

namespace v2xfl {

/// Per-class evaluation sets S_0..S_{n_c-1} held by the server-side attacker.
struct AttackProbe {
  std::vector<LabeledDataset> per_class;
  std::size_t per_class_size = 0;
};

/// `per_class_size` samples of every class drawn without replacement; zero
/// takes every sample (classes must then be equally sized).
AttackProbe build_probe(const LabeledDataset& pool, std::size_t per_class_size, Rng& rng);

struct AttackEvidence {
  /// Accuracy of the model on each S_i.
  std::vector<double> per_class_accuracy;
  /// argmax of the evidence, lowest index on ties.
  Label inferred = 0;
  /// More than one class attains the maximum.
  bool tied = false;
};

/// The class the model predicts most accurately, taken as the owner's
/// overrepresented class. Sees nothing but the model and the probe.
AttackEvidence infer_overrepresented(const ModelParameters& model, const AttackProbe& probe);

struct AttackVerdict {
  ParticipantId participant = 0;
  std::size_t round = 0;
  Label inferred = 0;
  Label truth = 0;
  std::vector<double> evidence;
  bool tied = false;

  bool correct() const noexcept { return inferred == truth; }
};

struct AttackRound {
  std::vector<AttackVerdict> verdicts;
  /// Number of participants whose class was identified (R).
  double success = 0.0;
  /// Correct verdicts that were decided by the tie rule.
  std::size_t tie_hits = 0;
};

/// Attacks every uploaded model of one round. `truth[id]` is the
/// overrepresented class of participant `id`; unknown owners are an ArgumentError.
AttackRound attack_round(std::span<const LocalUpdate> updates, const AttackProbe& probe,
                         std::span<const std::optional<Label>> truth, std::size_t round);

/// R = sum_i I(o_i == inferred_i).
double success_rate(std::span<const AttackVerdict> verdicts);

/// n_p / n_c: expected R of a uniformly guessing attacker.
double random_guess_expectation(std::size_t participants, std::size_t classes);

struct AttackSummary {
  std::vector<double> per_round;
  /// Mean R over the last 10% of rounds (at least one round).
  double tail_mean = 0.0;
  double max = 0.0;
  /// Mean tie-decided correct verdicts per round over the same tail.
  double tail_tie_hits = 0.0;
};

AttackSummary summarize_attack(std::span<const double> per_round_success,
                               std::span<const std::size_t> per_round_tie_hits);

/// A configuration is secure when the attacker does no better than random
/// guessing, allowing for hits credited by the lowest-index tie rule.
bool is_secure(double mean_success, double random_expectation, double tie_inflation);

/// round,participant,inferred,truth,correct,ev_0..ev_{n-1}
void write_verdict_csv_header(std::ostream& out, std::size_t classes,
                              std::string_view config_hash);
void write_verdict_csv_rows(std::ostream& out, std::span<const AttackVerdict> verdicts);

}  // namespace v2xfl
