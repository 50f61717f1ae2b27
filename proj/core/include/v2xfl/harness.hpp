#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "v2xfl/adversary.hpp"
#include "v2xfl/dataset.hpp"
#include "v2xfl/exchange.hpp"
#include "v2xfl/federation.hpp"
#include "v2xfl/metrics.hpp"
#include "v2xfl/model.hpp"
#include "v2xfl/partition.hpp"

namespace v2xfl {

enum class DataSourceKind { synthetic, idx };
enum class EvalSetKind { pool, holdout };

struct DatasetConfig {
  DataSourceKind source = DataSourceKind::synthetic;
  // synthetic
  std::size_t classes = 10;
  std::size_t dim = 16;
  double spread = 0.1;
  std::size_t holdout_per_class = 0;
  // idx
  std::filesystem::path images;
  std::filesystem::path labels;
  std::filesystem::path test_images;
  std::filesystem::path test_labels;
  /// Samples per class in the pool. For idx sources zero means the size of
  /// the smallest class.
  std::size_t per_class = 200;
  EvalSetKind eval = EvalSetKind::pool;
};

/// The measurement cases a campaign can run.
inline constexpr std::string_view kCaseBaseline = "baseline";
inline constexpr std::string_view kCaseIid = "iid";
inline constexpr std::string_view kCaseNonIid = "noniid";
inline constexpr std::string_view kCaseExchange = "exchange";

struct CampaignConfig {
  DatasetConfig dataset;
  std::size_t participants = 10;
  double overrepresentation = 0.5;
  /// rounds, participation, local epochs, optimizer, model, weighting and
  /// threads; partitioning, exchange and seeds are filled in per case.
  FederationConfig federation;
  std::optional<std::size_t> baseline_epochs;  ///< defaults to federation.rounds
  std::size_t probe_per_class = 0;             ///< zero: whole pool
  std::size_t attack_every = 1;                ///< zero disables the attack
  std::size_t checkpoint_every = 1;            ///< zero disables local checkpoints
  bool checkpoint_global = false;
  bool exchange_log = false;
  std::vector<std::string> cases{std::string(kCaseBaseline), std::string(kCaseIid),
                                 std::string(kCaseNonIid), std::string(kCaseExchange)};
  std::size_t repetitions = 10;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "runs";

  std::size_t effective_baseline_epochs() const {
    return baseline_epochs.value_or(federation.rounds);
  }
};

/// Reads a YAML key/value tree. Overrides are "dotted.key=value" strings
/// applied before validation. Relative paths resolve against the file's
/// directory. Throws ConfigError with the offending line.
CampaignConfig load_campaign_config(const std::filesystem::path& path,
                                    std::span<const std::string> overrides = {});
CampaignConfig parse_campaign_config(std::string_view text,
                                     const std::filesystem::path& base_dir,
                                     std::span<const std::string> overrides = {});

/// Canonical JSON of every setting that can influence results (the output
/// directory and thread count are excluded).
std::string canonical_config_json(const CampaignConfig& cfg);
/// 16 hex digits of FNV-1a over the canonical JSON.
std::string config_hash(const CampaignConfig& cfg);

/// Seeds are pure functions of (master seed, key, repetition). The partition
/// and initial-model seeds are shared by every case of one repetition so
/// the cases differ only in how data is distributed.
struct RunSeeds {
  std::uint64_t stream = 0;
  std::uint64_t partition = 0;
  std::uint64_t init = 0;
};
RunSeeds run_seeds(std::uint64_t master, std::string_view case_name, std::size_t repetition);

struct CampaignData {
  LabeledDataset pool;
  LabeledDataset eval_set;
  std::string eval_name;
};
CampaignData load_campaign_data(const CampaignConfig& cfg);

/// Federation settings of one case/repetition.
FederationConfig case_federation_config(const CampaignConfig& cfg, std::string_view case_name,
                                        std::size_t repetition);

/// Runs every case x repetition, writing traces, verdicts, checkpoints and
/// the comparison report under cfg.output_dir. On a runtime failure an
/// error manifest is written and the exception is rethrown.
ComparisonReport run_campaign(const CampaignConfig& cfg, std::ostream* progress = nullptr);

/// Rebuilds the comparison report from the files of a finished campaign.
ComparisonReport report_from_directory(const std::filesystem::path& output_dir);

struct PartitionStats {
  std::vector<ParticipantDataset> partitions;
  std::size_t sharing_quota = 0;
  bool quota_feasible = true;
};
/// Non-IID partition of repetition 0 plus the sharing quota.
PartitionStats partition_stats(const CampaignConfig& cfg);
void write_partition_stats(std::ostream& out, const PartitionStats& stats);

struct AttackEvalOptions {
  std::optional<std::size_t> probe_per_class;
  std::optional<std::uint64_t> probe_seed;
};

struct AttackEvalResult {
  std::vector<AttackVerdict> verdicts;
  AttackSummary summary;
};

/// Re-runs the attack offline on the local-model checkpoints of one run
/// directory (<output>/<case>/rep_NN). Writes the verdict CSV to `csv`.
AttackEvalResult attack_eval(const std::filesystem::path& run_dir,
                             const AttackEvalOptions& options, std::ostream& csv);

}  // namespace v2xfl
