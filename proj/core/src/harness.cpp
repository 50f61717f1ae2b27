#include "v2xfl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "v2xfl/error.hpp"

namespace v2xfl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config parsing

std::size_t line_of(const YAML::Node& node) {
  const auto mark = node.Mark();
  return mark.line >= 0 ? static_cast<std::size_t>(mark.line) + 1 : 0;
}

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> kSchema{
      {"", {"seed", "repetitions", "output", "cases", "dataset", "partition", "federation",
            "model", "exchange", "baseline", "attack", "checkpoints", "config_hash"}},
      {"dataset", {"source", "classes", "per_class", "dim", "spread", "images", "labels",
                   "test_images", "test_labels", "eval", "holdout_per_class"}},
      {"partition", {"participants", "overrepresentation"}},
      {"federation", {"rounds", "participation", "local_epochs", "batch_size", "learning_rate",
                      "momentum", "weighting", "threads"}},
      {"model", {"architecture", "hidden_width"}},
      {"exchange", {"policy", "accumulate", "log"}},
      {"baseline", {"epochs"}},
      {"attack", {"probe_per_class", "every"}},
      {"checkpoints", {"every", "global"}},
  };
  return kSchema;
}

class ConfigReader {
 public:
  ConfigReader(YAML::Node root, fs::path base_dir, std::set<std::string> overridden)
      : root_(std::move(root)), base_dir_(std::move(base_dir)), overridden_(std::move(overridden)) {}

  void check_keys() const {
    if (!root_.IsMap()) throw ConfigError(line_of(root_), "config must be a key/value map");
    check_section(root_, "");
    for (const auto& entry : root_) {
      const auto key = entry.first.as<std::string>();
      if (schema().count(key) == 0) continue;
      if (!entry.second.IsMap() && !entry.second.IsNull()) {
        throw ConfigError(line_of(entry.second), fmt::format("'{}' must be a map", key));
      }
      if (entry.second.IsMap()) check_section(entry.second, key);
    }
  }

  YAML::Node find(std::string_view section, std::string_view key) const {
    if (section.empty()) return root_[std::string(key)];
    const YAML::Node sec = root_[std::string(section)];
    if (!sec.IsDefined() || !sec.IsMap()) return YAML::Node(YAML::NodeType::Undefined);
    return sec[std::string(key)];
  }

  template <typename T>
  void read(std::string_view section, std::string_view key, T& out) const {
    const YAML::Node node = find(section, key);
    if (!node.IsDefined() || node.IsNull()) return;
    out = convert<T>(node, dotted(section, key), line(section, key));
  }

  /// Line of a key in the file; 0 when it was set by an override.
  std::size_t line(std::string_view section, std::string_view key) const {
    const auto name = dotted(section, key);
    if (overridden_.count(name) || overridden_.count(std::string(section))) return 0;
    const YAML::Node node = find(section, key);
    return node.IsDefined() ? line_of(node) : line_of(root_);
  }

  fs::path resolve(const fs::path& p) const {
    if (p.empty() || p.is_absolute()) return p;
    return (base_dir_ / p).lexically_normal();
  }

  static std::string dotted(std::string_view section, std::string_view key) {
    return section.empty() ? std::string(key) : fmt::format("{}.{}", section, key);
  }

 private:
  static void check_section(const YAML::Node& node, const std::string& section) {
    const auto& allowed = schema().at(section);
    for (const auto& entry : node) {
      const auto key = entry.first.as<std::string>();
      if (allowed.count(key) == 0) {
        throw ConfigError(line_of(entry.first),
                          fmt::format("unknown key '{}'", dotted(section, key)));
      }
    }
  }

  template <typename T>
  static T convert(const YAML::Node& node, const std::string& name, std::size_t line) {
    try {
      if constexpr (std::is_same_v<T, std::size_t>) {
        const auto v = node.as<long long>();
        if (v < 0) throw ConfigError(line, fmt::format("'{}' must be >= 0", name));
        return static_cast<std::size_t>(v);
      } else if constexpr (std::is_same_v<T, std::optional<std::size_t>>) {
        return convert<std::size_t>(node, name, line);
      } else if constexpr (std::is_same_v<T, fs::path>) {
        return fs::path(node.as<std::string>());
      } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
        if (!node.IsSequence()) throw YAML::Exception(node.Mark(), "not a sequence");
        return node.as<std::vector<std::string>>();
      } else {
        return node.as<T>();
      }
    } catch (const YAML::Exception&) {
      throw ConfigError(line, fmt::format("'{}' has an invalid value", name));
    }
  }

  YAML::Node root_;
  fs::path base_dir_;
  std::set<std::string> overridden_;
};

std::string apply_override(YAML::Node& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(0, fmt::format("override '{}' is not of the form key=value", assignment));
  }
  const std::string path = assignment.substr(0, eq);
  YAML::Node value;
  try {
    value = YAML::Load(assignment.substr(eq + 1));
  } catch (const YAML::Exception& e) {
    throw ConfigError(0, fmt::format("override '{}': {}", assignment, e.what()));
  }
  std::vector<std::string> parts;
  std::stringstream ss(path);
  for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
  if (!root.IsMap()) root = YAML::Node(YAML::NodeType::Map);
  YAML::Node cur = root;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    YAML::Node next = cur[parts[i]];
    if (!next.IsDefined() || !next.IsMap()) {
      cur[parts[i]] = YAML::Node(YAML::NodeType::Map);
      next = cur[parts[i]];
    }
    cur.reset(next);
  }
  cur[parts.back()] = value;
  return path;
}

std::size_t campaign_classes(const CampaignConfig& cfg) {
  return cfg.dataset.source == DataSourceKind::idx ? 10 : cfg.dataset.classes;
}

bool has_case(const CampaignConfig& cfg, std::string_view name) {
  return std::find(cfg.cases.begin(), cfg.cases.end(), name) != cfg.cases.end();
}

CampaignConfig build_config(const ConfigReader& r) {
  r.check_keys();
  CampaignConfig cfg;
  auto fail = [&](std::string_view section, std::string_view key, const std::string& what) {
    throw ConfigError(r.line(section, key), what);
  };

  r.read("", "seed", cfg.seed);
  r.read("", "repetitions", cfg.repetitions);
  r.read("", "output", cfg.output_dir);
  cfg.output_dir = r.resolve(cfg.output_dir);
  r.read("", "cases", cfg.cases);

  auto& ds = cfg.dataset;
  std::string source = "synthetic";
  std::string eval = "pool";
  r.read("dataset", "source", source);
  r.read("dataset", "classes", ds.classes);
  r.read("dataset", "per_class", ds.per_class);
  r.read("dataset", "dim", ds.dim);
  r.read("dataset", "spread", ds.spread);
  r.read("dataset", "images", ds.images);
  r.read("dataset", "labels", ds.labels);
  r.read("dataset", "test_images", ds.test_images);
  r.read("dataset", "test_labels", ds.test_labels);
  r.read("dataset", "eval", eval);
  r.read("dataset", "holdout_per_class", ds.holdout_per_class);
  ds.images = r.resolve(ds.images);
  ds.labels = r.resolve(ds.labels);
  ds.test_images = r.resolve(ds.test_images);
  ds.test_labels = r.resolve(ds.test_labels);

  r.read("partition", "participants", cfg.participants);
  r.read("partition", "overrepresentation", cfg.overrepresentation);

  auto& fed = cfg.federation;
  std::string weighting = "samples";
  r.read("federation", "rounds", fed.rounds);
  r.read("federation", "participation", fed.participation);
  r.read("federation", "local_epochs", fed.local_epochs);
  r.read("federation", "batch_size", fed.optimizer.batch_size);
  r.read("federation", "learning_rate", fed.optimizer.learning_rate);
  r.read("federation", "momentum", fed.optimizer.momentum);
  r.read("federation", "weighting", weighting);
  r.read("federation", "threads", fed.threads);

  std::string architecture = "logistic";
  r.read("model", "architecture", architecture);
  r.read("model", "hidden_width", fed.model.hidden_width);

  std::string policy = "paper-mixture";
  r.read("exchange", "policy", policy);
  r.read("exchange", "accumulate", fed.mixture.accumulate);
  r.read("exchange", "log", cfg.exchange_log);

  r.read("baseline", "epochs", cfg.baseline_epochs);
  r.read("attack", "probe_per_class", cfg.probe_per_class);
  r.read("attack", "every", cfg.attack_every);
  r.read("checkpoints", "every", cfg.checkpoint_every);
  r.read("checkpoints", "global", cfg.checkpoint_global);

  // Enumerations.
  if (source == "synthetic") {
    ds.source = DataSourceKind::synthetic;
  } else if (source == "idx") {
    ds.source = DataSourceKind::idx;
  } else {
    fail("dataset", "source", fmt::format("dataset.source must be 'synthetic' or 'idx', got '{}'", source));
  }
  if (eval == "pool") {
    ds.eval = EvalSetKind::pool;
  } else if (eval == "holdout") {
    ds.eval = EvalSetKind::holdout;
  } else {
    fail("dataset", "eval", fmt::format("dataset.eval must be 'pool' or 'holdout', got '{}'", eval));
  }
  if (weighting == "samples" || weighting == "uniform") {
    fed.weight_by_samples = weighting == "samples";
  } else {
    fail("federation", "weighting", "federation.weighting must be 'samples' or 'uniform'");
  }
  try {
    fed.model.architecture = parse_architecture(architecture);
  } catch (const ArgumentError& e) {
    fail("model", "architecture", e.what());
  }
  try {
    fed.mixture.mode = parse_mixture_mode(policy);
  } catch (const ArgumentError& e) {
    fail("exchange", "policy", e.what());
  }

  // Ranges.
  if (cfg.repetitions < 1) fail("", "repetitions", "repetitions must be at least 1");
  std::set<std::string> seen;
  for (const auto& c : cfg.cases) {
    if (c != kCaseBaseline && c != kCaseIid && c != kCaseNonIid && c != kCaseExchange) {
      fail("", "cases", fmt::format("unknown case '{}'", c));
    }
    if (!seen.insert(c).second) fail("", "cases", fmt::format("case '{}' listed twice", c));
  }
  if (!has_case(cfg, kCaseBaseline)) {
    fail("", "cases", "cases must include 'baseline' (CS and MA are relative to it)");
  }
  if (ds.source == DataSourceKind::synthetic) {
    if (ds.classes < 2) fail("dataset", "classes", "dataset.classes must be at least 2");
    if (ds.dim < 1) fail("dataset", "dim", "dataset.dim must be at least 1");
    if (!(ds.spread > 0.0)) fail("dataset", "spread", "dataset.spread must be positive");
    if (ds.per_class < 1) fail("dataset", "per_class", "dataset.per_class must be at least 1");
    if (ds.eval == EvalSetKind::holdout && ds.holdout_per_class == 0) {
      fail("dataset", "holdout_per_class",
           "dataset.eval = holdout needs dataset.holdout_per_class > 0");
    }
  } else {
    auto need = [&](std::string_view key, const fs::path& p) {
      if (p.empty()) fail("dataset", key, fmt::format("dataset.{} is required for idx data", key));
      if (!fs::exists(p)) fail("dataset", key, fmt::format("dataset.{}: {} does not exist", key, p.string()));
    };
    need("images", ds.images);
    need("labels", ds.labels);
    if (ds.eval == EvalSetKind::holdout) {
      need("test_images", ds.test_images);
      need("test_labels", ds.test_labels);
    }
  }
  const std::size_t classes = campaign_classes(cfg);
  if (cfg.participants < 2) fail("partition", "participants", "partition.participants must be at least 2");
  const bool noniid = has_case(cfg, kCaseNonIid) || has_case(cfg, kCaseExchange);
  if (noniid && cfg.participants != classes) {
    fail("partition", "participants",
         fmt::format("non-IID cases need one participant per class ({}), got {}", classes,
                     cfg.participants));
  }
  const double p = cfg.overrepresentation;
  if (!(p >= 1.0 / static_cast<double>(classes) - 1e-12 && p <= 1.0 + 1e-12)) {
    fail("partition", "overrepresentation",
         fmt::format("partition.overrepresentation must lie in [1/{}, 1]", classes));
  }
  if (has_case(cfg, kCaseExchange) && p >= 1.0 - 1e-12) {
    fail("partition", "overrepresentation", "data exchange is impossible at overrepresentation 1");
  }
  if (!(fed.participation > 0.0 && fed.participation <= 1.0)) {
    fail("federation", "participation", "federation.participation must lie in (0, 1]");
  }
  if (fed.local_epochs < 1) fail("federation", "local_epochs", "federation.local_epochs must be at least 1");
  if (fed.optimizer.batch_size < 1) fail("federation", "batch_size", "federation.batch_size must be at least 1");
  if (!(fed.optimizer.learning_rate >= 0.0)) {
    fail("federation", "learning_rate", "federation.learning_rate must be >= 0");
  }
  if (!(fed.optimizer.momentum >= 0.0 && fed.optimizer.momentum < 1.0)) {
    fail("federation", "momentum", "federation.momentum must lie in [0, 1)");
  }
  if (fed.threads < 1) fed.threads = 1;
  if (fed.model.architecture == Architecture::mlp && fed.model.hidden_width < 1) {
    fail("model", "hidden_width", "model.hidden_width must be at least 1");
  }
  fed.participants = cfg.participants;
  fed.overrepresentation = cfg.overrepresentation;
  return cfg;
}

// ---------------------------------------------------------------------------
// Persistence helpers

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  return out;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot read {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path run_dir_for(const fs::path& output, std::string_view case_name, std::size_t rep) {
  return output / std::string(case_name) / fmt::format("rep_{:02}", rep);
}

std::vector<std::optional<Label>> nominal_truth(std::size_t participants, std::size_t classes) {
  // Participant i is associated with class i mod n_c; for non-IID partitions
  // this is its overrepresented class, for IID ones the nominal label the
  // attacker is scored against.
  std::vector<std::optional<Label>> truth(participants);
  for (std::size_t i = 0; i < participants; ++i) truth[i] = static_cast<Label>(i % classes);
  return truth;
}

struct RunOutput {
  RunResult result;
};

RunResult run_baseline(const CampaignConfig& cfg, const CampaignData& data, std::size_t rep,
                       const fs::path& dir, const std::string& hash) {
  const auto seeds = run_seeds(cfg.seed, kCaseBaseline, rep);
  ModelSpec spec = cfg.federation.model;
  spec.init_seed = seeds.init;
  const auto report = run_centralized(spec, cfg.federation.optimizer, data.pool,
                                      cfg.effective_baseline_epochs(), data.eval_set, seeds.stream);
  auto trace = open_out(dir / "trace.jsonl");
  trace << json{{"type", "header"},
                {"config_hash", hash},
                {"case", kCaseBaseline},
                {"repetition", rep},
                {"seed", seeds.stream},
                {"eval_set", data.eval_name},
                {"initial_accuracy", report.initial_accuracy}}
               .dump()
        << '\n';
  for (std::size_t e = 0; e < report.accuracies.size(); ++e) {
    trace << json{{"type", "round"}, {"round", e + 1}, {"accuracy", report.accuracies[e]}}.dump()
          << '\n';
  }
  if (cfg.checkpoint_global) {
    auto out = open_out(dir / "checkpoints" / "final_global.bin");
    write_model(out, report.final_model, {{"config_hash", hash}, {"case", "baseline"}});
  }
  RunResult rr;
  rr.initial_accuracy = report.initial_accuracy;
  rr.trace = {report.accuracies, data.eval_name};
  return rr;
}

RunResult run_federated(const CampaignConfig& cfg, const CampaignData& data,
                        const AttackProbe* probe, std::string_view case_name, std::size_t rep,
                        const fs::path& dir, const std::string& hash, std::ostream* progress) {
  const auto fcfg = case_federation_config(cfg, case_name, rep);
  const std::size_t classes = data.pool.num_classes();
  const auto truth = nominal_truth(cfg.participants, classes);

  auto trace = open_out(dir / "trace.jsonl");
  std::ofstream verdicts;
  if (probe) {
    verdicts = open_out(dir / "attack.csv");
    write_verdict_csv_header(verdicts, classes, hash);
  }
  std::ofstream exchange_log;
  if (cfg.exchange_log && fcfg.exchange_enabled) exchange_log = open_out(dir / "exchange.jsonl");

  std::vector<json> round_lines;
  std::vector<double> success;
  std::vector<std::size_t> tie_hits;
  const auto started = std::chrono::steady_clock::now();

  auto observer = [&](const RoundRecord& record) {
    json line{{"type", "round"}, {"round", record.round}, {"accuracy", record.global_accuracy}};
    if (probe && record.round % cfg.attack_every == 0) {
      const auto attack = attack_round(record.updates, *probe, truth, record.round);
      write_verdict_csv_rows(verdicts, attack.verdicts);
      success.push_back(attack.success);
      tie_hits.push_back(attack.tie_hits);
      line["r"] = attack.success;
      line["tie_hits"] = attack.tie_hits;
    }
    round_lines.push_back(std::move(line));
    if (cfg.checkpoint_every > 0 && record.round % cfg.checkpoint_every == 0) {
      const auto round_dir = dir / "checkpoints" / fmt::format("round_{:04}", record.round);
      for (const auto& u : record.updates) {
        auto out = open_out(round_dir / fmt::format("participant_{:02}.bin", u.participant));
        write_model(out, u.model,
                    {{"config_hash", hash},
                     {"case", std::string(case_name)},
                     {"repetition", std::to_string(rep)},
                     {"round", std::to_string(record.round)},
                     {"participant", std::to_string(u.participant)},
                     {"sample_count", std::to_string(u.sample_count)}});
      }
    }
    if (exchange_log.is_open()) write_exchange_log(exchange_log, record.packets, hash);
    if (progress && (record.round % 50 == 0 || record.round == fcfg.rounds)) {
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
      *progress << fmt::format("  {} rep {} round {}/{} acc {:.4f}{} ({:.1f}s)\n", case_name, rep,
                               record.round, fcfg.rounds, record.global_accuracy,
                               line.contains("r") ? fmt::format(" R {}", line["r"].get<double>())
                                                  : std::string{},
                               elapsed.count());
    }
  };

  const auto report = run_experiment(fcfg, data.pool, data.eval_set, observer);
  for (std::size_t i = 0; i < report.overrepresented.size(); ++i) {
    if (report.overrepresented[i] && report.overrepresented[i] != truth[i]) {
      throw Error(fmt::format("participant {} overrepresents class {}, expected {}", i,
                              *report.overrepresented[i], *truth[i]));
    }
  }

  trace << json{{"type", "header"},
                {"config_hash", hash},
                {"case", case_name},
                {"repetition", rep},
                {"seed", fcfg.seed},
                {"eval_set", data.eval_name},
                {"initial_accuracy", report.initial_accuracy},
                {"sharing_quota", report.sharing_quota}}
               .dump()
        << '\n';
  for (const auto& line : round_lines) trace << line.dump() << '\n';

  json participants = json::array();
  for (std::size_t i = 0; i < truth.size(); ++i) {
    participants.push_back({{"participant", i},
                            {"truth", *truth[i]},
                            {"overrepresented", report.overrepresented[i]
                                                    ? json(*report.overrepresented[i])
                                                    : json(nullptr)}});
  }
  auto meta = open_out(dir / "participants.json");
  meta << json{{"config_hash", hash},
               {"case", case_name},
               {"repetition", rep},
               {"sharing_quota", report.sharing_quota},
               {"participants", participants}}
              .dump(2)
       << '\n';
  if (cfg.checkpoint_global) {
    auto out = open_out(dir / "checkpoints" / "final_global.bin");
    write_model(out, report.final_model, {{"config_hash", hash}, {"case", std::string(case_name)}});
  }

  RunResult rr;
  rr.initial_accuracy = report.initial_accuracy;
  rr.trace = {report.accuracies, data.eval_name};
  if (probe) rr.attack = summarize_attack(success, tie_hits);
  return rr;
}

ReportContext report_context(const CampaignConfig& cfg, const std::string& hash) {
  ReportContext ctx;
  ctx.baseline_case = std::string(kCaseBaseline);
  ctx.participants = cfg.participants;
  ctx.classes = campaign_classes(cfg);
  ctx.master_seed = cfg.seed;
  ctx.config_hash = hash;
  return ctx;
}

void write_report_files(const fs::path& output, const ComparisonReport& report) {
  auto json_out = open_out(output / "report.json");
  json_out << report_to_json(report);
  auto csv_out = open_out(output / "report.csv");
  write_report_csv(csv_out, report);
}

}  // namespace

// ---------------------------------------------------------------------------

CampaignConfig parse_campaign_config(std::string_view text, const fs::path& base_dir,
                                     std::span<const std::string> overrides) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(e.mark.line >= 0 ? static_cast<std::size_t>(e.mark.line) + 1 : 0, e.msg);
  }
  if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  std::set<std::string> overridden;
  for (const auto& o : overrides) overridden.insert(apply_override(root, o));
  return build_config(ConfigReader(root, base_dir, std::move(overridden)));
}

CampaignConfig load_campaign_config(const fs::path& path, std::span<const std::string> overrides) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const Error& e) {
    throw ConfigError(0, e.what());
  }
  return parse_campaign_config(text, path.parent_path(), overrides);
}

std::string canonical_config_json(const CampaignConfig& cfg) {
  const auto& ds = cfg.dataset;
  const auto& fed = cfg.federation;
  json dataset{{"source", ds.source == DataSourceKind::idx ? "idx" : "synthetic"},
               {"per_class", ds.per_class},
               {"eval", ds.eval == EvalSetKind::pool ? "pool" : "holdout"}};
  if (ds.source == DataSourceKind::synthetic) {
    dataset["classes"] = ds.classes;
    dataset["dim"] = ds.dim;
    dataset["spread"] = ds.spread;
    dataset["holdout_per_class"] = ds.holdout_per_class;
  } else {
    dataset["images"] = ds.images.string();
    dataset["labels"] = ds.labels.string();
    if (!ds.test_images.empty()) dataset["test_images"] = ds.test_images.string();
    if (!ds.test_labels.empty()) dataset["test_labels"] = ds.test_labels.string();
  }
  json doc{
      {"seed", cfg.seed},
      {"repetitions", cfg.repetitions},
      {"cases", cfg.cases},
      {"dataset", dataset},
      {"partition", {{"participants", cfg.participants},
                     {"overrepresentation", cfg.overrepresentation}}},
      {"federation", {{"rounds", fed.rounds},
                      {"participation", fed.participation},
                      {"local_epochs", fed.local_epochs},
                      {"batch_size", fed.optimizer.batch_size},
                      {"learning_rate", fed.optimizer.learning_rate},
                      {"momentum", fed.optimizer.momentum},
                      {"weighting", fed.weight_by_samples ? "samples" : "uniform"}}},
      {"model", {{"architecture", to_string(fed.model.architecture)},
                 {"hidden_width", fed.model.hidden_width}}},
      {"exchange", {{"policy", to_string(fed.mixture.mode)},
                    {"accumulate", fed.mixture.accumulate},
                    {"log", cfg.exchange_log}}},
      {"baseline", {{"epochs", cfg.effective_baseline_epochs()}}},
      {"attack", {{"probe_per_class", cfg.probe_per_class}, {"every", cfg.attack_every}}},
      {"checkpoints", {{"every", cfg.checkpoint_every}, {"global", cfg.checkpoint_global}}},
  };
  return doc.dump(2);
}

std::string config_hash(const CampaignConfig& cfg) {
  return fmt::format("{:016x}", fnv1a64(canonical_config_json(cfg)));
}

RunSeeds run_seeds(std::uint64_t master, std::string_view case_name, std::size_t repetition) {
  return {derive_seed(master, "run", case_name, repetition),
          derive_seed(master, "partition", repetition), derive_seed(master, "init", repetition)};
}

CampaignData load_campaign_data(const CampaignConfig& cfg) {
  const auto& ds = cfg.dataset;
  CampaignData data;
  Rng rng(derive_seed(cfg.seed, "data"));
  if (ds.source == DataSourceKind::synthetic) {
    const std::size_t holdout = ds.eval == EvalSetKind::holdout ? ds.holdout_per_class : 0;
    auto all = synthesize(ds.classes, ds.per_class + holdout, ds.dim, ds.spread, rng);
    if (holdout > 0) {
      auto [pool, rest] = split_per_class(all, ds.per_class, rng);
      data.pool = std::move(pool);
      data.eval_set = std::move(rest);
      data.eval_name = "synthetic-holdout";
    } else {
      data.pool = std::move(all);
      data.eval_set = data.pool;
      data.eval_name = "pool";
    }
    return data;
  }
  const auto full = load_idx(ds.images, ds.labels);
  std::size_t per_class = ds.per_class;
  if (per_class == 0) {
    const auto counts = full.class_counts();
    per_class = *std::min_element(counts.begin(), counts.end());
  }
  data.pool = balanced_subset(full, per_class, rng);
  if (ds.eval == EvalSetKind::holdout) {
    data.eval_set = load_idx(ds.test_images, ds.test_labels);
    data.eval_name = "idx-test";
  } else {
    data.eval_set = data.pool;
    data.eval_name = "pool";
  }
  return data;
}

FederationConfig case_federation_config(const CampaignConfig& cfg, std::string_view case_name,
                                        std::size_t repetition) {
  FederationConfig fcfg = cfg.federation;
  const auto seeds = run_seeds(cfg.seed, case_name, repetition);
  fcfg.participants = cfg.participants;
  fcfg.overrepresentation = cfg.overrepresentation;
  fcfg.seed = seeds.stream;
  fcfg.partition_seed = seeds.partition;
  fcfg.model.init_seed = seeds.init;
  if (case_name == kCaseIid) {
    fcfg.partitioning = PartitionScheme::iid;
    fcfg.exchange_enabled = false;
  } else if (case_name == kCaseNonIid) {
    fcfg.partitioning = PartitionScheme::noniid;
    fcfg.exchange_enabled = false;
  } else if (case_name == kCaseExchange) {
    fcfg.partitioning = PartitionScheme::noniid;
    fcfg.exchange_enabled = true;
  } else {
    throw ArgumentError(fmt::format("'{}' is not a federated case", case_name));
  }
  return fcfg;
}

ComparisonReport run_campaign(const CampaignConfig& cfg, std::ostream* progress) {
  const auto hash = config_hash(cfg);
  const auto& output = cfg.output_dir;
  fs::create_directories(output);
  fs::remove(output / "error_manifest.json");
  {
    auto config_out = open_out(output / "config.json");
    auto doc = json::parse(canonical_config_json(cfg));
    doc["config_hash"] = hash;
    config_out << doc.dump(2) << '\n';
  }

  std::vector<CaseRuns> runs;
  for (const auto& c : cfg.cases) runs.push_back({c, {}});

  std::string current_case;
  std::size_t current_rep = 0;
  try {
    const auto data = load_campaign_data(cfg);
    std::optional<AttackProbe> probe;
    const bool federated = std::any_of(cfg.cases.begin(), cfg.cases.end(),
                                       [](const auto& c) { return c != kCaseBaseline; });
    if (cfg.attack_every > 0 && federated) {
      Rng rng(derive_seed(cfg.seed, "probe"));
      probe = build_probe(data.pool, cfg.probe_per_class, rng);
    }
    for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) {
      for (std::size_t c = 0; c < cfg.cases.size(); ++c) {
        current_case = cfg.cases[c];
        current_rep = rep;
        const auto dir = run_dir_for(output, current_case, rep);
        if (progress) *progress << fmt::format("[{}] repetition {}\n", current_case, rep);
        if (current_case == kCaseBaseline) {
          runs[c].runs.push_back(run_baseline(cfg, data, rep, dir, hash));
        } else {
          runs[c].runs.push_back(run_federated(cfg, data, probe ? &*probe : nullptr, current_case,
                                               rep, dir, hash, progress));
        }
      }
    }
  } catch (const std::exception& e) {
    auto manifest = open_out(output / "error_manifest.json");
    manifest << json{{"config_hash", hash},
                     {"case", current_case},
                     {"repetition", current_rep},
                     {"error", e.what()}}
                    .dump(2)
             << '\n';
    throw;
  }

  auto report = aggregate_report(runs, report_context(cfg, hash));
  write_report_files(output, report);
  return report;
}

ComparisonReport report_from_directory(const fs::path& output_dir) {
  const auto cfg = parse_campaign_config(read_text(output_dir / "config.json"), output_dir);
  const auto hash = config_hash(cfg);
  std::vector<CaseRuns> runs;
  for (const auto& c : cfg.cases) {
    CaseRuns case_runs{c, {}};
    for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) {
      const auto path = run_dir_for(output_dir, c, rep) / "trace.jsonl";
      std::ifstream in(path);
      if (!in) throw Error(fmt::format("missing trace {}", path.string()));
      RunResult rr;
      std::vector<double> success;
      std::vector<std::size_t> ties;
      for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        const auto doc = json::parse(line);
        if (doc.at("type") == "header") {
          if (doc.at("config_hash") != hash) {
            throw Error(fmt::format("{} was produced by config {}, not {}", path.string(),
                                    doc.at("config_hash").get<std::string>(), hash));
          }
          rr.initial_accuracy = doc.at("initial_accuracy").get<double>();
          rr.trace.eval_set = doc.at("eval_set").get<std::string>();
          continue;
        }
        rr.trace.values.push_back(doc.at("accuracy").get<double>());
        if (doc.contains("r")) {
          success.push_back(doc.at("r").get<double>());
          ties.push_back(doc.at("tie_hits").get<std::size_t>());
        }
      }
      if (c != kCaseBaseline && cfg.attack_every > 0) rr.attack = summarize_attack(success, ties);
      case_runs.runs.push_back(std::move(rr));
    }
    runs.push_back(std::move(case_runs));
  }
  auto report = aggregate_report(runs, report_context(cfg, hash));
  return report;
}

PartitionStats partition_stats(const CampaignConfig& cfg) {
  const auto data = load_campaign_data(cfg);
  PartitionConfig pcfg;
  pcfg.participants = cfg.participants;
  pcfg.classes = data.pool.num_classes();
  pcfg.overrepresentation = cfg.overrepresentation;
  pcfg.samples_per_class = data.pool.class_counts().front();
  Rng rng(run_seeds(cfg.seed, kCaseNonIid, 0).partition);
  PartitionStats stats;
  stats.partitions = partition_noniid(data.pool, pcfg, rng);
  try {
    stats.sharing_quota = sharing_quota(pcfg);
  } catch (const InfeasibleConfigError&) {
    stats.quota_feasible = false;
  }
  return stats;
}

void write_partition_stats(std::ostream& out, const PartitionStats& stats) {
  write_partition_csv(out, stats.partitions);
  if (stats.quota_feasible) {
    out << "# sharing_quota=" << stats.sharing_quota << '\n';
  } else {
    out << "# sharing_quota=infeasible\n";
  }
}

AttackEvalResult attack_eval(const fs::path& run_dir, const AttackEvalOptions& options,
                             std::ostream& csv) {
  const auto output_dir = run_dir.parent_path().parent_path();
  const auto cfg = parse_campaign_config(read_text(output_dir / "config.json"), output_dir);
  const auto hash = config_hash(cfg);

  const auto meta = json::parse(read_text(run_dir / "participants.json"));
  std::vector<std::optional<Label>> truth;
  for (const auto& p : meta.at("participants")) {
    const auto id = p.at("participant").get<std::size_t>();
    if (truth.size() <= id) truth.resize(id + 1);
    truth[id] = p.at("truth").get<Label>();
  }

  const auto data = load_campaign_data(cfg);
  Rng rng(options.probe_seed.value_or(derive_seed(cfg.seed, "probe")));
  const auto probe = build_probe(data.pool, options.probe_per_class.value_or(cfg.probe_per_class), rng);

  const auto checkpoints = run_dir / "checkpoints";
  std::vector<fs::path> rounds;
  if (fs::is_directory(checkpoints)) {
    for (const auto& entry : fs::directory_iterator(checkpoints)) {
      if (entry.is_directory() && entry.path().filename().string().starts_with("round_")) {
        rounds.push_back(entry.path());
      }
    }
  }
  if (rounds.empty()) {
    throw CheckpointError(fmt::format("no local-model checkpoints under {}", checkpoints.string()));
  }
  std::sort(rounds.begin(), rounds.end());

  AttackEvalResult result;
  std::vector<double> success;
  std::vector<std::size_t> ties;
  write_verdict_csv_header(csv, data.pool.num_classes(), hash);
  for (const auto& round_dir : rounds) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(round_dir)) {
      if (entry.path().extension() == ".bin") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<LocalUpdate> updates;
    std::size_t round = 0;
    for (const auto& file : files) {
      std::ifstream in(file, std::ios::binary);
      if (!in) throw CheckpointError(fmt::format("cannot open {}", file.string()));
      CheckpointMetadata md;
      LocalUpdate u;
      try {
        u.model = read_model(in, &md);
        u.participant = static_cast<ParticipantId>(std::stoul(md.at("participant")));
        round = std::stoull(md.at("round"));
        u.sample_count = std::stoull(md.at("sample_count"));
      } catch (const CheckpointError& e) {
        throw CheckpointError(fmt::format("{}: {}", file.string(), e.what()));
      } catch (const std::exception&) {
        throw CheckpointError(fmt::format("{}: missing or malformed metadata", file.string()));
      }
      if (md.count("config_hash") && md.at("config_hash") != hash) {
        throw CheckpointError(fmt::format("{} belongs to config {}, not {}", file.string(),
                                          md.at("config_hash"), hash));
      }
      updates.push_back(std::move(u));
    }
    if (updates.empty()) {
      throw CheckpointError(fmt::format("{} holds no checkpoints", round_dir.string()));
    }
    auto attack = attack_round(updates, probe, truth, round);
    write_verdict_csv_rows(csv, attack.verdicts);
    success.push_back(attack.success);
    ties.push_back(attack.tie_hits);
    std::move(attack.verdicts.begin(), attack.verdicts.end(), std::back_inserter(result.verdicts));
  }
  result.summary = summarize_attack(success, ties);
  return result;
}

}  // namespace v2xfl
