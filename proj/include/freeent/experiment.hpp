#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace freeent {

/// Experiment kinds accepted by the runner, in CLI order.
const std::vector<std::string>& experiment_kinds();

/// A parsed experiment configuration. Everything except kind, seed and the
/// output directory lives in `params`, a nested key-value tree whose allowed
/// keys depend on the kind.
struct ExperimentConfig {
  std::string kind;
  std::uint64_t seed = 0;
  /// Output directory; empty means results go to stdout only.
  std::string out;
  nlohmann::json params = nlohmann::json::object();
  /// Directory used to resolve relative target files (not serialized).
  std::filesystem::path base_dir;

  /// Throws ConfigError on malformed text, unknown kinds or keys, missing
  /// seed, or non-positive radii and budgets.
  static ExperimentConfig parse(std::string_view yaml_text);
  static ExperimentConfig load(const std::filesystem::path& path);
  static ExperimentConfig from_json(const nlohmann::json& j);

  [[nodiscard]] nlohmann::json to_json() const;
  [[nodiscard]] std::string to_yaml() const;
  /// FNV-1a of the canonical JSON of kind, seed and params (keys sorted).
  [[nodiscard]] std::uint64_t hash() const;

  bool operator==(const ExperimentConfig& o) const {
    return kind == o.kind && seed == o.seed && out == o.out && params == o.params;
  }
};

/// Throws ConfigError describing the first problem found.
void validate(const ExperimentConfig& cfg);

/// Defaults for a kind with the given seed; the result validates.
ExperimentConfig default_config(const std::string& kind, std::uint64_t seed);

enum class RunOutcome { Ok, Infeasible };

struct RunRecord {
  std::string kind;
  std::string config_hash;  ///< 16 hex digits
  std::string started;      ///< UTC, ISO 8601
  std::string finished;
  std::string version;
  RunOutcome outcome = RunOutcome::Ok;
  /// One structured record per operation result; deterministic given the
  /// configuration.
  std::vector<nlohmann::json> results;
  /// Extra files (name, contents), such as per-sample chain records.
  std::vector<std::pair<std::string, std::string>> artifacts;
};

struct RunOptions {
  /// 0 uses FREEENT_THREADS or the hardware concurrency.
  int threads = 1;
};

/// Runs the experiment. Throws ConfigError for unreadable targets,
/// InfeasibleTarget and EstimatorFailure from the estimators; a fit that
/// ends infeasible comes back with outcome Infeasible instead.
RunRecord run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

/// results.jsonl, run.json, config.yaml, the artifacts and one .tsv per
/// non-empty table.
void write_run(const RunRecord& record, const ExperimentConfig& cfg, const std::filesystem::path& dir);

/// Result records as JSON lines.
std::string results_jsonl(const RunRecord& record);
/// Parses results.jsonl back into a record (metadata left empty).
RunRecord read_results(const std::filesystem::path& jsonl);

enum class PlotKind {
  /// block, lo, hi, density
  Histogram,
  /// N, value, stderr
  ChiTilde,
  /// c, value, stderr
  OrbitalGrid,
  /// block, k, value, stderr, reference
  Moments,
};

std::string to_string(PlotKind k);
/// Throws ConfigError for unknown names.
PlotKind plot_kind_from_string(std::string_view name);

struct PlotTable {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Tab-separated, one header row.
  void write(std::ostream& os) const;
};

/// Table of the given kind from the record; header only when the record has
/// no matching results.
PlotTable emit_plot_data(const RunRecord& record, PlotKind kind);

}  // namespace freeent
