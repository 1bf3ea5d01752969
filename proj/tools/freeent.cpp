#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "freeent/errors.hpp"
#include "freeent/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitEstimator = 4;

struct RunArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 0;
};

void add_run_flags(CLI::App* sub, RunArgs& a) {
  sub->add_option("--config", a.config, "Experiment configuration (YAML)");
  sub->add_option("--seed", a.seed, "Seed, overrides the configuration");
  sub->add_option("--out", a.out, "Output directory, overrides the configuration");
  sub->add_option("--threads", a.threads, "Worker threads (default: FREEENT_THREADS or all cores)")
      ->check(CLI::NonNegativeNumber);
}

int run(const std::string& kind, const RunArgs& a) {
  using namespace freeent;
  ExperimentConfig cfg;
  if (!a.config.empty()) {
    cfg = ExperimentConfig::load(a.config);
    if (!kind.empty() && cfg.kind != kind)
      throw ConfigError("config kind '" + cfg.kind + "' does not match subcommand '" + kind + "'");
    if (a.seed) cfg.seed = *a.seed;
  } else {
    if (kind.empty()) throw ConfigError("run needs --config");
    if (!a.seed) throw ConfigError("no --config given, so --seed is required");
    cfg = default_config(kind, *a.seed);
  }
  if (!a.out.empty()) cfg.out = a.out;
  validate(cfg);

  const RunRecord rec = run_experiment(cfg, RunOptions{a.threads});
  std::cout << results_jsonl(rec);
  if (!cfg.out.empty()) write_run(rec, cfg, cfg.out);
  if (rec.outcome == RunOutcome::Infeasible) {
    std::cerr << "freeent: target infeasible\n";
    return kExitInfeasible;
  }
  return 0;
}

int plot(const std::string& in, const std::string& table) {
  using namespace freeent;
  const PlotKind kind = plot_kind_from_string(table);
  std::filesystem::path path = in;
  if (std::filesystem::is_directory(path)) path /= "results.jsonl";
  emit_plot_data(read_results(path), kind).write(std::cout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Free entropy estimators for random matrix ensembles"};
  app.require_subcommand(1);

  RunArgs args;
  std::string selected;
  for (const std::string& kind : freeent::experiment_kinds()) {
    CLI::App* sub = app.add_subcommand(kind, "Run a " + kind + " experiment");
    add_run_flags(sub, args);
    sub->callback([&selected, kind] { selected = kind; });
  }
  CLI::App* run_cmd = app.add_subcommand("run", "Run the experiment named by the configuration");
  add_run_flags(run_cmd, args);

  std::string plot_in, plot_table;
  CLI::App* plot_cmd = app.add_subcommand("plot", "Print a plot table from a results file or run directory");
  plot_cmd->add_option("--in", plot_in, "results.jsonl or a run directory")->required();
  plot_cmd->add_option("--table", plot_table, "histogram | chi-tilde | orbital-grid | moments")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (plot_cmd->parsed()) return plot(plot_in, plot_table);
    return run(run_cmd->parsed() ? std::string() : selected, args);
  } catch (const freeent::ConfigError& e) {
    std::cerr << "freeent: " << e.what() << '\n';
    return kExitConfig;
  } catch (const freeent::InvalidArgument& e) {
    std::cerr << "freeent: " << e.what() << '\n';
    return kExitConfig;
  } catch (const freeent::InfeasibleTarget& e) {
    std::cerr << "freeent: infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const freeent::EstimatorFailure& e) {
    std::cerr << "freeent: estimator failure: " << e.what() << '\n';
    return kExitEstimator;
  } catch (const std::exception& e) {
    std::cerr << "freeent: " << e.what() << '\n';
    return 1;
  }
}
