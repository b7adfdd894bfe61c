#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "macrogpo/anytime.hpp"
#include "macrogpo/baselines.hpp"
#include "macrogpo/environment.hpp"
#include "macrogpo/planner.hpp"

namespace macrogpo {

// ---------------------------------------------------------------- configuration

enum class PlannerKind { epsilon_macro_gpo, anytime, db_gp_ucb, nonmyopic_ucb_ml, greedy_ucb };

std::string to_string(PlannerKind kind);
PlannerKind parse_planner_kind(const std::string& name);

struct PlannerSpec {
  std::string label;
  PlannerKind kind = PlannerKind::epsilon_macro_gpo;
  PlannerConfig config;  // horizon is the lookahead before truncation
  AnytimeBudget budget;  // anytime only
  GreedyScore score = GreedyScore::ucb;
};

enum class DomainKind { grid, graph };

struct DomainConfig {
  DomainKind kind = DomainKind::grid;
  std::vector<GridAxis> axes;
  std::optional<std::vector<double>> start;  // unset: centre cell (grid) or first node (graph)
  bool random_start = false;
  std::filesystem::path field_file;  // empty: sample a field per replication
  std::filesystem::path graph_file;
  std::size_t prior_points = 0;              // extra noisy observations drawn before the first stage
  std::optional<double> measurement_noise;   // simulator noise; defaults to the kernel's
};

enum class ActionKind { cardinal, graph };

struct ActionsConfig {
  ActionKind kind = ActionKind::cardinal;
  std::size_t kappa = 1;
  std::size_t downsample = 0;  // 0 keeps every walk
  std::uint64_t downsample_seed = 0;
};

struct SuiteConfig {
  std::vector<std::string> planners;
  std::size_t replications = 1;
  std::uint64_t seed = 0;
  std::size_t budget = 0;   // observations per episode
  std::size_t workers = 1;  // 0: hardware concurrency
};

struct ExperimentConfig {
  KernelParams kernel;
  DomainConfig domain;
  ActionsConfig actions;
  std::vector<PlannerSpec> planners;  // in suite order
  SuiteConfig suite;
  std::string canonical;  // sorted section.key=value dump
  std::uint64_t hash = 0;

  const PlannerSpec& planner(const std::string& label) const;
  std::size_t stages() const { return suite.budget / actions.kappa; }
  void validate() const;
};

/// INI text with sections [kernel] [domain] [actions] [planner] [planner.<label>] [suite].
/// Keys in [planner] are defaults for every [planner.<label>] section. Relative
/// file paths resolve against `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& file);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);

// ---------------------------------------------------------------- environments

/// Everything that does not change between replications: domain, catalog, files.
struct World {
  KernelParams params;
  GridDomain grid;
  Graph graph;
  DomainKind kind = DomainKind::grid;
  MacroActionCatalog catalog;
  std::vector<Location> cells;  // where the field lives and starts are drawn
  std::optional<PhenomenonRealization> fixed_field;
  double measurement_noise = 0.0;
};

World build_world(const ExperimentConfig& config);

/// One replication: field, start and initial observations.
struct Environment {
  PhenomenonRealization field;
  Location start;
  ObservationSet prior;  // noise-free value at the start plus any prior points
};

Environment make_environment(const World& world, const ExperimentConfig& config, std::uint64_t seed);

/// Replication r of a suite runs under derive_seed(suite seed, {r}).
std::uint64_t replication_seed(std::uint64_t suite_seed, std::size_t replication);

// ---------------------------------------------------------------- episodes

struct StepDecision {
  std::size_t action_index = 0;
  MacroAction action;
  std::uint64_t nodes = 0;
};

/// One planning decision at `anchor` with lookahead `horizon`.
StepDecision plan_step(const PlannerSpec& spec, const ObservationSet& data, const Location& anchor,
                       const MacroActionCatalog& catalog, const KernelParams& params, int horizon,
                       std::uint64_t seed);

struct StageRecord {
  std::size_t action_index = 0;
  MacroAction action;
  std::vector<double> measurements;  // noisy z
  std::vector<double> latent;        // y at the same locations
  int horizon = 0;                   // lookahead after truncation
  std::uint64_t nodes = 0;
  double millis = 0.0;
};

struct EpisodeRecord {
  std::string planner;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  Location start;
  double start_value = 0.0;  // latent
  std::vector<StageRecord> stages;

  std::size_t observations() const;
};

/// Plans, executes and appends for budget / kappa stages, replanning every stage
/// with the lookahead cut to the stages left.
EpisodeRecord run_episode(const World& world, const Environment& env, const PlannerSpec& spec, std::size_t budget,
                          std::uint64_t seed, std::uint64_t config_hash = 0);

/// Entry s (s = 0..S) averages z - prior_mean over every measurement of stages 1..s; entry 0 is 0.
std::vector<double> metric_avg_normalized_output(const EpisodeRecord& record, double prior_mean);

/// Entry s is the field maximum minus the best latent value seen at the start or in stages 1..s.
std::vector<double> metric_simple_regret(const EpisodeRecord& record, const PhenomenonRealization& field);

// ---------------------------------------------------------------- suites

struct MetricsRow {
  std::string planner;
  std::uint64_t seed = 0;
  std::size_t stage = 0;
  long action_index = -1;  // -1 at stage 0
  double avg_norm_output = 0.0;
  double simple_regret = 0.0;
  std::uint64_t nodes = 0;
  double millis = 0.0;
};

struct SummaryRow {
  std::string planner;
  std::size_t stage = 0;
  std::size_t observations = 0;
  double mean_out = 0.0;
  double se_out = 0.0;
  double mean_regret = 0.0;
  double se_regret = 0.0;
};

/// Mean and standard error (sample standard deviation over sqrt(n)); n = 1 gives 0.
std::pair<double, double> mean_and_se(const std::vector<double>& values);

struct SuiteOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> iterations;  // anytime budgets
  std::optional<double> wallclock_ms;
  std::optional<std::size_t> workers;
  std::optional<std::size_t> replications;
};

struct SuiteResult {
  std::vector<EpisodeRecord> episodes;  // planner-major, then replication
  std::vector<MetricsRow> metrics;
  std::vector<SummaryRow> summary;
  std::uint64_t seed = 0;  // effective suite seed and replications after overrides
  std::size_t replications = 0;
};

/// Every planner runs on the same field, start and noise stream of each replication.
SuiteResult run_suite(const ExperimentConfig& config, const SuiteOptions& options = {});

/// Writes metrics.csv, summary.csv, plot_output.csv, plot_regret.csv and manifest.txt.
/// Timings are written only when `timing` is set, so reruns are byte-identical.
void write_suite(const SuiteResult& result, const ExperimentConfig& config, const std::filesystem::path& dir,
                 bool timing = false);

std::string metrics_csv(const std::vector<MetricsRow>& rows, bool timing);
std::string summary_csv(const std::vector<SummaryRow>& rows);

}  // namespace macrogpo
