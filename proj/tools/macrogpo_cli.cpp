// Command-line front end: simulate, plan, run, bench, tables.
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "macrogpo/errors.hpp"
#include "macrogpo/harness.hpp"

using namespace macrogpo;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> iterations;
  std::optional<double> wallclock_ms;
  bool timing = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "experiment config (INI)")->required()->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "replication seed (default: suite seed)");
  app->add_option("--out", c.out, "output file or directory");
  app->add_option("--iterations", c.iterations, "anytime iteration budget");
  app->add_option("--wallclock-ms", c.wallclock_ms, "anytime wallclock budget");
  app->add_flag("--timing", c.timing, "write planning times (breaks byte-identical output)");
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string path_str(const MacroAction& a) {
  std::string s;
  for (const auto& loc : a.path) {
    s += s.empty() ? "(" : " (";
    for (std::size_t d = 0; d < loc.dimension(); ++d) s += (d ? "," : "") + fmt(loc[d]);
    s += ")";
  }
  return s;
}

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = load_config(c.config);
  for (auto& p : cfg.planners) {
    if (p.kind != PlannerKind::anytime) continue;
    if (c.iterations) p.budget.iterations = *c.iterations;
    if (c.wallclock_ms) p.budget.wallclock_ms = *c.wallclock_ms;
  }
  return cfg;
}

const PlannerSpec& pick(const ExperimentConfig& cfg, const std::string& label) {
  return label.empty() ? cfg.planners.front() : cfg.planner(label);
}

std::uint64_t seed_of(const Common& c, const ExperimentConfig& cfg) {
  return c.seed ? *c.seed : replication_seed(cfg.suite.seed, 0);
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::cout << text;
    return;
  }
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  std::ofstream f(out, std::ios::binary);
  if (!f) throw InvalidInput("cannot write " + out);
  f << text;
}

int cmd_simulate(const Common& c) {
  const auto cfg = load(c);
  const World world = build_world(cfg);
  const Environment env = make_environment(world, cfg, seed_of(c, cfg));
  fs::path out = c.out.empty() ? fs::path("field.csv") : fs::path(c.out);
  if (fs::is_directory(out)) out /= "field.csv";
  save_field(env.field, out);
  std::cout << "wrote " << env.field.cells().size() << " cells to " << out.string() << " (max " << fmt(env.field.global_max())
            << ")\n";
  return 0;
}

int cmd_plan(const Common& c, const std::string& data_file, const std::vector<double>& at, const std::string& label) {
  const auto cfg = load(c);
  const World world = build_world(cfg);
  const PlannerSpec& spec = pick(cfg, label);
  ObservationSet data = load_observations(data_file);
  Location anchor;
  if (!at.empty()) anchor = Location(at);
  else if (!data.empty()) anchor = data.locations.back();
  else throw InvalidInput("plan needs --at or a nonempty data file");
  const std::uint64_t seed = c.seed.value_or(cfg.suite.seed);
  const auto d = plan_step(spec, data, anchor, world.catalog, world.params, spec.config.horizon, seed);
  std::string text = "planner=" + spec.label + "\naction_index=" + std::to_string(d.action_index) +
                     "\npath=" + path_str(d.action) + "\nnodes=" + std::to_string(d.nodes) + "\n";
  emit(text, c.out);
  return 0;
}

int cmd_run(const Common& c, const std::string& label) {
  const auto cfg = load(c);
  const World world = build_world(cfg);
  const std::uint64_t seed = seed_of(c, cfg);
  const Environment env = make_environment(world, cfg, seed);
  std::vector<MetricsRow> rows;
  for (const auto& spec : cfg.planners) {
    if (!label.empty() && spec.label != label) continue;
    const auto rec = run_episode(world, env, spec, cfg.suite.budget, seed, cfg.hash);
    const auto out = metric_avg_normalized_output(rec, cfg.kernel.prior_mean);
    const auto regret = metric_simple_regret(rec, env.field);
    for (std::size_t s = 0; s < out.size(); ++s) {
      MetricsRow r;
      r.planner = rec.planner;
      r.seed = seed;
      r.stage = s;
      r.avg_norm_output = out[s];
      r.simple_regret = regret[s];
      if (s > 0) {
        r.action_index = static_cast<long>(rec.stages[s - 1].action_index);
        r.nodes = rec.stages[s - 1].nodes;
        r.millis = rec.stages[s - 1].millis;
      }
      rows.push_back(r);
    }
  }
  if (rows.empty()) throw InvalidInput("no planner labelled '" + label + "'");
  emit(metrics_csv(rows, c.timing), c.out);
  return 0;
}

int cmd_bench(const Common& c, std::optional<std::size_t> workers, std::optional<std::size_t> reps) {
  const auto cfg = load(c);
  SuiteOptions opt;
  opt.seed = c.seed;
  opt.workers = workers;
  opt.replications = reps;
  const auto res = run_suite(cfg, opt);
  const fs::path out = c.out.empty() ? fs::path("results") : fs::path(c.out);
  write_suite(res, cfg, out, c.timing);
  std::cout << "planner,final_mean_out,final_se_out,final_mean_regret,final_se_regret\n";
  for (const auto& s : res.summary)
    if (s.stage == cfg.stages())
      std::cout << s.planner << ',' << fmt(s.mean_out) << ',' << fmt(s.se_out) << ',' << fmt(s.mean_regret) << ','
                << fmt(s.se_regret) << '\n';
  std::cout << "wrote " << out.string() << '\n';
  return 0;
}

int cmd_tables(const Common& c, const std::string& label) {
  const auto cfg = load(c);
  const World world = build_world(cfg);
  const PlannerSpec& spec = pick(cfg, label);
  const Environment env = make_environment(world, cfg, seed_of(c, cfg));
  PlannerConfig pc = spec.config;
  pc.seed = seed_of(c, cfg);
  const PlanningTables t = preprocess(env.prior, env.start, world.catalog, world.params, pc);

  std::vector<double> lip(static_cast<std::size_t>(t.tree.horizon()) + 1, 0.0);
  for (const auto& [path, l] : t.lipschitz.lipschitz) lip[path.size()] = std::max(lip[path.size()], l);
  std::string s = "planner=" + spec.label + "\nH=" + std::to_string(t.tree.horizon()) +
                  "\nkappa=" + std::to_string(t.tree.kappa()) + "\nA=" + std::to_string(t.tree.max_branching()) +
                  "\nprefixes=" + std::to_string(t.tree.prefix_count()) + "\nstage,max_lipschitz,theta\n";
  for (int k = 0; k <= t.tree.horizon(); ++k)
    s += std::to_string(k) + "," + fmt(lip[static_cast<std::size_t>(k)]) + "," + fmt(t.theta.at(k)) + "\n";
  s += "K=" + fmt(t.sampling.K) + "\nN=" + std::to_string(t.sampling.samples) + "\nlambda=" + fmt(t.sampling.lambda) +
       "\ndelta=" + fmt(t.sampling.delta) + "\n";
  emit(s, c.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonmyopic macro-action GP planning"};
  app.require_subcommand(1);

  Common sim, plan, run, bench, tables;
  auto* s = app.add_subcommand("simulate", "sample a field and write it as CSV");
  add_common(s, sim);

  auto* p = app.add_subcommand("plan", "one decision from a data file");
  add_common(p, plan);
  std::string data_file, plan_label;
  std::vector<double> at;
  p->add_option("--data", data_file, "observations CSV (x,y,value)")->required()->check(CLI::ExistingFile);
  p->add_option("--at", at, "anchor location (default: last observation)")->delimiter(',');
  p->add_option("--planner", plan_label, "planner label (default: first)");

  auto* r = app.add_subcommand("run", "one episode per planner at one seed");
  add_common(r, run);
  std::string run_label;
  r->add_option("--planner", run_label, "only this planner");

  auto* b = app.add_subcommand("bench", "the full suite with summaries and plot data");
  add_common(b, bench);
  std::optional<std::size_t> workers, reps;
  b->add_option("--workers", workers, "episode threads (0: all cores)");
  b->add_option("--replications", reps, "override suite.replications");

  auto* t = app.add_subcommand("tables", "Lipschitz, theta and sample-size diagnostics at the start");
  add_common(t, tables);
  std::string table_label;
  t->add_option("--planner", table_label, "planner label (default: first)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*s) return cmd_simulate(sim);
    if (*p) return cmd_plan(plan, data_file, at, plan_label);
    if (*r) return cmd_run(run, run_label);
    if (*b) return cmd_bench(bench, workers, reps);
    if (*t) return cmd_tables(tables, table_label);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
