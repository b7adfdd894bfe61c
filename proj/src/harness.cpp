#include "macrogpo/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>
#include <thread>

#include "macrogpo/errors.hpp"

namespace macrogpo {

namespace {

template <class E>
[[noreturn]] void rethrow_with(const std::string& context, const E& e) {
  throw E(context + ": " + e.what());
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string hex64(std::uint64_t x) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, x);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << text;
}

}  // namespace

// ---------------------------------------------------------------- environments

World build_world(const ExperimentConfig& config) {
  config.validate();
  World w;
  w.params = config.kernel;
  w.kind = config.domain.kind;
  w.measurement_noise = config.domain.measurement_noise.value_or(config.kernel.noise_variance);
  if (w.kind == DomainKind::grid) {
    w.grid = GridDomain(config.domain.axes);
    w.catalog = cardinal_catalog(w.grid, config.actions.kappa);
    w.cells = w.grid.accessible_cells();
  } else {
    w.graph = load_graph(config.domain.graph_file);
    if (w.graph.size() == 0) throw InvalidInput("graph has no nodes");
    if (w.graph.nodes().front().dimension() != config.kernel.dimension())
      throw InvalidInput("graph dimension does not match the kernel length-scales");
    std::optional<Downsample> ds;
    if (config.actions.downsample > 0) ds = Downsample{config.actions.downsample, config.actions.downsample_seed};
    w.catalog = graph_catalog(w.graph, config.actions.kappa, ds);
    w.cells = w.graph.nodes();
  }
  if (!config.domain.field_file.empty()) {
    w.fixed_field = load_field(config.domain.field_file);
    for (const auto& c : w.cells)
      if (!w.fixed_field->value_at(c)) throw InvalidInput("field file does not cover every domain cell");
  }
  return w;
}

std::uint64_t replication_seed(std::uint64_t suite_seed, std::size_t replication) {
  return derive_seed(suite_seed, {replication});
}

Environment make_environment(const World& world, const ExperimentConfig& config, std::uint64_t seed) {
  Environment env;
  if (world.fixed_field) env.field = *world.fixed_field;
  else if (world.kind == DomainKind::grid) env.field = sample_phenomenon(world.grid, world.params, derive_seed(seed, {1}));
  else env.field = sample_phenomenon(world.cells, world.params, derive_seed(seed, {1}));

  if (config.domain.random_start) {
    Rng rng = make_rng(derive_seed(seed, {4}));
    std::uniform_int_distribution<std::size_t> pick(0, world.cells.size() - 1);
    env.start = world.cells[pick(rng)];
  } else if (config.domain.start) {
    env.start = Location(*config.domain.start);
    if (!world.catalog.contains(env.start)) throw InvalidInput("domain.start is not a cell of the domain");
  } else {
    env.start = world.kind == DomainKind::grid ? world.grid.centre_cell() : world.cells.front();
  }

  env.prior.append(env.start, env.field.at(env.start));
  if (config.domain.prior_points > 0) {
    std::vector<Location> pool;
    for (const auto& c : world.cells)
      if (c != env.start) pool.push_back(c);
    if (config.domain.prior_points > pool.size()) throw InvalidInput("domain.prior_points exceeds the domain");
    Rng rng = make_rng(derive_seed(seed, {5}));
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::normal_distribution<double> noise(0.0, 1.0);
    const double sd = std::sqrt(world.measurement_noise);
    for (std::size_t i = 0; i < config.domain.prior_points; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
      const Location& loc = pool[idx[i]];
      env.prior.append(loc, env.field.at(loc) + sd * noise(rng));
    }
  }
  return env;
}

// ---------------------------------------------------------------- episodes

StepDecision plan_step(const PlannerSpec& spec, const ObservationSet& data, const Location& anchor,
                       const MacroActionCatalog& catalog, const KernelParams& params, int horizon,
                       std::uint64_t seed) {
  PlannerConfig c = spec.config;
  c.horizon = horizon;
  c.seed = seed;
  StepDecision out;
  switch (spec.kind) {
    case PlannerKind::epsilon_macro_gpo: {
      auto d = epsilon_policy(data, anchor, catalog, params, c);
      out = {d.action_index, std::move(d.action), d.nodes};
      break;
    }
    case PlannerKind::anytime: {
      const PlanningTables tables = preprocess(data, anchor, catalog, params, c);
      auto r = anytime_policy(tables, c, spec.budget);
      out = {r.action_index, std::move(r.action), r.nodes};
      break;
    }
    case PlannerKind::db_gp_ucb: {
      c.horizon = 1;
      auto d = db_gp_ucb(data, anchor, catalog, params, c);
      out = {d.action_index, std::move(d.action), d.nodes};
      break;
    }
    case PlannerKind::nonmyopic_ucb_ml: {
      auto d = nonmyopic_ucb_ml(data, anchor, catalog, params, c);
      out = {d.action_index, std::move(d.action), d.nodes};
      break;
    }
    case PlannerKind::greedy_ucb: {
      auto d = greedy_hallucinated_ucb(data, anchor, catalog, params, c, spec.score);
      out = {d.action_index, std::move(d.action), d.nodes};
      break;
    }
  }
  return out;
}

std::size_t EpisodeRecord::observations() const {
  std::size_t n = 0;
  for (const auto& s : stages) n += s.measurements.size();
  return n;
}

EpisodeRecord run_episode(const World& world, const Environment& env, const PlannerSpec& spec, std::size_t budget,
                          std::uint64_t seed, std::uint64_t config_hash) {
  const std::size_t kappa = world.catalog.kappa();
  if (kappa == 0 || budget % kappa != 0) throw InvalidInput("budget must be a positive multiple of kappa");
  const std::size_t stages = budget / kappa;

  EpisodeRecord rec;
  rec.planner = spec.label;
  rec.seed = seed;
  rec.config_hash = config_hash;
  rec.start = env.start;
  rec.start_value = env.field.at(env.start);

  ObservationSet data = env.prior;
  Location anchor = env.start;
  Rng noise = make_rng(derive_seed(seed, {2}));
  for (std::size_t s = 0; s < stages; ++s) {
    const int h = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(spec.config.horizon), stages - s));
    const std::string ctx = spec.label + " seed " + std::to_string(seed) + " stage " + std::to_string(s + 1);
    const auto t0 = std::chrono::steady_clock::now();
    StepDecision d;
    try {
      d = plan_step(spec, data, anchor, world.catalog, world.params, h, derive_seed(seed, {3, s}));
    } catch (const InvalidInput& e) {
      rethrow_with(ctx, e);
    } catch (const NumericalError& e) {
      rethrow_with(ctx, e);
    } catch (const CapabilityError& e) {
      rethrow_with(ctx, e);
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    const Eigen::VectorXd z = execute(env.field, d.action, world.measurement_noise, noise);
    StageRecord st;
    st.action_index = d.action_index;
    st.horizon = h;
    st.nodes = d.nodes;
    st.millis = ms;
    st.measurements.assign(z.data(), z.data() + z.size());
    for (const auto& loc : d.action.path) st.latent.push_back(env.field.at(loc));
    data.append(d.action.path, st.measurements);
    anchor = d.action.end();
    st.action = std::move(d.action);
    rec.stages.push_back(std::move(st));
  }
  return rec;
}

std::vector<double> metric_avg_normalized_output(const EpisodeRecord& record, double prior_mean) {
  std::vector<double> out{0.0};
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : record.stages) {
    for (double z : s.measurements) sum += z - prior_mean;
    n += s.measurements.size();
    out.push_back(n ? sum / static_cast<double>(n) : 0.0);
  }
  return out;
}

std::vector<double> metric_simple_regret(const EpisodeRecord& record, const PhenomenonRealization& field) {
  double best = record.start_value;
  std::vector<double> out{field.global_max() - best};
  for (const auto& s : record.stages) {
    for (double y : s.latent) best = std::max(best, y);
    out.push_back(field.global_max() - best);
  }
  return out;
}

// ---------------------------------------------------------------- suites

std::pair<double, double> mean_and_se(const std::vector<double>& values) {
  const std::size_t n = values.size();
  if (n == 0) return {0.0, 0.0};
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  if (n == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n))};
}

SuiteResult run_suite(const ExperimentConfig& config_in, const SuiteOptions& options) {
  ExperimentConfig config = config_in;
  if (options.seed) config.suite.seed = *options.seed;
  if (options.replications) config.suite.replications = *options.replications;
  if (options.workers) config.suite.workers = *options.workers;
  for (auto& p : config.planners) {
    if (p.kind != PlannerKind::anytime) continue;
    if (options.iterations) p.budget.iterations = *options.iterations;
    if (options.wallclock_ms) p.budget.wallclock_ms = *options.wallclock_ms;
  }
  const World world = build_world(config);
  const std::size_t reps = config.suite.replications;
  const std::size_t np = config.planners.size();

  std::vector<std::vector<EpisodeRecord>> slots(np, std::vector<EpisodeRecord>(reps));
  std::vector<std::vector<std::vector<double>>> outputs(np, std::vector<std::vector<double>>(reps));
  std::vector<std::vector<std::vector<double>>> regrets(np, std::vector<std::vector<double>>(reps));
  std::vector<std::exception_ptr> errors(reps);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t r; (r = next.fetch_add(1)) < reps;) {
      try {
        const std::uint64_t seed = replication_seed(config.suite.seed, r);
        const Environment env = make_environment(world, config, seed);
        for (std::size_t p = 0; p < np; ++p) {
          slots[p][r] = run_episode(world, env, config.planners[p], config.suite.budget, seed, config.hash);
          outputs[p][r] = metric_avg_normalized_output(slots[p][r], config.kernel.prior_mean);
          regrets[p][r] = metric_simple_regret(slots[p][r], env.field);
        }
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  };
  std::size_t workers = config.suite.workers ? config.suite.workers : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, reps);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  SuiteResult result;
  result.seed = config.suite.seed;
  result.replications = reps;
  const std::size_t stages = config.stages();
  for (std::size_t p = 0; p < np; ++p) {
    for (std::size_t r = 0; r < reps; ++r) {
      const EpisodeRecord& rec = slots[p][r];
      for (std::size_t s = 0; s <= stages; ++s) {
        MetricsRow row;
        row.planner = rec.planner;
        row.seed = rec.seed;
        row.stage = s;
        row.avg_norm_output = outputs[p][r][s];
        row.simple_regret = regrets[p][r][s];
        if (s > 0) {
          row.action_index = static_cast<long>(rec.stages[s - 1].action_index);
          row.nodes = rec.stages[s - 1].nodes;
          row.millis = rec.stages[s - 1].millis;
        }
        result.metrics.push_back(row);
      }
      result.episodes.push_back(std::move(slots[p][r]));
    }
    for (std::size_t s = 0; s <= stages; ++s) {
      std::vector<double> o, g;
      for (std::size_t r = 0; r < reps; ++r) {
        o.push_back(outputs[p][r][s]);
        g.push_back(regrets[p][r][s]);
      }
      SummaryRow row;
      row.planner = config.planners[p].label;
      row.stage = s;
      row.observations = s * config.actions.kappa;
      std::tie(row.mean_out, row.se_out) = mean_and_se(o);
      std::tie(row.mean_regret, row.se_regret) = mean_and_se(g);
      result.summary.push_back(row);
    }
  }
  return result;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows, bool timing) {
  std::string out = "planner,seed,stage,action_index,avg_norm_output,simple_regret,nodes,millis\n";
  for (const auto& r : rows) {
    out += r.planner + "," + std::to_string(r.seed) + "," + std::to_string(r.stage) + "," +
           std::to_string(r.action_index) + "," + num(r.avg_norm_output) + "," + num(r.simple_regret) + "," +
           std::to_string(r.nodes) + "," + num(timing ? r.millis : 0.0) + "\n";
  }
  return out;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = "planner,stage,mean_out,se_out,mean_regret,se_regret\n";
  for (const auto& r : rows)
    out += r.planner + "," + std::to_string(r.stage) + "," + num(r.mean_out) + "," + num(r.se_out) + "," +
           num(r.mean_regret) + "," + num(r.se_regret) + "\n";
  return out;
}

void write_suite(const SuiteResult& result, const ExperimentConfig& config, const std::filesystem::path& dir,
                 bool timing) {
  std::filesystem::create_directories(dir);
  write_file(dir / "metrics.csv", metrics_csv(result.metrics, timing));
  write_file(dir / "summary.csv", summary_csv(result.summary));

  // Curves against the number of observations, one file per metric.
  std::string po = "planner,observations,mean,se\n", pr = po;
  for (const auto& r : result.summary) {
    const std::string head = r.planner + "," + std::to_string(r.observations) + ",";
    po += head + num(r.mean_out) + "," + num(r.se_out) + "\n";
    pr += head + num(r.mean_regret) + "," + num(r.se_regret) + "\n";
  }
  write_file(dir / "plot_output.csv", po);
  write_file(dir / "plot_regret.csv", pr);

  std::string m = "config_hash=" + hex64(config.hash) + "\n";
  std::string labels;
  for (const auto& p : config.planners) labels += (labels.empty() ? "" : ",") + p.label;
  m += "planners=" + labels + "\n";
  m += "seed=" + std::to_string(result.seed) + "\n";
  m += "replications=" + std::to_string(result.replications) + "\n";
  m += "episodes=" + std::to_string(result.episodes.size()) + "\n";
  m += "stages=" + std::to_string(config.stages()) + "\n";
  m += "timing=" + std::string(timing ? "on" : "off") + "\n";
  m += "[config]\n" + config.canonical;
  write_file(dir / "manifest.txt", m);
}

}  // namespace macrogpo
