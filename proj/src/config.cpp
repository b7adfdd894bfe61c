#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "macrogpo/errors.hpp"
#include "macrogpo/harness.hpp"

namespace macrogpo {

namespace pt = boost::property_tree;

namespace {

const std::set<std::string> kKernelKeys{"prior_mean", "signal_variance", "noise_variance", "length_scales"};
const std::set<std::string> kDomainKeys{"kind",  "min",   "max",          "cells",
                                        "start", "field", "graph",        "prior_points",
                                        "measurement_noise"};
const std::set<std::string> kActionKeys{"kind", "kappa", "downsample", "downsample_seed"};
const std::set<std::string> kPlannerKeys{"kind",         "H",         "N",          "beta",       "epsilon",
                                         "lambda",       "delta",     "theta_multiplier", "iterations",
                                         "wallclock_ms", "node_cap",  "prefix_cap", "tree_cap",   "score"};
const std::set<std::string> kSuiteKeys{"planners", "replications", "seed", "budget", "workers"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw InvalidInput("config " + key + ": " + what);
}

double to_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || errno == ERANGE) bad(key, "not a number: '" + v + "'");
  return x;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) bad(key, "not a nonnegative integer: '" + v + "'");
  errno = 0;
  const unsigned long long x = std::strtoull(v.c_str(), nullptr, 10);
  if (errno == ERANGE) bad(key, "out of range");
  return x;
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split(v)) out.push_back(to_double(key, item));
  if (out.empty()) bad(key, "empty list");
  return out;
}

class Section {
 public:
  Section(std::string name, const pt::ptree* tree, const std::set<std::string>& allowed) : name_(std::move(name)), tree_(tree) {
    if (!tree_) return;
    for (const auto& [key, child] : *tree_) {
      if (!child.empty()) bad(name_ + "." + key, "nested keys are not supported");
      if (!allowed.contains(key)) bad(name_ + "." + key, "unknown key");
    }
  }

  std::optional<std::string> get(const std::string& key) const {
    if (!tree_) return std::nullopt;
    auto it = tree_->find(key);
    if (it == tree_->not_found()) return std::nullopt;
    return trim(it->second.data());
  }
  std::string full(const std::string& key) const { return name_ + "." + key; }

  std::optional<double> real(const std::string& key) const {
    auto v = get(key);
    return v ? std::optional(to_double(full(key), *v)) : std::nullopt;
  }
  std::optional<std::uint64_t> count(const std::string& key) const {
    auto v = get(key);
    return v ? std::optional(to_u64(full(key), *v)) : std::nullopt;
  }
  std::optional<std::vector<double>> list(const std::string& key) const {
    auto v = get(key);
    return v ? std::optional(to_doubles(full(key), *v)) : std::nullopt;
  }

 private:
  std::string name_;
  const pt::ptree* tree_;
};

const pt::ptree* section(const pt::ptree& root, const std::string& name) {
  auto it = root.find(name);
  return it == root.not_found() ? nullptr : &it->second;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

// Overlay `over` on `base`; both are flat key/value sections.
pt::ptree merged(const pt::ptree* base, const pt::ptree* over) {
  pt::ptree out;
  if (base) out = *base;
  if (over)
    for (const auto& [key, child] : *over) out.put_child(pt::ptree::path_type(key, '\0'), child);
  return out;
}

PlannerSpec parse_planner(const std::string& label, const pt::ptree& tree) {
  Section s("planner." + label, &tree, kPlannerKeys);
  PlannerSpec spec;
  spec.label = label;
  auto kind = s.get("kind");
  if (!kind) bad(s.full("kind"), "missing");
  spec.kind = parse_planner_kind(*kind);
  PlannerConfig& c = spec.config;
  if (auto h = s.count("H")) c.horizon = static_cast<int>(*h);
  if (auto b = s.real("beta")) c.beta = *b;
  if (auto n = s.count("N")) c.samples = static_cast<std::size_t>(*n);
  if (auto e = s.real("epsilon")) c.epsilon = *e;
  if (auto l = s.real("lambda")) c.lambda = *l;
  if (auto d = s.real("delta")) c.delta = *d;
  if (auto m = s.real("theta_multiplier")) c.theta_multiplier = *m;
  if (auto p = s.count("prefix_cap")) c.prefix_cap = static_cast<std::size_t>(*p);
  if (auto t = s.real("tree_cap")) c.tree_cap = *t;
  if (auto it = s.count("iterations")) spec.budget.iterations = static_cast<std::size_t>(*it);
  if (auto w = s.real("wallclock_ms")) spec.budget.wallclock_ms = *w;
  if (auto n = s.count("node_cap")) spec.budget.node_cap = *n;
  if (auto sc = s.get("score")) {
    if (*sc == "ucb") spec.score = GreedyScore::ucb;
    else if (*sc == "ei") spec.score = GreedyScore::ei;
    else bad(s.full("score"), "expected ucb or ei");
  }
  if (spec.kind == PlannerKind::db_gp_ucb) c.horizon = 1;
  return spec;
}

}  // namespace

std::string to_string(PlannerKind kind) {
  switch (kind) {
    case PlannerKind::epsilon_macro_gpo: return "epsilon-macro-gpo";
    case PlannerKind::anytime: return "anytime";
    case PlannerKind::db_gp_ucb: return "db-gp-ucb";
    case PlannerKind::nonmyopic_ucb_ml: return "nonmyopic-ucb-ml";
    case PlannerKind::greedy_ucb: return "greedy-ucb";
  }
  return "unknown";
}

PlannerKind parse_planner_kind(const std::string& name) {
  for (auto k : {PlannerKind::epsilon_macro_gpo, PlannerKind::anytime, PlannerKind::db_gp_ucb,
                 PlannerKind::nonmyopic_ucb_ml, PlannerKind::greedy_ucb})
    if (to_string(k) == name) return k;
  throw InvalidInput("unknown planner kind '" + name + "'");
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

const PlannerSpec& ExperimentConfig::planner(const std::string& label) const {
  for (const auto& p : planners)
    if (p.label == label) return p;
  throw InvalidInput("no planner labelled '" + label + "'");
}

void ExperimentConfig::validate() const {
  kernel.validate();
  if (domain.kind == DomainKind::grid) {
    if (domain.axes.size() != kernel.dimension())
      throw InvalidInput("domain dimension does not match the kernel length-scales");
    if (actions.kind != ActionKind::cardinal) throw InvalidInput("grid domains use cardinal actions");
  } else {
    if (domain.graph_file.empty()) throw InvalidInput("graph domain needs domain.graph");
    if (actions.kind != ActionKind::graph) throw InvalidInput("graph domains use graph actions");
  }
  if (domain.measurement_noise && *domain.measurement_noise < 0.0)
    throw InvalidInput("domain.measurement_noise must be nonnegative");
  if (actions.kappa == 0) throw InvalidInput("actions.kappa must be positive");
  if (suite.budget == 0) throw InvalidInput("suite.budget must be positive");
  if (suite.budget % actions.kappa != 0) throw InvalidInput("suite.budget must be a multiple of actions.kappa");
  if (suite.replications == 0) throw InvalidInput("suite.replications must be positive");
  if (planners.empty()) throw InvalidInput("no planners configured");
  for (const auto& p : planners) {
    p.config.validate();
    if (static_cast<std::size_t>(p.config.horizon) * actions.kappa > suite.budget)
      throw InvalidInput("planner " + p.label + ": H * kappa exceeds the budget");
  }
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  pt::ptree root;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError("config", e.line(), e.message());
  }

  ExperimentConfig cfg;
  std::vector<std::string> planner_sections;
  std::vector<std::string> lines;
  for (const auto& [name, sec] : root) {
    if (sec.empty()) bad(name, "keys must sit inside a section");
    const bool known = name == "kernel" || name == "domain" || name == "actions" || name == "planner" ||
                       name == "suite" || name.rfind("planner.", 0) == 0;
    if (!known) bad(name, "unknown section");
    if (name.rfind("planner.", 0) == 0) planner_sections.push_back(name.substr(8));
    for (const auto& [key, v] : sec) lines.push_back(name + "." + key + "=" + trim(v.data()));
  }
  std::sort(lines.begin(), lines.end());
  for (const auto& l : lines) cfg.canonical += l + "\n";
  cfg.hash = fnv1a(cfg.canonical);

  Section kernel("kernel", section(root, "kernel"), kKernelKeys);
  if (auto v = kernel.real("prior_mean")) cfg.kernel.prior_mean = *v;
  if (auto v = kernel.real("signal_variance")) cfg.kernel.signal_variance = *v;
  if (auto v = kernel.real("noise_variance")) cfg.kernel.noise_variance = *v;
  if (auto v = kernel.list("length_scales")) cfg.kernel.length_scales = *v;

  Section domain("domain", section(root, "domain"), kDomainKeys);
  const std::string dkind = domain.get("kind").value_or("grid");
  if (dkind == "grid") cfg.domain.kind = DomainKind::grid;
  else if (dkind == "graph") cfg.domain.kind = DomainKind::graph;
  else bad("domain.kind", "expected grid or graph");
  if (cfg.domain.kind == DomainKind::grid) {
    auto lo = domain.list("min"), hi = domain.list("max"), cells = domain.list("cells");
    if (!lo || !hi || !cells) bad("domain", "grid needs min, max and cells");
    if (lo->size() != hi->size() || lo->size() != cells->size()) bad("domain", "min, max and cells differ in length");
    for (std::size_t d = 0; d < lo->size(); ++d) {
      const double c = (*cells)[d];
      if (!(c >= 1.0) || c != static_cast<int>(c)) bad("domain.cells", "expected positive integers");
      if (!((*hi)[d] > (*lo)[d])) bad("domain", "max must exceed min");
      cfg.domain.axes.push_back(GridAxis{(*lo)[d], (*hi)[d], static_cast<int>(c)});
    }
  }
  if (auto s = domain.get("start")) {
    if (*s == "random") cfg.domain.random_start = true;
    else if (*s != "centre" && *s != "default") cfg.domain.start = to_doubles("domain.start", *s);
  }
  if (auto f = domain.get("field")) cfg.domain.field_file = resolve(base_dir, *f);
  if (auto g = domain.get("graph")) cfg.domain.graph_file = resolve(base_dir, *g);
  if (auto n = domain.count("prior_points")) cfg.domain.prior_points = static_cast<std::size_t>(*n);
  if (auto m = domain.real("measurement_noise")) cfg.domain.measurement_noise = *m;

  Section actions("actions", section(root, "actions"), kActionKeys);
  const std::string akind = actions.get("kind").value_or(dkind == "graph" ? "graph" : "cardinal");
  if (akind == "cardinal") cfg.actions.kind = ActionKind::cardinal;
  else if (akind == "graph") cfg.actions.kind = ActionKind::graph;
  else bad("actions.kind", "expected cardinal or graph");
  if (auto k = actions.count("kappa")) cfg.actions.kappa = static_cast<std::size_t>(*k);
  if (auto d = actions.count("downsample")) cfg.actions.downsample = static_cast<std::size_t>(*d);
  if (auto s = actions.count("downsample_seed")) cfg.actions.downsample_seed = *s;

  const pt::ptree* defaults = section(root, "planner");
  if (defaults) Section("planner", defaults, kPlannerKeys);
  Section suite("suite", section(root, "suite"), kSuiteKeys);
  std::vector<std::string> order;
  if (auto p = suite.get("planners")) order = split(*p);
  else order = planner_sections;
  if (order.empty() && defaults) {
    pt::ptree only = merged(defaults, nullptr);
    const std::string label = only.get<std::string>("kind", "planner");
    cfg.planners.push_back(parse_planner(label, only));
  }
  for (const auto& label : order) {
    const pt::ptree* own = section(root, "planner." + label);
    if (!own) bad("suite.planners", "no [planner." + label + "] section");
    cfg.planners.push_back(parse_planner(label, merged(defaults, own)));
  }
  std::set<std::string> seen;
  for (const auto& p : cfg.planners)
    if (!seen.insert(p.label).second) bad("suite.planners", "duplicate label " + p.label);

  if (auto r = suite.count("replications")) cfg.suite.replications = static_cast<std::size_t>(*r);
  if (auto s = suite.count("seed")) cfg.suite.seed = *s;
  if (auto b = suite.count("budget")) cfg.suite.budget = static_cast<std::size_t>(*b);
  if (auto w = suite.count("workers")) cfg.suite.workers = static_cast<std::size_t>(*w);
  for (const auto& p : cfg.planners) cfg.suite.planners.push_back(p.label);

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw InvalidInput("cannot open config " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), file.parent_path());
}

}  // namespace macrogpo
