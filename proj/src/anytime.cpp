#include "macrogpo/anytime.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "macrogpo/errors.hpp"

namespace macrogpo {

namespace {

constexpr double kSlack = 1e-9;

bool widened(double old_lo, double old_hi, double lo, double hi) {
  const double tol = kSlack * (1.0 + std::abs(old_lo) + std::abs(old_hi));
  return lo < old_lo - tol || hi > old_hi + tol;
}

}  // namespace

void refine_bounds(ActionRecord& rec, std::size_t j, double lipschitz) {
  const std::size_t n = rec.lower.size();
  if (j >= n) throw InvalidInput("refine anchor out of range");
  for (std::size_t i = 0; i < n; ++i) {
    if (i == j) continue;
    const double b = lipschitz * (rec.deviations.col(i) - rec.deviations.col(j)).norm();
    rec.lower[i] = std::max(rec.lower[i], rec.lower[j] - b);
    rec.upper[i] = std::min(rec.upper[i], rec.upper[j] + b);
  }
}

std::size_t widest_sample(const ActionRecord& rec) {
  std::size_t pick = 0;
  double gap = -1.0;
  for (std::size_t l = 0; l < rec.lower.size(); ++l)
    if (rec.upper[l] - rec.lower[l] > gap) gap = rec.upper[l] - rec.lower[l], pick = l;
  return pick;
}

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::iterations: return "iterations";
    case StopReason::wallclock: return "wallclock";
    case StopReason::node_cap: return "node_cap";
    case StopReason::converged: return "converged";
    case StopReason::single_action: return "single_action";
    case StopReason::no_budget: return "no_budget";
  }
  return "unknown";
}

AnytimeSearch::AnytimeSearch(const PlanningTables& tables, const PlannerConfig& config, InnovationSource source)
    : tables_(tables), config_(config), source_(source), ml_(tables, config, source) {
  config_.validate();
  const auto& tree = tables.tree;
  if (tree.root().branches.empty()) throw InvalidInput("no macro-actions available at the anchor");
  kappa_ = tree.kappa();
  theta_ = tables.theta.at(0);
  const int h = tree.horizon();
  if (config.epsilon) {
    const double eps = *config.epsilon;
    lambda_ = theta_ > 0.0 ? 1.0 / (4.0 * h / eps + 1.0 / (2.0 * theta_)) : 0.0;
    const double delta = theta_ > 0.0 ? std::min(eps / (8.0 * theta_ * h), 0.5) : 0.5;
    samples_ = lambda_ > 0.0 ? sample_size(lambda_, delta, tables.sampling.K, h, tree.max_branching()) : 1;
  } else if (config.samples || config.lambda) {
    lambda_ = tables.sampling.lambda;
    samples_ = tables.sampling.samples;
  } else {
    throw InvalidInput("anytime planning needs one of samples, epsilon, lambda");
  }

  root_ = std::make_unique<SearchNode>();
  root_->prefix = &tree.root();
  root_->residual = tree.root_residual();
  root_->key = root_node_key(config.seed);
  for (std::size_t i = 0; i < tree.root().branches.size(); ++i)
    q_ml_.push_back(ml_.q_ml(tree.root(), i, root_->residual));
}

std::uint64_t AnytimeSearch::per_iteration_cap() const {
  const double a = static_cast<double>(tables_.tree.max_branching());
  double total = 0.0, level = 1.0;
  for (int k = 0; k < tables_.tree.horizon(); ++k) {
    level *= a;
    total += level;
  }
  return static_cast<std::uint64_t>(total * static_cast<double>(samples_));
}

SearchNode& AnytimeSearch::child(SearchNode& node, std::size_t branch, std::size_t sample) {
  auto& slot = node.actions[branch].children[sample];
  if (!slot) {
    const PrefixBranch& b = node.prefix->branches[branch];
    slot = std::make_unique<SearchNode>();
    slot->prefix = b.child.get();
    slot->stage = node.stage + 1;
    slot->key = child_node_key(node.key, branch, sample);
    slot->residual.resize(node.residual.size() + static_cast<Eigen::Index>(kappa_));
    slot->residual << node.residual, node.actions[branch].innovations.col(static_cast<Eigen::Index>(sample));
  }
  return *slot;
}

void AnytimeSearch::assign(ActionRecord& rec, std::size_t sample, std::pair<double, double> bounds) {
  // Intersect with what is already known instead of overwriting, so intervals only tighten.
  const auto [hi, lo] = bounds;
  double& l = rec.lower[sample];
  double& u = rec.upper[sample];
  const double nl = std::max(l, lo), nu = std::min(u, hi);
  if (nl > nu) {
    ++conflicts_;
    return;
  }
  if (nl != l || nu != u) changed_ = true;
  l = nl;
  u = nu;
}

void AnytimeSearch::backup(ActionRecord& rec) {
  double lo = rec.reward - lambda_, hi = rec.reward + lambda_;
  if (!rec.lower.empty()) {
    double sl = 0.0, su = 0.0;
    for (double v : rec.lower) sl += v;
    for (double v : rec.upper) su += v;
    lo += sl / static_cast<double>(rec.lower.size());
    hi += su / static_cast<double>(rec.upper.size());
  }
  if (rec.backed_up) {
    if (widened(rec.q_lower, rec.q_upper, lo, hi)) throw NumericalError("anytime bound widened on backup");
    lo = std::max(lo, rec.q_lower);
    hi = std::min(hi, rec.q_upper);
    if (lo != rec.q_lower || hi != rec.q_upper) changed_ = true;
  }
  rec.q_lower = lo;
  rec.q_upper = hi;
  rec.backed_up = true;
}

void AnytimeSearch::backup(SearchNode& node) {
  double lo = -std::numeric_limits<double>::infinity(), hi = lo;
  for (const auto& rec : node.actions) {
    lo = std::max(lo, rec.q_lower);
    hi = std::max(hi, rec.q_upper);
  }
  if (node.actions.empty()) lo = hi = 0.0;
  if (lo > hi + kSlack * (1.0 + std::abs(hi))) throw NumericalError("anytime lower bound above upper bound");
  node.lower = lo;
  node.upper = hi;
}

std::pair<double, double> AnytimeSearch::expand(SearchNode& node) {
  node.explored = true;
  changed_ = true;
  if (!node.prefix || node.prefix->branches.empty()) {
    node.lower = node.upper = 0.0;
    return {0.0, 0.0};
  }
  const PrefixNode& pn = *node.prefix;
  const double next_theta = tables_.theta.at(node.stage + 1);
  node.actions.resize(pn.branches.size());
  for (std::size_t i = 0; i < pn.branches.size(); ++i) {
    const PrefixBranch& b = pn.branches[i];
    ActionRecord& rec = node.actions[i];
    rec.reward = ml_.branch_reward(b, node.residual);
    nodes_ += samples_;
    if (b.child) {
      rec.innovations = node_innovations(node.key, i, samples_, kappa_, source_);
      rec.deviations = b.chol * rec.innovations;
      rec.lower.resize(samples_);
      rec.upper.resize(samples_);
      rec.children.resize(samples_);
      Eigen::VectorXd next(node.residual.size() + static_cast<Eigen::Index>(kappa_));
      next.head(node.residual.size()) = node.residual;
      std::size_t likely = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < samples_; ++l) {
        next.tail(static_cast<Eigen::Index>(kappa_)) = rec.innovations.col(static_cast<Eigen::Index>(l));
        const double v = ml_.value_ml(*b.child, next);
        rec.lower[l] = v - next_theta;
        rec.upper[l] = v + next_theta;
        const double dist = rec.deviations.col(static_cast<Eigen::Index>(l)).norm();
        if (dist < best) best = dist, likely = l;
      }
      assign(rec, likely, expand(child(node, i, likely)));
      refine_bounds(rec, likely, b.child->lipschitz);
    }
    backup(rec);
  }
  backup(node);
  return {node.upper, node.lower};
}

std::size_t AnytimeSearch::best_action(const SearchNode& node) const {
  std::vector<double> q;
  std::vector<const MacroAction*> acts;
  for (std::size_t i = 0; i < node.actions.size(); ++i) {
    q.push_back(node.actions[i].q_lower);
    acts.push_back(&node.prefix->branches[i].action);
  }
  return select_best(q, acts);
}

std::pair<double, double> AnytimeSearch::construct(SearchNode& node) {
  if (!node.explored) return expand(node);
  if (node.actions.empty()) return {node.upper, node.lower};
  const std::size_t i = best_action(node);
  ActionRecord& rec = node.actions[i];
  const PrefixBranch& b = node.prefix->branches[i];
  if (b.child) {
    const std::size_t pick = widest_sample(rec);
    assign(rec, pick, construct(child(node, i, pick)));
    refine_bounds(rec, pick, b.child->lipschitz);
    backup(rec);
  }
  backup(node);
  return {node.upper, node.lower};
}

std::pair<double, double> AnytimeSearch::construct_tree() {
  const double lo0 = root_->lower, hi0 = root_->upper;
  const bool fresh = !root_->explored;
  changed_ = false;
  auto out = construct(*root_);
  if (!fresh && widened(lo0, hi0, root_->lower, root_->upper))
    throw NumericalError("anytime root interval widened");
  ++iterations_;
  trace_.push_back(omega());
  return out;
}

AnytimeResult AnytimeSearch::run(const AnytimeBudget& budget) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  StopReason stop = StopReason::no_budget;
  const bool bounded = budget.iterations || budget.wallclock_ms;
  std::size_t done = 0;
  while (true) {
    if (budget.iterations && done >= *budget.iterations) {
      stop = StopReason::iterations;
      break;
    }
    if (budget.wallclock_ms) {
      const double ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
      if (ms >= *budget.wallclock_ms) {
        stop = StopReason::wallclock;
        break;
      }
    }
    if (!bounded && done > 0 && converged()) {
      stop = StopReason::converged;
      break;
    }
    if (nodes_ + per_iteration_cap() > budget.node_cap) {
      stop = StopReason::node_cap;
      break;
    }
    construct_tree();
    ++done;
    if (root_->actions.size() == 1) {
      stop = StopReason::single_action;
      break;
    }
    if (converged()) {
      stop = StopReason::converged;
      break;
    }
  }
  AnytimeResult r = result();
  r.stop = stop;
  return r;
}

AnytimeResult AnytimeSearch::result() const {
  AnytimeResult r;
  r.iterations = iterations_;
  r.nodes = nodes_;
  r.omega_trace = trace_;
  r.q_ml = q_ml_;
  r.bound_conflicts = conflicts_;
  r.lambda = lambda_;
  r.theta = theta_;
  r.samples = samples_;
  const PrefixNode& pn = *root_->prefix;
  std::vector<const MacroAction*> acts;
  for (const auto& b : pn.branches) acts.push_back(&b.action);
  if (!root_->explored) {
    r.fallback = true;
    r.omega = std::numeric_limits<double>::infinity();
    r.q_used = q_ml_;
  } else {
    r.omega = omega();
    for (std::size_t i = 0; i < root_->actions.size(); ++i) {
      const double ql = root_->actions[i].q_lower;
      r.q_lower.push_back(ql);
      r.q_upper.push_back(root_->actions[i].q_upper);
      r.q_used.push_back(std::abs(ql - q_ml_[i]) > 2.0 * lambda_ + r.omega + theta_ ? q_ml_[i] : ql);
    }
  }
  r.action_index = select_best(r.q_used, acts);
  r.action = pn.branches[r.action_index].action;
  return r;
}

AnytimeResult anytime_policy(const PlanningTables& tables, const PlannerConfig& config, const AnytimeBudget& budget,
                             const InnovationSource& source) {
  AnytimeSearch search(tables, config, source);
  return search.run(budget);
}

}  // namespace macrogpo
