#include "macrogpo/planner.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>

#include "macrogpo/errors.hpp"

namespace macrogpo {

void PlannerConfig::validate() const {
  if (horizon < 1) throw InvalidInput("horizon must be at least 1");
  if (!(beta >= 0.0)) throw InvalidInput("beta must be nonnegative");
  if (!(theta_multiplier >= 0.0)) throw InvalidInput("theta_multiplier must be nonnegative");
  const int modes = int(samples.has_value()) + int(epsilon.has_value()) + int(lambda.has_value());
  if (modes > 1) throw InvalidInput("set only one of samples, epsilon, lambda");
  if (samples && *samples < 1) throw InvalidInput("samples must be at least 1");
  if (epsilon && !(*epsilon > 0.0)) throw InvalidInput("epsilon must be positive");
  if (lambda && !(*lambda > 0.0)) throw InvalidInput("lambda must be positive");
  if (delta && !(*delta > 0.0 && *delta < 1.0)) throw InvalidInput("delta must lie in (0, 1)");
  if (prefix_cap < 1) throw InvalidInput("prefix_cap must be at least 1");
}

// ---------------------------------------------------------------- lookahead tree

LookaheadTree::LookaheadTree(const ObservationSet& data, const Location& anchor, const MacroActionCatalog& catalog,
                             const KernelParams& params, int horizon, std::size_t prefix_cap)
    : params_(params), data_(data), anchor_(anchor), horizon_(horizon), prefix_cap_(prefix_cap) {
  params_.validate();
  if (horizon < 1) throw InvalidInput("horizon must be at least 1");
  if (anchor.dimension() != params_.dimension())
    throw InvalidInput("anchor dimension does not match kernel length_scales");
  const auto& first = catalog.at(anchor);
  if (first.empty()) throw InvalidInput("no macro-actions available at the anchor");
  kappa_ = first.front().length();

  ConditionedGp gp(params_, data_);
  root_ = std::make_unique<PrefixNode>();
  root_->stage = 0;
  root_->anchor = anchor;
  root_->locations = data_.locations;
  root_->factor = gp.factor();
  root_residual_ = gp.whitened_residual();
  count_prefix();
  expand(*root_, catalog);
  compute_lipschitz(*root_);
}

void LookaheadTree::count_prefix() {
  if (++prefix_count_ > prefix_cap_)
    throw CapabilityError("lookahead tree exceeds prefix cap of " + std::to_string(prefix_cap_));
}

void LookaheadTree::expand(PrefixNode& node, const MacroActionCatalog& catalog) {
  node.id = node_count_++;
  const auto& actions = catalog.at(node.anchor);
  max_branching_ = std::max(max_branching_, actions.size());
  const Eigen::Index n = static_cast<Eigen::Index>(node.size());
  const auto lower = node.factor.triangularView<Eigen::Lower>();

  node.branches.resize(actions.size());
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const MacroAction& a = actions[i];
    if (a.length() != kappa_) throw InvalidInput("macro-actions of different lengths in the catalog");
    PrefixBranch& b = node.branches[i];
    b.action = a;
    b.index = i;

    if (n > 0) {
      b.cross = cross_covariance(node.locations, a.path, params_);
      lower.solveInPlace(b.cross);
    } else {
      b.cross.resize(0, static_cast<Eigen::Index>(kappa_));
    }
    b.cross_sum = b.cross.rowwise().sum();
    b.covariance = noisy_gram(a.path, params_);
    if (n > 0) b.covariance.noalias() -= b.cross.transpose() * b.cross;
    b.covariance = 0.5 * (b.covariance + b.covariance.transpose());
    b.chol = robust_cholesky(b.covariance, params_.signal_variance);
    ++factorizations_;
    b.info_gain = info_gain(b.covariance, params_.noise_variance);
    b.trace = b.covariance.trace();
    // K(path, prefix) K^-1 = cross^T L^-1, so alpha = ||L^-T cross||_F
    b.alpha = n > 0 ? node.factor.transpose().triangularView<Eigen::Upper>().solve(b.cross).norm() : 0.0;

    count_prefix();
    if (node.stage + 1 < horizon_) {
      auto child = std::make_unique<PrefixNode>();
      child->stage = node.stage + 1;
      child->anchor = a.end();
      child->locations = node.locations;
      child->locations.insert(child->locations.end(), a.path.begin(), a.path.end());
      const Eigen::Index k = static_cast<Eigen::Index>(kappa_);
      child->factor = Eigen::MatrixXd::Zero(n + k, n + k);
      child->factor.topLeftCorner(n, n) = node.factor;
      child->factor.bottomLeftCorner(k, n) = b.cross.transpose();
      child->factor.bottomRightCorner(k, k) = b.chol;
      expand(*child, catalog);
      b.child = std::move(child);
    }
  }
}

void LookaheadTree::compute_lipschitz(PrefixNode& node) {
  const double sk = std::sqrt(static_cast<double>(kappa_));
  double best = 0.0;
  for (auto& b : node.branches) {
    double next = 0.0;
    if (b.child) {
      compute_lipschitz(*b.child);
      next = b.child->lipschitz;
    }
    best = std::max(best, sk * b.alpha + next * std::sqrt(1.0 + b.alpha * b.alpha));
  }
  node.lipschitz = best;
}

// ---------------------------------------------------------------- tables

namespace {

void collect_lipschitz(const PrefixNode& node, std::vector<std::size_t>& path, LipschitzTable& out) {
  out.lipschitz[path] = node.lipschitz;
  for (const auto& b : node.branches) {
    path.push_back(b.index);
    out.alpha[path] = b.alpha;
    if (b.child)
      collect_lipschitz(*b.child, path, out);
    else
      out.lipschitz[path] = 0.0;
    path.pop_back();
  }
}

double child_lipschitz(const PrefixBranch& b) { return b.child ? b.child->lipschitz : 0.0; }

void stage_spread(const PrefixNode& node, double sk, std::vector<double>& per_stage) {
  for (const auto& b : node.branches) {
    per_stage[node.stage] = std::max(per_stage[node.stage], child_lipschitz(b) * std::sqrt(b.trace) * sk);
    if (b.child) stage_spread(*b.child, sk, per_stage);
  }
}

double max_concentration(const PrefixNode& node) {
  double k = 0.0;
  for (const auto& b : node.branches) {
    k = std::max(k, child_lipschitz(b) * std::sqrt(b.trace));
    if (b.child) k = std::max(k, max_concentration(*b.child));
  }
  return k;
}

}  // namespace

LipschitzTable lipschitz_table(const LookaheadTree& tree) {
  LipschitzTable out;
  std::vector<std::size_t> path;
  collect_lipschitz(tree.root(), path, out);
  return out;
}

double ThetaTable::max() const {
  double m = 0.0;
  for (double v : per_stage) m = std::max(m, v);
  return m;
}

ThetaTable theta_table(const LookaheadTree& tree, double multiplier) {
  const int h = tree.horizon();
  std::vector<double> spread(h, 0.0);
  stage_spread(tree.root(), std::sqrt(static_cast<double>(tree.kappa())), spread);
  ThetaTable t;
  t.per_stage.assign(h, 0.0);
  double acc = 0.0;
  for (int s = h - 1; s >= 0; --s) {
    acc += spread[s];
    t.per_stage[s] = acc;
  }
  for (double& v : t.per_stage) v *= multiplier;
  return t;
}

double concentration_constant(const LookaheadTree& tree) { return max_concentration(tree.root()); }

namespace {

void check_sample_args(double delta, int horizon, std::size_t actions) {
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidInput("delta must lie in (0, 1)");
  if (horizon < 1) throw InvalidInput("horizon must be at least 1");
  if (actions < 1) throw InvalidInput("action count must be at least 1");
}

// Sample-size formula as a function of u = 1 / lambda^2.
double samples_at(double u, double delta, double K, int horizon, std::size_t actions) {
  const double c = 4.0 * K * K * u;
  const double h = static_cast<double>(horizon);
  return c * (h * std::log(c * h * static_cast<double>(actions) / std::numbers::e) + std::log(2.0 / delta));
}

}  // namespace

std::size_t sample_size(double lambda, double delta, double K, int horizon, std::size_t actions) {
  check_sample_args(delta, horizon, actions);
  if (!(K >= 0.0)) throw InvalidInput("K must be nonnegative");
  if (K == 0.0) return 1;
  if (!(lambda > 0.0)) throw InvalidInput("lambda must be positive");
  const double n = std::ceil(samples_at(1.0 / (lambda * lambda), delta, K, horizon, actions));
  if (!std::isfinite(n) || n >= 9.0e18) throw CapabilityError("sample size overflows");
  return n < 1.0 ? 1 : static_cast<std::size_t>(n);
}

double lambda_for_samples(std::size_t samples, double delta, double K, int horizon, std::size_t actions) {
  check_sample_args(delta, horizon, actions);
  if (samples < 1) throw InvalidInput("samples must be at least 1");
  if (!(K >= 0.0)) throw InvalidInput("K must be nonnegative");
  if (K == 0.0) return 0.0;
  const double h = static_cast<double>(horizon);
  const double a = 4.0 * K * K * h * static_cast<double>(actions) / std::numbers::e;
  // The formula is decreasing in lambda only above u0 (below its minimum it turns back up).
  const double u0 = std::exp(-(std::log(2.0 / delta) + h) / h) / a;
  const double target = static_cast<double>(samples);
  double lo = u0, hi = std::max(2.0 * u0, 1e-300);
  while (samples_at(hi, delta, K, horizon, actions) <= target) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (samples_at(mid, delta, K, horizon, actions) <= target ? lo : hi) = mid;
  }
  // Converting back to lambda can land a hair past the boundary; step inside it.
  double lambda = 1.0 / std::sqrt(lo);
  for (int i = 0; i < 64 && sample_size(lambda, delta, K, horizon, actions) > samples; ++i) lambda *= 1.0 + 1e-13;
  return lambda;
}

SamplingPlan resolve_sampling(const PlannerConfig& config, const LookaheadTree& tree, const ThetaTable& theta) {
  SamplingPlan plan;
  plan.K = concentration_constant(tree);
  plan.theta = theta.at(0);
  const int h = tree.horizon();
  const std::size_t a = tree.max_branching();
  if (config.samples) {
    plan.samples = *config.samples;
    plan.delta = config.delta.value_or(kDefaultDelta);
    plan.lambda = lambda_for_samples(plan.samples, plan.delta, plan.K, h, a);
  } else if (config.epsilon) {
    const double eps = *config.epsilon;
    plan.lambda = eps / (4.0 * h * h);
    plan.delta = plan.theta > 0.0 ? std::min(eps / (8.0 * plan.theta * h), 0.5) : 0.5;
    plan.samples = sample_size(plan.lambda, plan.delta, plan.K, h, a);
  } else if (config.lambda) {
    plan.lambda = *config.lambda;
    plan.delta = config.delta.value_or(kDefaultDelta);
    plan.samples = sample_size(plan.lambda, plan.delta, plan.K, h, a);
  }
  return plan;
}

PlanningTables preprocess(const ObservationSet& data, const Location& anchor, const MacroActionCatalog& catalog,
                          const KernelParams& params, const PlannerConfig& config) {
  config.validate();
  LookaheadTree tree(data, anchor, catalog, params, config.horizon, config.prefix_cap);
  if (config.kappa != 0 && config.kappa != tree.kappa())
    throw InvalidInput("configured kappa does not match the macro-action catalog");
  LipschitzTable lip = lipschitz_table(tree);
  ThetaTable theta = theta_table(tree, config.theta_multiplier);
  SamplingPlan plan = resolve_sampling(config, tree, theta);
  return PlanningTables{std::move(tree), std::move(lip), std::move(theta), plan};
}

double reward(const MacroAction& action, const ObservationSet& data, const KernelParams& params, double beta) {
  if (action.path.empty()) throw InvalidInput("empty macro-action");
  const PosteriorBelief belief = posterior(action.path, data, params);
  return belief.mean.sum() + beta * info_gain(belief.covariance, params.noise_variance);
}

double alpha(std::span<const Location> prefix, const MacroAction& action, const KernelParams& params) {
  params.validate();
  if (prefix.empty()) return 0.0;
  const Eigen::MatrixXd l = robust_cholesky(noisy_gram(prefix, params), params.signal_variance);
  Eigen::MatrixXd cross = cross_covariance(prefix, action.path, params);
  l.triangularView<Eigen::Lower>().solveInPlace(cross);
  return l.transpose().triangularView<Eigen::Upper>().solve(cross).norm();
}

// ---------------------------------------------------------------- recursions

std::uint64_t root_node_key(std::uint64_t seed) { return derive_seed(seed, {0x726f6f74ULL}); }

std::uint64_t child_node_key(std::uint64_t parent, std::size_t branch, std::size_t sample) {
  return derive_seed(parent, {branch, sample});
}

Eigen::MatrixXd node_innovations(std::uint64_t node_key, std::size_t branch, std::size_t samples,
                                 std::size_t kappa, const InnovationSource& source) {
  Rng rng = make_rng(derive_seed(node_key, {branch, ~0ULL}));
  Eigen::MatrixXd x(static_cast<Eigen::Index>(kappa), static_cast<Eigen::Index>(samples));
  source(x, rng);
  return x;
}

std::size_t ValueEvaluator::MemoHash::operator()(const MemoKey& k) const noexcept {
  std::uint64_t h = splitmix64(k.node);
  for (double v : k.residual) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    h = splitmix64(h ^ bits);
  }
  return static_cast<std::size_t>(h);
}

ValueEvaluator::ValueEvaluator(const PlanningTables& tables, const PlannerConfig& config, InnovationSource source)
    : tables_(tables),
      beta_(config.beta),
      prior_mean_(tables.tree.params().prior_mean),
      kappa_(tables.tree.kappa()),
      samples_(tables.sampling.samples),
      source_(std::move(source)) {}

Eigen::VectorXd ValueEvaluator::branch_mean(const PrefixBranch& branch, const Eigen::VectorXd& residual) const {
  Eigen::VectorXd mu = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(kappa_), prior_mean_);
  if (residual.size() > 0) mu.noalias() += branch.cross.transpose() * residual;
  return mu;
}

double ValueEvaluator::branch_reward(const PrefixBranch& branch, const Eigen::VectorXd& residual) const {
  double r = static_cast<double>(kappa_) * prior_mean_ + beta_ * branch.info_gain;
  if (residual.size() > 0) r += branch.cross_sum.dot(residual);
  return r;
}

double ValueEvaluator::q_ml(const PrefixNode& node, std::size_t branch, const Eigen::VectorXd& residual) {
  const PrefixBranch& b = node.branches.at(branch);
  ++ml_evaluations_;
  double q = branch_reward(b, residual);
  if (b.child) {
    Eigen::VectorXd next(residual.size() + static_cast<Eigen::Index>(kappa_));
    next << residual, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(kappa_));
    q += value_ml(*b.child, next);
  }
  return q;
}

double ValueEvaluator::value_ml(const PrefixNode& node, const Eigen::VectorXd& residual) {
  if (node.branches.empty()) return 0.0;
  MemoKey key{node.id, std::vector<double>(residual.data(), residual.data() + residual.size())};
  if (auto it = ml_memo_.find(key); it != ml_memo_.end()) return it->second;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < node.branches.size(); ++i) best = std::max(best, q_ml(node, i, residual));
  ml_memo_.emplace(std::move(key), best);
  return best;
}

double ValueEvaluator::q_sampled(const PrefixNode& node, std::size_t branch, const Eigen::VectorXd& residual,
                                 std::uint64_t node_key) {
  const PrefixBranch& b = node.branches.at(branch);
  nodes_ += samples_;
  const double r = branch_reward(b, residual);
  if (!b.child) return r;
  const Eigen::MatrixXd x = node_innovations(node_key, branch, samples_, kappa_, source_);
  Eigen::VectorXd next(residual.size() + static_cast<Eigen::Index>(kappa_));
  next.head(residual.size()) = residual;
  double sum = 0.0;
  for (std::size_t l = 0; l < samples_; ++l) {
    next.tail(static_cast<Eigen::Index>(kappa_)) = x.col(static_cast<Eigen::Index>(l));
    sum += value_sampled(*b.child, next, child_node_key(node_key, branch, l));
  }
  return r + sum / static_cast<double>(samples_);
}

double ValueEvaluator::value_sampled(const PrefixNode& node, const Eigen::VectorXd& residual,
                                     std::uint64_t node_key) {
  if (node.branches.empty()) return 0.0;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < node.branches.size(); ++i)
    best = std::max(best, q_sampled(node, i, residual, node_key));
  return best;
}

// ---------------------------------------------------------------- policy

std::size_t select_best(const std::vector<double>& values, const std::vector<const MacroAction*>& actions) {
  if (values.empty() || values.size() != actions.size()) throw InvalidInput("no actions to choose from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best] || (values[i] == values[best] && actions[i]->path < actions[best]->path))
      best = i;
  }
  return best;
}

namespace {

void check_tree_size(const PlanningTables& tables, double cap) {
  const double an = static_cast<double>(tables.tree.max_branching()) * static_cast<double>(tables.sampling.samples);
  double total = 0.0, level = 1.0;
  for (int t = 0; t < tables.tree.horizon(); ++t) {
    level *= an;
    total += level;
  }
  if (total > cap)
    throw CapabilityError("sampled search tree of ~" + std::to_string(total) + " nodes exceeds the cap");
}

}  // namespace

PolicyDecision epsilon_policy(const PlanningTables& tables, const PlannerConfig& config,
                              const InnovationSource& source) {
  config.validate();
  if (!config.samples && !config.epsilon && !config.lambda)
    throw InvalidInput("sampled planning needs one of samples, epsilon, lambda");
  const PrefixNode& root = tables.tree.root();
  if (root.branches.empty()) throw InvalidInput("no macro-actions available at the anchor");
  check_tree_size(tables, config.tree_cap);

  ValueEvaluator ev(tables, config, source);
  const std::uint64_t key = root_node_key(config.seed);
  const Eigen::VectorXd& w = tables.tree.root_residual();

  PolicyDecision d;
  d.sampling = tables.sampling;
  d.threshold = tables.sampling.lambda * tables.tree.horizon() + tables.sampling.theta;
  std::vector<const MacroAction*> actions;
  for (std::size_t i = 0; i < root.branches.size(); ++i) {
    const double qs = ev.q_sampled(root, i, w, key);
    const double qm = ev.q_ml(root, i, w);
    const bool keep = std::abs(qs - qm) <= d.threshold;
    d.q_sampled.push_back(qs);
    d.q_ml.push_back(qm);
    d.q_used.push_back(keep ? qs : qm);
    d.used_sampled.push_back(keep);
    actions.push_back(&root.branches[i].action);
  }
  d.action_index = select_best(d.q_used, actions);
  d.action = root.branches[d.action_index].action;
  d.nodes = ev.nodes();
  return d;
}

PolicyDecision epsilon_policy(const ObservationSet& data, const Location& anchor, const MacroActionCatalog& catalog,
                              const KernelParams& params, const PlannerConfig& config) {
  const PlanningTables tables = preprocess(data, anchor, catalog, params, config);
  return epsilon_policy(tables, config);
}

}  // namespace macrogpo
