#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "macrogpo/environment.hpp"
#include "macrogpo/gp.hpp"

namespace macrogpo {

struct PlannerConfig {
  int horizon = 1;                     // H
  std::size_t kappa = 0;               // 0: take from the catalog
  double beta = 0.0;                   // exploration weight
  std::optional<std::size_t> samples;  // N pinned directly
  std::optional<double> epsilon;       // loss bound; derives lambda, delta, N
  std::optional<double> lambda;        // per-stage error bound, with delta
  std::optional<double> delta;         // failure probability
  std::uint64_t seed = 0;
  double theta_multiplier = 1.0;
  std::size_t prefix_cap = 200000;
  double tree_cap = 2e8;  // sampled-tree triples

  void validate() const;
};

/// Failure probability used to turn a pinned N into a per-stage error bound
/// when the configuration does not give one.
inline constexpr double kDefaultDelta = 0.1;

struct PrefixNode;

/// One macro-action appended to a prefix, with everything about it that does not
/// depend on measured values.
struct PrefixBranch {
  MacroAction action;
  std::size_t index = 0;       // position in catalog.at(anchor)
  Eigen::MatrixXd cross;       // L^-1 K(prefix, path), n x kappa
  Eigen::VectorXd cross_sum;   // row sums of cross
  Eigen::MatrixXd covariance;  // posterior covariance of the noisy outputs
  Eigen::MatrixXd chol;
  double info_gain = 0.0;
  double alpha = 0.0;
  double trace = 0.0;
  std::unique_ptr<PrefixNode> child;  // null at the last stage
};

struct PrefixNode {
  int stage = 0;
  std::size_t id = 0;
  Location anchor;                  // where the last macro-action ended
  std::vector<Location> locations;  // every location in the prefix, stage-0 data included
  Eigen::MatrixXd factor;           // lower Cholesky factor of the noisy gram over `locations`
  std::vector<PrefixBranch> branches;
  double lipschitz = 0.0;  // L_t of this prefix

  std::size_t size() const { return locations.size(); }
};

/// All macro-action sequences reachable from the anchor within H stages, with
/// cached posterior covariances and Lipschitz constants.
class LookaheadTree {
 public:
  LookaheadTree(const ObservationSet& data, const Location& anchor, const MacroActionCatalog& catalog,
                const KernelParams& params, int horizon, std::size_t prefix_cap = 200000);

  LookaheadTree(const LookaheadTree&) = delete;
  LookaheadTree& operator=(const LookaheadTree&) = delete;
  LookaheadTree(LookaheadTree&&) = default;
  LookaheadTree& operator=(LookaheadTree&&) = default;

  const PrefixNode& root() const { return *root_; }
  const KernelParams& params() const { return params_; }
  const ObservationSet& data() const { return data_; }
  const Location& anchor() const { return anchor_; }
  const Eigen::VectorXd& root_residual() const { return root_residual_; }
  int horizon() const { return horizon_; }
  std::size_t kappa() const { return kappa_; }

  /// Prefixes s_{0:t} for t = 0..H, the root included.
  std::size_t prefix_count() const { return prefix_count_; }
  std::size_t node_count() const { return node_count_; }
  /// Largest number of macro-actions at any reachable anchor (A).
  std::size_t max_branching() const { return max_branching_; }
  /// Posterior covariances factorized while building; never grows afterwards.
  std::size_t factorizations() const { return factorizations_; }

 private:
  void expand(PrefixNode& node, const MacroActionCatalog& catalog);
  void count_prefix();
  void compute_lipschitz(PrefixNode& node);

  KernelParams params_;
  ObservationSet data_;
  Location anchor_;
  int horizon_;
  std::size_t kappa_ = 0;
  std::size_t prefix_cap_;
  std::unique_ptr<PrefixNode> root_;
  Eigen::VectorXd root_residual_;
  std::size_t prefix_count_ = 0;
  std::size_t node_count_ = 0;
  std::size_t max_branching_ = 0;
  std::size_t factorizations_ = 0;
};

/// L_t per prefix and alpha per extended prefix, keyed by the sequence of
/// branch indices taken from the anchor.
struct LipschitzTable {
  std::map<std::vector<std::size_t>, double> lipschitz;
  std::map<std::vector<std::size_t>, double> alpha;

  double at(const std::vector<std::size_t>& path) const { return lipschitz.at(path); }
};

LipschitzTable lipschitz_table(const LookaheadTree& tree);

struct ThetaTable {
  std::vector<double> per_stage;  // theta_t, t = 0..H-1

  double max() const;
  double at(int t) const { return t < static_cast<int>(per_stage.size()) ? per_stage[t] : 0.0; }
};

/// theta_{H-1} = 0; theta_t = max over stage-t branches of L_{t+1} sqrt(tr Sigma) sqrt(kappa) + theta_{t+1}.
ThetaTable theta_table(const LookaheadTree& tree, double multiplier = 1.0);

/// K = max over reachable branches of L_{t+1} sqrt(tr Sigma).
double concentration_constant(const LookaheadTree& tree);

/// ceil(4K^2/lambda^2 (H log(4K^2 H A / (e lambda^2)) + log(2/delta))), at least 1.
std::size_t sample_size(double lambda, double delta, double K, int horizon, std::size_t actions);

/// Per-stage error bound lambda at which the sample-size formula yields exactly N.
double lambda_for_samples(std::size_t samples, double delta, double K, int horizon, std::size_t actions);

struct SamplingPlan {
  std::size_t samples = 1;
  double lambda = 0.0;
  double delta = kDefaultDelta;
  double K = 0.0;
  double theta = 0.0;  // max_t theta_t, multiplier applied
};

SamplingPlan resolve_sampling(const PlannerConfig& config, const LookaheadTree& tree, const ThetaTable& theta);

struct PlanningTables {
  LookaheadTree tree;
  LipschitzTable lipschitz;
  ThetaTable theta;
  SamplingPlan sampling;
};

/// Builds the lookahead tree and every data-independent table.
PlanningTables preprocess(const ObservationSet& data, const Location& anchor, const MacroActionCatalog& catalog,
                          const KernelParams& params, const PlannerConfig& config);

/// Stage reward 1^T mu + beta * 0.5 log|I + Sigma / sigma_n^2|.
double reward(const MacroAction& action, const ObservationSet& data, const KernelParams& params, double beta);

/// ||K(path, prefix) K(prefix, prefix)^-1||_F with the noisy gram; 0 for an empty prefix.
double alpha(std::span<const Location> prefix, const MacroAction& action, const KernelParams& params);

/// Seed of the search-tree root and of a sampled child; shared by every planner
/// so that the exact and anytime searches see identical samples.
std::uint64_t root_node_key(std::uint64_t seed);
std::uint64_t child_node_key(std::uint64_t parent, std::size_t branch, std::size_t sample);

/// kappa x N standard-normal innovations for `branch` at the node with `node_key`.
Eigen::MatrixXd node_innovations(std::uint64_t node_key, std::size_t branch, std::size_t samples,
                                 std::size_t kappa, const InnovationSource& source);

/// Most-likely and sampled Bellman recursions over a prefix tree. Data enter as
/// the whitened residual of the prefix (length node.size()).
class ValueEvaluator {
 public:
  ValueEvaluator(const PlanningTables& tables, const PlannerConfig& config,
                 InnovationSource source = standard_normal_fill);

  double branch_reward(const PrefixBranch& branch, const Eigen::VectorXd& residual) const;
  Eigen::VectorXd branch_mean(const PrefixBranch& branch, const Eigen::VectorXd& residual) const;

  double value_ml(const PrefixNode& node, const Eigen::VectorXd& residual);
  double q_ml(const PrefixNode& node, std::size_t branch, const Eigen::VectorXd& residual);

  double value_sampled(const PrefixNode& node, const Eigen::VectorXd& residual, std::uint64_t node_key);
  double q_sampled(const PrefixNode& node, std::size_t branch, const Eigen::VectorXd& residual,
                   std::uint64_t node_key);

  /// (t, action, sample) triples evaluated by the sampled recursion.
  std::uint64_t nodes() const { return nodes_; }
  std::uint64_t ml_evaluations() const { return ml_evaluations_; }
  std::size_t samples() const { return samples_; }

 private:
  struct MemoKey {
    std::size_t node;
    std::vector<double> residual;
    bool operator==(const MemoKey&) const = default;
  };
  struct MemoHash {
    std::size_t operator()(const MemoKey& k) const noexcept;
  };

  const PlanningTables& tables_;
  double beta_;
  double prior_mean_;
  std::size_t kappa_;
  std::size_t samples_;
  InnovationSource source_;
  std::uint64_t nodes_ = 0;
  std::uint64_t ml_evaluations_ = 0;
  std::unordered_map<MemoKey, double, MemoHash> ml_memo_;
};

struct PolicyDecision {
  std::size_t action_index = 0;  // into catalog.at(anchor)
  MacroAction action;
  std::vector<double> q_sampled;
  std::vector<double> q_ml;
  std::vector<double> q_used;
  std::vector<bool> used_sampled;
  double threshold = 0.0;  // lambda H + theta
  SamplingPlan sampling;
  std::uint64_t nodes = 0;
};

/// Argmax of `values` over `actions`; exact ties go to the lexicographically smallest path.
std::size_t select_best(const std::vector<double>& values, const std::vector<const MacroAction*>& actions);

/// Per action: the sampled Q if it lies within lambda H + theta of the most-likely
/// Q, otherwise the most-likely Q; returns the argmax.
PolicyDecision epsilon_policy(const PlanningTables& tables, const PlannerConfig& config,
                              const InnovationSource& source = standard_normal_fill);

PolicyDecision epsilon_policy(const ObservationSet& data, const Location& anchor, const MacroActionCatalog& catalog,
                              const KernelParams& params, const PlannerConfig& config);

}  // namespace macrogpo
