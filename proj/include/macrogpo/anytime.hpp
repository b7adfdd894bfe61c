#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "macrogpo/planner.hpp"

namespace macrogpo {

struct SearchNode;

/// Per macro-action state of an explored node: the stored samples and the
/// bounds of every sampled child.
struct ActionRecord {
  Eigen::MatrixXd innovations;  // kappa x N standard normals, empty at the last stage
  Eigen::MatrixXd deviations;   // z^l - mu = Psi x^l
  std::vector<double> lower;    // child lower bounds per sample
  std::vector<double> upper;
  std::vector<std::unique_ptr<SearchNode>> children;  // created on first visit
  double reward = 0.0;
  double q_lower = 0.0;
  double q_upper = 0.0;
  bool backed_up = false;
};

struct SearchNode {
  const PrefixNode* prefix = nullptr;
  Eigen::VectorXd residual;  // whitened residual of the node's data
  std::uint64_t key = 0;
  int stage = 0;
  bool explored = false;
  double lower = 0.0;
  double upper = 0.0;
  std::vector<ActionRecord> actions;
};

/// Lipschitz sibling refinement around anchor sample j; never widens an interval.
void refine_bounds(ActionRecord& record, std::size_t j, double lipschitz);

/// Sample the descent visits next: the widest child interval, lowest index on ties.
std::size_t widest_sample(const ActionRecord& record);

struct AnytimeBudget {
  std::optional<std::size_t> iterations;
  std::optional<double> wallclock_ms;
  std::uint64_t node_cap = 50'000'000;
};

enum class StopReason { iterations, wallclock, node_cap, converged, single_action, no_budget };

std::string to_string(StopReason r);

struct AnytimeResult {
  std::size_t action_index = 0;
  MacroAction action;
  double omega = 0.0;
  std::size_t iterations = 0;
  std::uint64_t nodes = 0;
  std::vector<double> omega_trace;  // after every iteration
  std::vector<double> q_lower;
  std::vector<double> q_upper;
  std::vector<double> q_ml;
  std::vector<double> q_used;
  bool fallback = false;  // no iteration ran; the most-likely policy was used
  StopReason stop = StopReason::no_budget;
  std::uint64_t bound_conflicts = 0;
  double lambda = 0.0;
  double theta = 0.0;
  std::size_t samples = 1;
};

/// Anytime branch-and-bound search over the sampled tree. Samples are keyed
/// exactly as in the exact planner, so both see the same draws.
class AnytimeSearch {
 public:
  AnytimeSearch(const PlanningTables& tables, const PlannerConfig& config,
                InnovationSource source = standard_normal_fill);

  /// One descent from the root; returns (upper, lower) of the root.
  std::pair<double, double> construct_tree();

  AnytimeResult run(const AnytimeBudget& budget);
  /// Policy from the current bounds.
  AnytimeResult result() const;

  const SearchNode& root() const { return *root_; }
  double omega() const { return root_->upper - root_->lower; }
  std::uint64_t nodes() const { return nodes_; }
  std::size_t iterations() const { return iterations_; }
  std::uint64_t bound_conflicts() const { return conflicts_; }
  const std::vector<double>& q_ml() const { return q_ml_; }
  double lambda() const { return lambda_; }
  double theta() const { return theta_; }
  std::size_t samples() const { return samples_; }
  /// Most nodes one construct_tree call can add: N * sum_{k=1..H} A^k.
  std::uint64_t per_iteration_cap() const;
  /// True when the last call neither expanded a node nor moved a bound.
  bool converged() const { return !changed_; }

 private:
  std::pair<double, double> expand(SearchNode& node);
  std::pair<double, double> construct(SearchNode& node);
  SearchNode& child(SearchNode& node, std::size_t branch, std::size_t sample);
  void assign(ActionRecord& rec, std::size_t sample, std::pair<double, double> bounds);
  void backup(ActionRecord& rec);
  void backup(SearchNode& node);
  std::size_t best_action(const SearchNode& node) const;

  const PlanningTables& tables_;
  PlannerConfig config_;
  InnovationSource source_;
  mutable ValueEvaluator ml_;
  std::unique_ptr<SearchNode> root_;
  std::vector<double> q_ml_;
  std::vector<double> trace_;
  double lambda_ = 0.0;
  double theta_ = 0.0;
  std::size_t samples_ = 1;
  std::size_t kappa_ = 0;
  std::uint64_t nodes_ = 0;
  std::size_t iterations_ = 0;
  std::uint64_t conflicts_ = 0;
  bool changed_ = true;
};

AnytimeResult anytime_policy(const PlanningTables& tables, const PlannerConfig& config, const AnytimeBudget& budget,
                             const InnovationSource& source = standard_normal_fill);

}  // namespace macrogpo
