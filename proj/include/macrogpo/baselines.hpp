#pragma once

#include <vector>

#include "macrogpo/planner.hpp"

namespace macrogpo {

struct BaselineDecision {
  std::size_t action_index = 0;  // into catalog.at(anchor)
  MacroAction action;
  std::vector<double> scores;  // per action where the method has one
  std::uint64_t nodes = 0;     // evaluations performed
};

/// Myopic macro-action UCB: argmax of the stage reward (the exact planner with H = 1).
BaselineDecision db_gp_ucb(const ObservationSet& data, const Location& anchor, const MacroActionCatalog& catalog,
                           const KernelParams& params, const PlannerConfig& config);

/// Nonmyopic UCB under most-likely observations: argmax of the most-likely Q at the root.
BaselineDecision nonmyopic_ucb_ml(const ObservationSet& data, const Location& anchor,
                                  const MacroActionCatalog& catalog, const KernelParams& params,
                                  const PlannerConfig& config);

enum class GreedyScore { ucb, ei };

/// Builds a macro-action one location at a time. Each step takes the best
/// per-location score among the paths still consistent with earlier steps;
/// chosen locations are hallucinated at their posterior mean, which shrinks
/// the variance without moving the mean.
BaselineDecision greedy_hallucinated_ucb(const ObservationSet& data, const Location& anchor,
                                         const MacroActionCatalog& catalog, const KernelParams& params,
                                         const PlannerConfig& config, GreedyScore score = GreedyScore::ucb);

/// Per-location scores used by the greedy baseline; sigma is the latent standard deviation.
double ucb_score(double mean, double sigma, double beta);
double ei_score(double mean, double sigma, double incumbent);

}  // namespace macrogpo
