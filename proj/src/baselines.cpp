#include "macrogpo/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "macrogpo/errors.hpp"

namespace macrogpo {

namespace {

const std::vector<MacroAction>& actions_at(const MacroActionCatalog& catalog, const Location& anchor) {
  const auto& actions = catalog.at(anchor);
  if (actions.empty()) throw InvalidInput("no macro-actions available at the anchor");
  return actions;
}

}  // namespace

BaselineDecision db_gp_ucb(const ObservationSet& data, const Location& anchor, const MacroActionCatalog& catalog,
                           const KernelParams& params, const PlannerConfig& config) {
  actions_at(catalog, anchor);
  PlannerConfig c = config;
  c.horizon = 1;
  if (!c.samples && !c.epsilon && !c.lambda) c.samples = 1;
  const PlanningTables tables = preprocess(data, anchor, catalog, params, c);
  const PolicyDecision d = epsilon_policy(tables, c);
  return {d.action_index, d.action, d.q_used, d.nodes};
}

BaselineDecision nonmyopic_ucb_ml(const ObservationSet& data, const Location& anchor,
                                  const MacroActionCatalog& catalog, const KernelParams& params,
                                  const PlannerConfig& config) {
  actions_at(catalog, anchor);
  PlannerConfig c = config;
  c.samples.reset();
  c.epsilon.reset();
  c.lambda.reset();
  const PlanningTables tables = preprocess(data, anchor, catalog, params, c);
  ValueEvaluator ev(tables, c);
  const PrefixNode& root = tables.tree.root();
  BaselineDecision out;
  std::vector<const MacroAction*> acts;
  for (std::size_t i = 0; i < root.branches.size(); ++i) {
    out.scores.push_back(ev.q_ml(root, i, tables.tree.root_residual()));
    acts.push_back(&root.branches[i].action);
  }
  out.action_index = select_best(out.scores, acts);
  out.action = root.branches[out.action_index].action;
  out.nodes = ev.ml_evaluations();
  return out;
}

double ucb_score(double mean, double sigma, double beta) { return mean + std::sqrt(beta) * sigma; }

double ei_score(double mean, double sigma, double incumbent) {
  if (!(sigma > 0.0)) return std::max(mean - incumbent, 0.0);
  const double u = (mean - incumbent) / sigma;
  const double cdf = 0.5 * std::erfc(-u / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
  return (mean - incumbent) * cdf + sigma * pdf;
}

BaselineDecision greedy_hallucinated_ucb(const ObservationSet& data, const Location& anchor,
                                         const MacroActionCatalog& catalog, const KernelParams& params,
                                         const PlannerConfig& config, GreedyScore score) {
  const auto& actions = actions_at(catalog, anchor);
  const std::size_t kappa = actions.front().length();
  double incumbent = params.prior_mean;
  if (!data.empty()) incumbent = *std::max_element(data.measurements.begin(), data.measurements.end());

  ConditionedGp gp(params, data);
  std::vector<std::size_t> alive(actions.size());
  for (std::size_t i = 0; i < alive.size(); ++i) alive[i] = i;
  BaselineDecision out;

  for (std::size_t step = 0; step < kappa; ++step) {
    std::vector<Location> options;
    for (std::size_t i : alive) options.push_back(actions[i].path[step]);
    std::sort(options.begin(), options.end());
    options.erase(std::unique(options.begin(), options.end()), options.end());

    const PosteriorBelief belief = gp.predict(options);
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < options.size(); ++k) {
      const double sigma = std::sqrt(std::max(belief.covariance(k, k) - params.noise_variance, 0.0));
      const double mu = belief.mean(static_cast<Eigen::Index>(k));
      const double s = score == GreedyScore::ucb ? ucb_score(mu, sigma, config.beta) : ei_score(mu, sigma, incumbent);
      if (s > best_score) best_score = s, best = k;  // options are sorted, so ties keep the smallest
    }
    out.nodes += options.size();

    const Location chosen = options[best];
    std::erase_if(alive, [&](std::size_t i) { return !(actions[i].path[step] == chosen); });
    // Hallucinate the posterior mean: the mean is unchanged, the variance shrinks.
    const double mean = belief.mean(static_cast<Eigen::Index>(best));
    gp.append(std::span(&chosen, 1), std::span(&mean, 1));
  }

  out.action_index = alive.front();
  out.action = actions[out.action_index];
  return out;
}

}  // namespace macrogpo
