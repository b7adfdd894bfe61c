#pragma once

// Slow, independent reference implementations used only by tests.

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "macrogpo/environment.hpp"
#include "macrogpo/gp.hpp"

namespace oracle {

using macrogpo::KernelParams;
using macrogpo::Location;
using macrogpo::MacroAction;
using macrogpo::MacroActionCatalog;
using macrogpo::ObservationSet;

double se_kernel(const Location& a, const Location& b, const KernelParams& p);

/// Posterior over noisy outputs with an explicit dense inverse of the gram matrix.
struct NaivePosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};
NaivePosterior naive_posterior(const std::vector<Location>& targets, const ObservationSet& data,
                               const KernelParams& p);

/// 0.5 log det(I + cov / noise) through an LU determinant.
double naive_info_gain(const Eigen::MatrixXd& cov, double noise);

double naive_reward(const MacroAction& a, const ObservationSet& data, const KernelParams& p, double beta);

/// ||K(path, prefix) K(prefix, prefix)^-1||_F through a dense inverse.
double naive_alpha(const std::vector<Location>& prefix, const MacroAction& a, const KernelParams& p);

/// Probabilists' Gauss-Hermite rule: sum w_i f(x_i) ~ E f(X), X ~ N(0, 1).
struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};
Quadrature gauss_hermite(int order);

/// E f(mean + chol x), x ~ N(0, I_k), by a tensor-product rule.
double gaussian_expectation(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& mean,
                            const Eigen::MatrixXd& chol, int order);

/// Exact V_0 by full Bellman recursion with quadrature expectations.
double exact_value(const ObservationSet& data, const Location& anchor, const MacroActionCatalog& catalog,
                   const KernelParams& p, int horizon, double beta, int order = 12);

/// Exact Q_0 for every root action, same method.
std::vector<double> exact_q(const ObservationSet& data, const Location& anchor, const MacroActionCatalog& catalog,
                            const KernelParams& p, int horizon, double beta, int order = 12);

/// Most-likely value by brute recursion on posterior means.
double ml_value(const ObservationSet& data, const Location& anchor, const MacroActionCatalog& catalog,
                const KernelParams& p, int horizon, double beta);

/// L_t of a prefix by the defining max-recursion, dense inverses throughout.
double brute_lipschitz(const std::vector<Location>& prefix, const Location& anchor, const MacroActionCatalog& catalog,
                       const KernelParams& p, int stages_left, std::size_t kappa);

/// Every simple kappa-step walk from `start`, found by testing all node sequences.
std::vector<std::vector<std::size_t>> brute_walks(const macrogpo::Graph& g, std::size_t start, std::size_t kappa);

/// Number of (t, action, sample) triples of a full sampled tree.
unsigned long long tree_triples(unsigned long long actions, unsigned long long samples, int horizon);

}  // namespace oracle
