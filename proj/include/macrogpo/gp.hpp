#pragma once

#include <compare>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "macrogpo/rng.hpp"

namespace macrogpo {

/// Hyperparameters of a squared-exponential GP with diagonal length-scales.
struct KernelParams {
  double prior_mean = 0.0;
  double signal_variance = 1.0;
  double noise_variance = 1e-5;
  std::vector<double> length_scales{1.0, 1.0};

  std::size_t dimension() const { return length_scales.size(); }
  void validate() const;
};

struct Location {
  std::vector<double> coords;

  Location() = default;
  Location(std::initializer_list<double> c) : coords(c) {}
  explicit Location(std::vector<double> c) : coords(std::move(c)) {}

  std::size_t dimension() const { return coords.size(); }
  double operator[](std::size_t i) const { return coords[i]; }

  bool operator==(const Location&) const = default;
  std::partial_ordering operator<=>(const Location&) const = default;
};

struct LocationHash {
  std::size_t operator()(const Location& loc) const noexcept;
};

/// History of visited locations and their noisy measurements.
struct ObservationSet {
  std::vector<Location> locations;
  std::vector<double> measurements;

  std::size_t size() const { return locations.size(); }
  bool empty() const { return locations.empty(); }
  void append(std::span<const Location> locs, std::span<const double> z);
  void append(const Location& loc, double z);
};

/// Gaussian belief over the noisy outputs at a set of targets.
struct PosteriorBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // includes noise on the diagonal
  Eigen::MatrixXd chol;        // lower triangular, chol * chol^T == covariance

  Eigen::Index size() const { return mean.size(); }
};

/// sigma_y^2 exp(-0.5 (a-b)^T Gamma^-2 (a-b)); no noise term.
double kernel_cov(const Location& a, const Location& b, const KernelParams& params);

/// Noise-free cross-covariance matrix K(a, b).
Eigen::MatrixXd cross_covariance(std::span<const Location> a, std::span<const Location> b,
                                 const KernelParams& params);

/// Noisy gram matrix K(a, a) + sigma_n^2 I.
Eigen::MatrixXd noisy_gram(std::span<const Location> a, const KernelParams& params);

/// Cholesky factor of a symmetric positive-definite matrix. Retries once with
/// 1e-10 * jitter_scale added to the diagonal; a second failure throws NumericalError.
Eigen::MatrixXd robust_cholesky(const Eigen::MatrixXd& m, double jitter_scale);

/// 0.5 log|I + covariance / noise_variance| via a Cholesky of the shifted matrix.
double info_gain(const Eigen::MatrixXd& covariance, double noise_variance);
double info_gain(const PosteriorBelief& belief, double noise_variance);

/// Exact GP conditioned on an ObservationSet. The gram factor grows by block
/// updates as observations are appended; the data enter only through the
/// whitened residual L^-1 (z - prior_mean).
class ConditionedGp {
 public:
  explicit ConditionedGp(KernelParams params);
  ConditionedGp(KernelParams params, const ObservationSet& data);

  void append(std::span<const Location> locs, std::span<const double> z);

  PosteriorBelief predict(std::span<const Location> targets) const;

  /// L^-1 K(data, targets), size n x targets.
  Eigen::MatrixXd whitened_cross(std::span<const Location> targets) const;

  const KernelParams& params() const { return params_; }
  const std::vector<Location>& locations() const { return locations_; }
  const Eigen::MatrixXd& factor() const { return factor_; }
  const Eigen::VectorXd& whitened_residual() const { return residual_; }
  std::size_t size() const { return locations_.size(); }

 private:
  KernelParams params_;
  std::vector<Location> locations_;
  Eigen::MatrixXd factor_;
  Eigen::VectorXd residual_;
};

PosteriorBelief posterior(std::span<const Location> targets, const ObservationSet& data,
                          const KernelParams& params);

/// Fills `out` (rows x cols) with i.i.d. standard normals.
using InnovationSource = std::function<void(Eigen::MatrixXd& out, Rng& rng)>;

void standard_normal_fill(Eigen::MatrixXd& out, Rng& rng);

/// n draws of mean + chol * x with x ~ N(0, I).
std::vector<Eigen::VectorXd> sample_outputs(const PosteriorBelief& belief, std::size_t n, Rng& rng,
                                            const InnovationSource& innovations = standard_normal_fill);

}  // namespace macrogpo
