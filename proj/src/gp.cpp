#include "macrogpo/gp.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>

#include "macrogpo/errors.hpp"

namespace macrogpo {

void KernelParams::validate() const {
  if (!(noise_variance > 0.0)) throw InvalidInput("noise_variance must be positive");
  if (!(signal_variance >= 0.0)) throw InvalidInput("signal_variance must be nonnegative");
  if (length_scales.empty()) throw InvalidInput("length_scales must not be empty");
  for (double l : length_scales)
    if (!(l > 0.0)) throw InvalidInput("length_scales must be positive");
}

std::size_t LocationHash::operator()(const Location& loc) const noexcept {
  std::uint64_t h = 0x84222325cbf29ce4ULL;
  for (double c : loc.coords) {
    if (c == 0.0) c = 0.0;  // fold -0.0
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(c));
    std::memcpy(&bits, &c, sizeof(bits));
    h = splitmix64(h ^ bits);
  }
  return static_cast<std::size_t>(h);
}

void ObservationSet::append(std::span<const Location> locs, std::span<const double> z) {
  if (locs.size() != z.size()) throw InvalidInput("locations and measurements differ in length");
  locations.insert(locations.end(), locs.begin(), locs.end());
  measurements.insert(measurements.end(), z.begin(), z.end());
}

void ObservationSet::append(const Location& loc, double z) {
  locations.push_back(loc);
  measurements.push_back(z);
}

double kernel_cov(const Location& a, const Location& b, const KernelParams& params) {
  const std::size_t d = params.length_scales.size();
  if (a.dimension() != d || b.dimension() != d)
    throw InvalidInput("location dimension does not match kernel length_scales");
  double r2 = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double u = (a.coords[i] - b.coords[i]) / params.length_scales[i];
    r2 += u * u;
  }
  return params.signal_variance * std::exp(-0.5 * r2);
}

Eigen::MatrixXd cross_covariance(std::span<const Location> a, std::span<const Location> b,
                                 const KernelParams& params) {
  Eigen::MatrixXd k(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) k(i, j) = kernel_cov(a[i], b[j], params);
  return k;
}

Eigen::MatrixXd noisy_gram(std::span<const Location> a, const KernelParams& params) {
  Eigen::MatrixXd k(a.size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    k(i, i) = kernel_cov(a[i], a[i], params) + params.noise_variance;
    for (std::size_t j = 0; j < i; ++j) k(i, j) = k(j, i) = kernel_cov(a[i], a[j], params);
  }
  return k;
}

namespace {

std::string condition_report(const Eigen::MatrixXd& m) {
  std::ostringstream os;
  os << "cholesky failed on " << m.rows() << "x" << m.cols() << " matrix";
  if (m.size() > 0) {
    os << " (diag min " << m.diagonal().minCoeff() << ", max " << m.diagonal().maxCoeff() << ")";
  }
  return os.str();
}

}  // namespace

Eigen::MatrixXd robust_cholesky(const Eigen::MatrixXd& m, double jitter_scale) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::MatrixXd shifted = m;
  shifted.diagonal().array() += 1e-10 * (jitter_scale > 0.0 ? jitter_scale : 1.0);
  llt.compute(shifted);
  if (llt.info() != Eigen::Success) throw NumericalError(condition_report(m));
  return llt.matrixL();
}

double info_gain(const Eigen::MatrixXd& covariance, double noise_variance) {
  const Eigen::Index k = covariance.rows();
  Eigen::MatrixXd shifted = covariance / noise_variance;
  shifted.diagonal().array() += 1.0;
  Eigen::LLT<Eigen::MatrixXd> llt(shifted);
  if (llt.info() != Eigen::Success) throw NumericalError(condition_report(shifted));
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) logdet += std::log(llt.matrixLLT()(i, i));
  // 0.5 * log|M| == sum log diag(chol(M))
  if (!std::isfinite(logdet)) throw NumericalError("non-finite information gain");
  return logdet;
}

double info_gain(const PosteriorBelief& belief, double noise_variance) {
  return info_gain(belief.covariance, noise_variance);
}

ConditionedGp::ConditionedGp(KernelParams params) : params_(std::move(params)) {
  params_.validate();
  factor_.resize(0, 0);
  residual_.resize(0);
}

ConditionedGp::ConditionedGp(KernelParams params, const ObservationSet& data)
    : ConditionedGp(std::move(params)) {
  append(data.locations, data.measurements);
}

void ConditionedGp::append(std::span<const Location> locs, std::span<const double> z) {
  if (locs.size() != z.size()) throw InvalidInput("locations and measurements differ in length");
  if (locs.empty()) return;
  const Eigen::Index n = static_cast<Eigen::Index>(locations_.size());
  const Eigen::Index k = static_cast<Eigen::Index>(locs.size());

  Eigen::MatrixXd cross = whitened_cross(locs);  // n x k
  Eigen::MatrixXd schur = noisy_gram(locs, params_);
  if (n > 0) schur.noalias() -= cross.transpose() * cross;
  schur = 0.5 * (schur + schur.transpose());
  Eigen::MatrixXd block = robust_cholesky(schur, params_.signal_variance);

  Eigen::VectorXd centred(k);
  for (Eigen::Index i = 0; i < k; ++i) centred(i) = z[i] - params_.prior_mean;
  if (n > 0) centred.noalias() -= cross.transpose() * residual_;
  Eigen::VectorXd tail = block.triangularView<Eigen::Lower>().solve(centred);

  Eigen::MatrixXd grown = Eigen::MatrixXd::Zero(n + k, n + k);
  grown.topLeftCorner(n, n) = factor_;
  grown.bottomLeftCorner(k, n) = cross.transpose();
  grown.bottomRightCorner(k, k) = block;
  factor_ = std::move(grown);

  Eigen::VectorXd r(n + k);
  r.head(n) = residual_;
  r.tail(k) = tail;
  residual_ = std::move(r);

  locations_.insert(locations_.end(), locs.begin(), locs.end());
}

Eigen::MatrixXd ConditionedGp::whitened_cross(std::span<const Location> targets) const {
  if (locations_.empty()) return Eigen::MatrixXd(0, static_cast<Eigen::Index>(targets.size()));
  Eigen::MatrixXd k = cross_covariance(locations_, targets, params_);
  factor_.triangularView<Eigen::Lower>().solveInPlace(k);
  return k;
}

PosteriorBelief ConditionedGp::predict(std::span<const Location> targets) const {
  if (targets.empty()) throw InvalidInput("posterior needs at least one target");
  PosteriorBelief belief;
  const Eigen::Index k = static_cast<Eigen::Index>(targets.size());
  belief.covariance = noisy_gram(targets, params_);
  belief.mean = Eigen::VectorXd::Constant(k, params_.prior_mean);
  if (!locations_.empty()) {
    Eigen::MatrixXd cross = whitened_cross(targets);
    belief.mean.noalias() += cross.transpose() * residual_;
    belief.covariance.noalias() -= cross.transpose() * cross;
    belief.covariance = 0.5 * (belief.covariance + belief.covariance.transpose());
  }
  belief.chol = robust_cholesky(belief.covariance, params_.signal_variance);
  return belief;
}

PosteriorBelief posterior(std::span<const Location> targets, const ObservationSet& data,
                          const KernelParams& params) {
  return ConditionedGp(params, data).predict(targets);
}

void standard_normal_fill(Eigen::MatrixXd& out, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) = normal(rng);
}

std::vector<Eigen::VectorXd> sample_outputs(const PosteriorBelief& belief, std::size_t n, Rng& rng,
                                            const InnovationSource& innovations) {
  if (n == 0) throw InvalidInput("sample count must be at least 1");
  Eigen::MatrixXd x(belief.size(), static_cast<Eigen::Index>(n));
  innovations(x, rng);
  Eigen::MatrixXd z = belief.chol.triangularView<Eigen::Lower>() * x;
  std::vector<Eigen::VectorXd> out;
  out.reserve(n);
  for (Eigen::Index j = 0; j < z.cols(); ++j) out.emplace_back(belief.mean + z.col(j));
  return out;
}

}  // namespace macrogpo
