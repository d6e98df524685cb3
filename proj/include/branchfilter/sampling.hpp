#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <utility>

#include "branchfilter/rng.hpp"

namespace branchfilter {

//! Exact Poisson(rate) draw. Sequential inversion below rate 10, Hormann's
//! transformed rejection (PTRS) above. Valid for rate < 2^50; beyond that
//! the integer lattice is no longer exactly representable and the call
//! throws std::domain_error (see transition_sample for the large-rate path).
std::uint64_t poisson_sample(double rate, RngStream& rng);

//! Exact Binomial(n, p) draw. Inversion for n*min(p,1-p) < 10, Hormann's
//! BTRS rejection otherwise; p > 1/2 is handled by complement symmetry.
std::uint64_t binomial_sample(std::uint64_t n, double p, RngStream& rng);

//! log of the Binomial(count | size, p) mass, with real-valued size through
//! the log-gamma continuous extension. Returns -infinity when count > size.
//! Requires 0 < p < 1 and size >= 0.
double binomial_log_pmf(double size, double count, double p);

//! Bivariate normal draw factorized through an eigendecomposition of cov,
//! so rank-deficient covariances are legal. Eigenvalues in [-1e-10, 0) are
//! clamped to zero; anything more negative is a domain_error.
Eigen::Vector2d mvn2_sample(const Eigen::Vector2d& mean,
                            const Eigen::Matrix2d& cov, RngStream& rng);

//! One multinomial draw: returns index i with probability weights[i].
//! Weights must be nonnegative and sum to 1 within 1e-9; a sum of zero is
//! reported as a DegeneracyError.
std::size_t resample_index(std::span<const double> weights, RngStream& rng);

//! Inverse-CDF lookup against precomputed cumulative weights (ascending,
//! back() == total mass). Shared by the multinomial and systematic schemes.
std::size_t index_from_cdf(std::span<const double> cdf, double u) noexcept;

// Weighted planar sample, the carrier for particle parameter clouds.
struct WeightedSample2D {
  Eigen::Matrix<double, Eigen::Dynamic, 2> points;
  Eigen::VectorXd weights;

  // Equal lengths >= 1, nonnegative weights summing to 1 within 1e-12.
  void validate() const;
  // Rescales weights to total mass 1 (compensated summation).
  void normalize();
};

//! Weighted first and second moments: mean = sum w_i p_i and
//! cov = sum w_i (p_i - mean)(p_i - mean)^T. The covariance is symmetric
//! positive semidefinite by construction.
std::pair<Eigen::Vector2d, Eigen::Matrix2d> weighted_mean_cov(
    const WeightedSample2D& sample);

namespace detail {
// Compensated (Kahan) sum; keeps normalization checks tight for large N.
double kahan_sum(std::span<const double> values) noexcept;
// PSD square root A with A*A^T = m, via eigendecomposition with the same
// clamping policy as mvn2_sample.
Eigen::Matrix2d psd_sqrt(const Eigen::Matrix2d& m);
}  // namespace detail

}  // namespace branchfilter
