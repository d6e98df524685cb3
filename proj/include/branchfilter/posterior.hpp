#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "branchfilter/filter.hpp"
#include "branchfilter/sampling.hpp"

namespace branchfilter {

// Gaussian-kernel density on a uniform grid, normalized so the trapezoid
// integral equals 1.
struct DensityGrid1D {
  Eigen::VectorXd points;   // ascending
  Eigen::VectorXd density;  // nonnegative
  double bandwidth;
};

struct HpdInterval {
  double lo;
  double hi;
};

// Highest-density region at a given level; possibly a union of intervals.
struct HpdSet {
  double level;
  std::vector<HpdInterval> intervals;  // disjoint, ascending
  double attained_mass;
};

struct DensityGrid2D {
  Eigen::VectorXd x;        // first-axis grid (pi)
  Eigen::VectorXd y;        // second-axis grid (lambda)
  Eigen::MatrixXd density;  // density(i, j) at (x(i), y(j))
  Eigen::Vector2d bandwidth;
};

struct PosteriorSummary {
  Eigen::Vector2d mean;         // squared-error-loss point estimate
  Eigen::Matrix2d cov;
  Eigen::Vector2d joint_mode;   // 0-1-loss point estimate (joint grid argmax)
  double marginal_mode_pi;
  double marginal_mode_lambda;
  HpdSet hpd_pi;
  HpdSet hpd_lambda;
  DensityGrid1D marginal_pi;
  DensityGrid1D marginal_lambda;
  DensityGrid2D joint;
};

//! Weighted Gaussian KDE on a uniform grid spanning [min-3b, max+3b], with
//! the weighted Silverman bandwidth b (effective sample size in place of
//! N). Throws PointMassError when the values have no spread.
DensityGrid1D weighted_kde_1d(std::span<const double> values,
                              std::span<const double> weights, int grid_size);

//! Highest-density region by threshold descent: grid cells are admitted in
//! decreasing density order (ties resolved left to right) until the target
//! mass is reached. On a uniform grid this is the minimum-length union of
//! cells at that mass.
HpdSet hpd_from_density(const DensityGrid1D& grid, double level);

//! Full posterior summary of a parameter cloud: weighted mean/covariance in
//! natural coordinates, marginal KDEs with HPD sets, and a joint density
//! grid whose argmax is the reported joint mode.
PosteriorSummary summarize(const ParticleCloud& cloud, int grid_size = 512,
                           int joint_grid_size = 128, double hpd_level = 0.95);

}  // namespace branchfilter
