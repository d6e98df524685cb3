#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "branchfilter/estimators.hpp"
#include "branchfilter/model.hpp"
#include "branchfilter/sampling.hpp"

namespace branchfilter {

// Joint sequential estimation of the hidden population and the parameter
// pair theta = (pi, lambda) with the Liu-West auxiliary particle filter:
// fixed parameters ride along as particle coordinates and are refreshed
// each step from a shrinkage Gaussian kernel whose location
//   m_i = a*theta_i + (1-a)*theta_bar,  a = (3*delta - 1) / (2*delta),
// and spread h^2 * V_t (h^2 = 1 - a^2) preserve the parameter cloud's
// first two moments. Each step: (1) point-predict the next state per
// particle, (2) draw an auxiliary particle index against weight times
// predictive likelihood at those point estimates, (3) refresh theta from
// the selected kernel component, (4) advance the state through the
// transition, (5) reweight by actual-over-predictive likelihood.

enum class TransitionMode { conditional, marginal };
enum class KernelSpace { transformed, natural };
enum class ResamplingScheme { multinomial, systematic };

struct X0Prior {
  enum class Kind { known, discrete_uniform };
  Kind kind = Kind::known;
  count_t value = 100;  // known case
  count_t lo = 0, hi = 0;  // discrete uniform {lo..hi}

  static X0Prior known(count_t x0) { return {Kind::known, x0, 0, 0}; }
  static X0Prior discrete_uniform(count_t lo, count_t hi) {
    return {Kind::discrete_uniform, 0, lo, hi};
  }
};

struct FilterConfig {
  int n_particles = 2000;
  double delta = 0.95;  // kernel discount; a and h^2 derive from it
  double phi = 0.5;
  X0Prior x0 = X0Prior::known(100);
  TransitionMode transition = TransitionMode::conditional;
  KernelSpace kernel_space = KernelSpace::transformed;
  // Systematic auxiliary selection is the default: at the stock particle
  // budget the multinomial scheme's extra resampling noise visibly thickens
  // posterior tails relative to exact enumeration (see tests).
  ResamplingScheme resampling = ResamplingScheme::systematic;
  double jitter = 0.0;  // added to V_t's diagonal before kernel sampling
  std::uint64_t seed = 0;
  int threads = 1;

  double shrinkage_a() const { return (3.0 * delta - 1.0) / (2.0 * delta); }
  double kernel_h2() const {
    const double a = shrinkage_a();
    return 1.0 - a * a;
  }
  void validate() const;
};

// (a, h^2) for a given discount delta in (0, 1].
std::pair<double, double> shrinkage_constants(double delta);

struct Particle {
  count_t x;
  Eigen::Vector2d theta;    // natural coordinates (pi, lambda)
  Eigen::Vector2d theta_k;  // kernel coordinates; equals theta in natural mode
};

struct ParticleCloud {
  std::vector<Particle> particles;
  Eigen::VectorXd weights;  // normalized
  int t = 0;                // generation index of the last assimilated obs
  count_t z_t = 0;          // the observation assimilated at time t
  double ess = 0.0;
  double log_evidence_increment = 0.0;
  int unique_ancestors = 0;  // distinct auxiliary indices behind this cloud

  // Parameter cloud in natural coordinates, for posterior summaries.
  WeightedSample2D theta_sample() const;
};

struct StepSummary {
  int t;
  double ess;
  double mean_pi, var_pi;
  double mean_lambda, var_lambda;
  double mean_x, var_x;
  double log_evidence_increment;
  int unique_ancestors;
};

struct FilterDiagnostics {
  int resample_count = 0;  // auxiliary selections performed (one per step)
  double min_ess = 0.0;
  std::vector<int> low_ess_steps;  // steps with ess below 5% of N
};

struct FilterResult {
  ParticleCloud final_cloud;
  std::vector<StepSummary> history;  // one entry per assimilated observation
  FilterDiagnostics diagnostics;
};

// Initial cloud: pi stratified-uniform over the feasible arc of the curve
// lambda = (m_tilde - (1-pi)) / (1-pi + phi*pi) with m_tilde taken from the
// full observed series, x0 from its prior, followed by assimilation of Z_0
// through a binomial reweighting. Deterministic given config.seed.
ParticleCloud init_cloud(const ObservedSeries& series,
                         const FilterConfig& config);

// One auxiliary-particle-filter step assimilating z_next. The conditional
// transition mode consumes the observation stored in cloud.z_t. Output draw
// j always uses the stream (seed, t*2^32 + j), so results are identical at
// any thread count.
ParticleCloud lw_step(const ParticleCloud& cloud, count_t z_next,
                      const FilterConfig& config);

// init_cloud followed by one lw_step per remaining observation.
FilterResult run_filter(const ObservedSeries& series,
                        const FilterConfig& config);

StepSummary summarize_cloud_step(const ParticleCloud& cloud);

}  // namespace branchfilter
