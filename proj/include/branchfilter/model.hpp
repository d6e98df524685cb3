#pragma once

#include <utility>
#include <vector>

#include "branchfilter/rng.hpp"

namespace branchfilter {

// Population counts are carried as integer-valued doubles: supercritical
// runs overflow 64-bit integers within a few hundred generations, and the
// estimators only ever consume ratios of counts.
using count_t = double;

// Parameter triple of the partially observed epidemic branching model:
// per-individual detection probability pi, Poisson infection rate lambda,
// and the known fraction phi of the detection interval during which a
// detected case remains infective.
struct ModelParams {
  double pi;
  double lambda;
  double phi;

  // 0 < pi < 1, lambda > 0 and finite, 0 <= phi <= 1.
  void validate() const;
};

// Offspring moments of the detected/undetected mixture and the variance
// parameter gamma2 that normalizes the ratio estimator's CLT.
struct MomentSet {
  double m_plus;    // undetected offspring mean, lambda + 1
  double s2_plus;   // undetected offspring variance, lambda
  double m_minus;   // detected offspring mean, phi * lambda
  double s2_minus;  // detected offspring variance, phi * lambda
  double m;         // mixture offspring mean
  double s2;        // mixture offspring variance
  double gamma2;    // asymptotic variance parameter
};

// Paired hidden/observed series {(X_t, Z_t)}, absorbing at extinction.
struct Trajectory {
  std::vector<count_t> x;
  std::vector<count_t> z;

  std::size_t length() const { return x.size(); }
  // Equal lengths, 0 <= z <= x, zeros absorbing.
  void validate() const;
};

// Result of inverting (m, gamma2) back to parameters. The moment map can
// carry two distinct (pi, lambda) pairs to the same (m, gamma2); root_count
// reports how many solutions exist on the feasible arc and (pi, lambda) is
// the smallest-pi solution among those of minimal round-trip residual.
struct MomentInversion {
  double pi;
  double lambda;
  int root_count;
  bool multiple_roots() const { return root_count > 1; }
};

// All moment fields for a parameter triple; gamma2 here uses the general
// mixture formula, the closed epidemic form lives in gamma2_epidemic so the
// two stay independent routes (their agreement is a permanent regression
// check).
MomentSet compute_moments(const ModelParams& params);

// Literal evaluation of the closed-form epidemic variance parameter
//   (1-pi)*lambda + (1-pi)^2 + (1-pi)*(lambda+1)^2 + phi*lambda*pi.
// `m` is accepted only for signature symmetry with the general route; the
// closed form does not use it. No validation, evaluates anywhere.
double gamma2_epidemic(const ModelParams& params, double m);

// lambda pinned down by the offspring-mean relation
//   lambda = (m - (1 - pi)) / (1 - pi + phi*pi).
// Throws InfeasibleError when the result is not strictly positive or the
// denominator vanishes.
double lambda_from_pi(double m, double pi, double phi);

// Root-finds pi on [1e-6, 1-1e-6] (intersected with the feasible arc) so
// that the curve-constrained gamma2 matches, with bisection on each sign
// change of a 1024-interval scan. Throws InfeasibleError when no root
// exists.
MomentInversion invert_moments(double m, double gamma2, double phi);

// Conditional one-step mean E[X_{t+1} | X_t = x, Z_t = z]:
//   (x - z) + lambda * (x - z + phi * z).
double transition_mean(count_t x, count_t z, const ModelParams& params);

// Conditional one-step draw: (x - z) + Poisson(lambda * (x - z + phi*z)).
// Rates beyond the exact-sampling range switch to a rounded Gaussian with
// matched mean and variance (relative skew < 1e-7 at that scale).
count_t transition_sample(count_t x, count_t z, const ModelParams& params,
                          RngStream& rng);

// Z-marginalized one-step draw: thin x with Binomial(x, pi) first, then
// apply the conditional transition.
count_t transition_sample_marginal(count_t x, const ModelParams& params,
                                   RngStream& rng);

// Simulates a trajectory of length horizon+1 from x0. With
// condition_survival set, re-simulates on a fresh sub-stream per attempt
// until x[horizon] > 0, throwing SurvivalCapError after attempt_cap tries.
Trajectory simulate(const ModelParams& params, count_t x0, int horizon,
                    RngStream& rng, bool condition_survival = false,
                    int attempt_cap = 10000);

// Individual-by-individual one-step draw (each case flips its own detection
// coin, detected cases reproduce at rate phi*lambda, undetected survive and
// reproduce at rate lambda). Slow; kept as an independent oracle for
// transition_sample and simulate.
std::pair<count_t, count_t> brute_force_step(count_t x,
                                             const ModelParams& params,
                                             RngStream& rng);

}  // namespace branchfilter
