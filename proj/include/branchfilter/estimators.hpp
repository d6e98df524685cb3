#pragma once

#include <vector>

#include "branchfilter/model.hpp"

namespace branchfilter {

// Detected counts Z_0..Z_n; indices are generations.
struct ObservedSeries {
  std::vector<count_t> z;

  // Number of generations n (length - 1).
  int generations() const { return static_cast<int>(z.size()) - 1; }
  void validate() const;  // length >= 1, entries finite and >= 0
};

struct ConfidenceInterval {
  double lo;
  double hi;
};

// Odd/even ratio estimate together with the pieces its CLT normalization
// needs downstream.
struct OddRatioEstimate {
  double estimate;
  int n0;            // floor((n - 1) / 2)
  double denom_sum;  // sum of the even-index counts
};

struct PiLambdaEstimate {
  bool feasible;
  double pi;
  double lambda;
  bool multiple_roots;
};

// Full report emitted by the estimate pipeline.
struct EstimateReport {
  double m_bar;                  // last single-step ratio Z_n / (Z_{n-1}+1)
  double m_tilde;                // ratio of partial sums
  double m_hat_odd;              // odd/even split ratio
  double gamma_hat_sq;           // full-series variance-parameter estimate
  double gamma_hat_odd_sq;       // odd/even variance-parameter estimate
  ConfidenceInterval ci_m;       // CLT interval for the offspring mean
  ConfidenceInterval ci_gamma2;  // CLT interval for gamma2
  PiLambdaEstimate pi_lambda;    // moment inversion, may be infeasible
  int n0;
  double level;
};

// Single-step ratio Z_t / (Z_{t-1} + 1); the +1 keeps it defined at zero.
double m_bar(const ObservedSeries& series, int t);

// Ratio of partial sums, sum(Z_1..Z_n) / sum(Z_0..Z_{n-1}).
double m_tilde(const ObservedSeries& series);

// Odd-over-even partial-sum ratio with k running to n0 = floor((n-1)/2).
OddRatioEstimate m_hat_odd(const ObservedSeries& series);

// (1/n) sum_k (Z_{k-1}+1) (mbar_k - mtilde)^2, centered at m_tilde.
double gamma_hat_sq(const ObservedSeries& series);

// (1/n0) sum_k (Z_2k+1) (Z_{2k+1}/(Z_2k+1) - mhat_odd)^2.
double gamma_hat_odd_sq(const ObservedSeries& series);

// mhat_odd +/- z * sqrt(gamma_hat_odd_sq / denom_sum).
ConfidenceInterval ci_m(const ObservedSeries& series, double level);
ConfidenceInterval ci_m_from(double m_odd, double gamma2_odd, double denom_sum,
                             double level);

// gamma_hat_odd_sq +/- z * sqrt(2) * gamma_hat_odd_sq / sqrt(n0), floored
// at zero.
ConfidenceInterval ci_gamma2(const ObservedSeries& series, double level);
ConfidenceInterval ci_gamma2_from(double gamma2_odd, int n0, double level);

// Plug-in inversion of the moment estimates; infeasibility is a value, not
// an error. use_odd_pair selects (m_hat_odd, gamma_hat_odd_sq) instead of
// the default (m_tilde, gamma_hat_sq).
PiLambdaEstimate estimate_pi_lambda(const ObservedSeries& series, double phi,
                                    bool use_odd_pair = false);

EstimateReport estimate_report(const ObservedSeries& series, double phi,
                               double level = 0.95, bool use_odd_pair = false);

// Standard normal quantile (Acklam's rational approximation polished with
// one Halley step); |error| < 1e-13 over (0, 1).
double normal_quantile(double p);

}  // namespace branchfilter
