#include "branchfilter/estimators.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "branchfilter/errors.hpp"

namespace branchfilter {

void ObservedSeries::validate() const {
  if (z.empty()) throw SeriesError("ObservedSeries: empty series");
  for (count_t v : z) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw SeriesError("ObservedSeries: counts must be finite and >= 0");
    }
  }
}

double m_bar(const ObservedSeries& series, int t) {
  series.validate();
  if (t < 1 || t > series.generations()) {
    throw std::out_of_range("m_bar: generation index out of range");
  }
  return series.z[static_cast<std::size_t>(t)] /
         (series.z[static_cast<std::size_t>(t) - 1] + 1.0);
}

double m_tilde(const ObservedSeries& series) {
  series.validate();
  const int n = series.generations();
  if (n < 1) throw SeriesError("m_tilde: need at least two generations");
  const double num = std::accumulate(series.z.begin() + 1, series.z.end(), 0.0);
  const double den = std::accumulate(series.z.begin(), series.z.end() - 1, 0.0);
  if (den <= 0.0) throw SeriesError("m_tilde: denominator sum is zero");
  return num / den;
}

OddRatioEstimate m_hat_odd(const ObservedSeries& series) {
  series.validate();
  const int n = series.generations();
  if (n < 1) throw SeriesError("m_hat_odd: need at least two generations");
  const int n0 = (n - 1) / 2;
  double num = 0.0, den = 0.0;
  for (int k = 0; k <= n0; ++k) {
    num += series.z[static_cast<std::size_t>(2 * k + 1)];
    den += series.z[static_cast<std::size_t>(2 * k)];
  }
  if (den <= 0.0) throw SeriesError("m_hat_odd: denominator sum is zero");
  return {num / den, n0, den};
}

double gamma_hat_sq(const ObservedSeries& series) {
  const double center = m_tilde(series);
  const int n = series.generations();
  double sum = 0.0;
  for (int k = 1; k <= n; ++k) {
    const double zprev = series.z[static_cast<std::size_t>(k) - 1];
    const double ratio = series.z[static_cast<std::size_t>(k)] / (zprev + 1.0);
    const double dev = ratio - center;
    sum += (zprev + 1.0) * dev * dev;
  }
  return sum / n;
}

double gamma_hat_odd_sq(const ObservedSeries& series) {
  const OddRatioEstimate odd = m_hat_odd(series);
  if (odd.n0 < 1) {
    throw SeriesError("gamma_hat_odd_sq: needs n0 >= 1 (at least 4 entries)");
  }
  double sum = 0.0;
  for (int k = 0; k <= odd.n0; ++k) {
    const double zeven = series.z[static_cast<std::size_t>(2 * k)];
    const double ratio =
        series.z[static_cast<std::size_t>(2 * k + 1)] / (zeven + 1.0);
    const double dev = ratio - odd.estimate;
    sum += (zeven + 1.0) * dev * dev;
  }
  return sum / odd.n0;
}

namespace {

void check_level(double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw std::domain_error("confidence level must lie in (0, 1)");
  }
}

}  // namespace

ConfidenceInterval ci_m_from(double m_odd, double gamma2_odd, double denom_sum,
                             double level) {
  check_level(level);
  if (!(gamma2_odd >= 0.0) || !(denom_sum > 0.0)) {
    throw std::domain_error("ci_m_from: needs gamma2 >= 0 and denom_sum > 0");
  }
  const double zq = normal_quantile(0.5 * (1.0 + level));
  const double half = zq * std::sqrt(gamma2_odd / denom_sum);
  return {m_odd - half, m_odd + half};
}

ConfidenceInterval ci_m(const ObservedSeries& series, double level) {
  const OddRatioEstimate odd = m_hat_odd(series);
  return ci_m_from(odd.estimate, gamma_hat_odd_sq(series), odd.denom_sum, level);
}

ConfidenceInterval ci_gamma2_from(double gamma2_odd, int n0, double level) {
  check_level(level);
  if (n0 < 1) throw std::domain_error("ci_gamma2_from: needs n0 >= 1");
  const double zq = normal_quantile(0.5 * (1.0 + level));
  const double half = zq * std::sqrt(2.0) * gamma2_odd / std::sqrt(n0);
  return {std::max(gamma2_odd - half, 0.0), gamma2_odd + half};
}

ConfidenceInterval ci_gamma2(const ObservedSeries& series, double level) {
  const OddRatioEstimate odd = m_hat_odd(series);
  return ci_gamma2_from(gamma_hat_odd_sq(series), odd.n0, level);
}

PiLambdaEstimate estimate_pi_lambda(const ObservedSeries& series, double phi,
                                    bool use_odd_pair) {
  double m_est, g2_est;
  if (use_odd_pair) {
    m_est = m_hat_odd(series).estimate;
    g2_est = gamma_hat_odd_sq(series);
  } else {
    m_est = m_tilde(series);
    g2_est = gamma_hat_sq(series);
  }
  try {
    const MomentInversion inv = invert_moments(m_est, g2_est, phi);
    return {true, inv.pi, inv.lambda, inv.multiple_roots()};
  } catch (const InfeasibleError&) {
    return {false, 0.0, 0.0, false};
  }
}

EstimateReport estimate_report(const ObservedSeries& series, double phi,
                               double level, bool use_odd_pair) {
  EstimateReport report;
  const OddRatioEstimate odd = m_hat_odd(series);
  report.m_bar = m_bar(series, series.generations());
  report.m_tilde = m_tilde(series);
  report.m_hat_odd = odd.estimate;
  report.gamma_hat_sq = gamma_hat_sq(series);
  report.gamma_hat_odd_sq = gamma_hat_odd_sq(series);
  report.ci_m = ci_m_from(odd.estimate, report.gamma_hat_odd_sq, odd.denom_sum,
                          level);
  report.ci_gamma2 = ci_gamma2_from(report.gamma_hat_odd_sq, odd.n0, level);
  report.pi_lambda = estimate_pi_lambda(series, phi, use_odd_pair);
  report.n0 = odd.n0;
  report.level = level;
  return report;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("normal_quantile: p must lie in (0, 1)");
  }
  // Acklam's rational approximation.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley refinement against the exact CDF.
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

}  // namespace branchfilter
