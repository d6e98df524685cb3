#include "branchfilter/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "branchfilter/errors.hpp"

namespace branchfilter {

namespace {

constexpr double kMaxExactRate = 0x1.0p50;  // beyond this the lattice degrades

// Sequential inversion, exact for small rates (p0 >= exp(-10)).
std::uint64_t poisson_inversion(double rate, RngStream& rng) {
  const double u = rng.uniform01();
  double p = std::exp(-rate);
  double cdf = p;
  std::uint64_t k = 0;
  while (u > cdf) {
    ++k;
    p *= rate / static_cast<double>(k);
    cdf += p;
    if (p == 0.0) break;  // exhausted double precision in the far tail
  }
  return k;
}

// Hormann's PTRS transformed-rejection sampler, exact for rate >= 10.
std::uint64_t poisson_ptrs(double rate, RngStream& rng) {
  const double slam = std::sqrt(rate);
  const double loglam = std::log(rate);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = rng.uniform01() - 0.5;
    const double v = rng.uniform_open();
    const double us = 0.5 - std::abs(u);
    const double kf = std::floor((2.0 * a / us + b) * u + rate + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(kf);
    if (kf < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
        kf * loglam - rate - std::lgamma(kf + 1.0)) {
      return static_cast<std::uint64_t>(kf);
    }
  }
}

// Sequential inversion for binomial, exact when n*p is small (p <= 1/2).
std::uint64_t binomial_inversion(std::uint64_t n, double p, RngStream& rng) {
  const double q = 1.0 - p;
  const double s = p / q;
  const double u = rng.uniform01();
  double f = std::exp(static_cast<double>(n) * std::log1p(-p));
  double cdf = f;
  std::uint64_t k = 0;
  while (u > cdf && k < n) {
    f *= s * static_cast<double>(n - k) / static_cast<double>(k + 1);
    ++k;
    cdf += f;
    if (f == 0.0) break;
  }
  return k;
}

// Hormann's BTRS rejection sampler; requires p <= 1/2 and n*p >= 10.
std::uint64_t binomial_btrs(std::uint64_t n, double p, RngStream& rng) {
  const double nd = static_cast<double>(n);
  const double q = 1.0 - p;
  const double spq = std::sqrt(nd * p * q);
  const double b = 1.15 + 2.53 * spq;
  const double a = -0.0873 + 0.0248 * b + 0.01 * p;
  const double c = nd * p + 0.5;
  const double vr = 0.92 - 4.2 / b;
  const double alpha = (2.83 + 5.1 / b) * spq;
  const double lpq = std::log(p / q);
  const double m = std::floor((nd + 1.0) * p);
  const double h = std::lgamma(m + 1.0) + std::lgamma(nd - m + 1.0);
  for (;;) {
    const double u = rng.uniform01() - 0.5;
    const double v = rng.uniform_open();
    const double us = 0.5 - std::abs(u);
    const double kf = std::floor((2.0 * a / us + b) * u + c);
    if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(kf);
    if (kf < 0.0 || kf > nd) continue;
    const double lhs = std::log(v * alpha / (a / (us * us) + b));
    const double rhs = h - std::lgamma(kf + 1.0) - std::lgamma(nd - kf + 1.0) +
                       (kf - m) * lpq;
    if (lhs <= rhs) return static_cast<std::uint64_t>(kf);
  }
}

}  // namespace

std::uint64_t poisson_sample(double rate, RngStream& rng) {
  if (!(rate >= 0.0) || !std::isfinite(rate)) {
    throw std::domain_error("poisson_sample: rate must be finite and >= 0");
  }
  if (rate == 0.0) return 0;
  if (rate >= kMaxExactRate) {
    throw std::domain_error("poisson_sample: rate too large for exact sampling");
  }
  return rate < 10.0 ? poisson_inversion(rate, rng) : poisson_ptrs(rate, rng);
}

std::uint64_t binomial_sample(std::uint64_t n, double p, RngStream& rng) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::domain_error("binomial_sample: p must lie in [0, 1]");
  }
  if (n == 0 || p == 0.0) return 0;
  if (p == 1.0) return n;
  if (static_cast<double>(n) >= kMaxExactRate) {
    throw std::domain_error("binomial_sample: n too large for exact sampling");
  }
  if (p > 0.5) return n - binomial_sample(n, 1.0 - p, rng);
  const double np = static_cast<double>(n) * p;
  return np < 10.0 ? binomial_inversion(n, p, rng) : binomial_btrs(n, p, rng);
}

double binomial_log_pmf(double size, double count, double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("binomial_log_pmf: p must lie in (0, 1)");
  }
  if (!(size >= 0.0) || !(count >= 0.0)) {
    throw std::domain_error("binomial_log_pmf: size and count must be >= 0");
  }
  if (count > size) return -std::numeric_limits<double>::infinity();
  return std::lgamma(size + 1.0) - std::lgamma(count + 1.0) -
         std::lgamma(size - count + 1.0) + count * std::log(p) +
         (size - count) * std::log1p(-p);
}

namespace detail {

double kahan_sum(std::span<const double> values) noexcept {
  double sum = 0.0, comp = 0.0;
  for (double v : values) {
    const double y = v - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  return sum;
}

Eigen::Matrix2d psd_sqrt(const Eigen::Matrix2d& m) {
  const double asym = std::abs(m(0, 1) - m(1, 0));
  const double scale = m.cwiseAbs().maxCoeff();
  if (asym > 1e-9 * std::max(1.0, scale)) {
    throw std::domain_error("psd_sqrt: covariance is not symmetric");
  }
  Eigen::Matrix2d sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(sym);
  Eigen::Vector2d ev = eig.eigenvalues();
  for (int i = 0; i < 2; ++i) {
    if (ev(i) < -1e-10) {
      throw std::domain_error("psd_sqrt: covariance has a negative eigenvalue");
    }
    ev(i) = std::max(ev(i), 0.0);
  }
  return eig.eigenvectors() * ev.cwiseSqrt().asDiagonal();
}

}  // namespace detail

Eigen::Vector2d mvn2_sample(const Eigen::Vector2d& mean,
                            const Eigen::Matrix2d& cov, RngStream& rng) {
  if (cov.isZero(0.0)) return mean;
  const Eigen::Matrix2d a = detail::psd_sqrt(cov);
  Eigen::Vector2d z(rng.normal(), rng.normal());
  return mean + a * z;
}

std::size_t index_from_cdf(std::span<const double> cdf, double u) noexcept {
  const double target = u * cdf.back();
  auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
  if (it == cdf.end()) --it;
  return static_cast<std::size_t>(it - cdf.begin());
}

std::size_t resample_index(std::span<const double> weights, RngStream& rng) {
  if (weights.empty()) {
    throw std::invalid_argument("resample_index: empty weight vector");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) {
      throw std::invalid_argument("resample_index: negative weight");
    }
    total += w;
  }
  if (total == 0.0) {
    throw DegeneracyError("resample_index: all weights are zero");
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("resample_index: weights must sum to 1");
  }
  const double u = rng.uniform01() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] > 0.0) last_positive = i;
    acc += weights[i];
    if (u < acc) return i;
  }
  return last_positive;
}

void WeightedSample2D::validate() const {
  if (points.rows() < 1 || points.rows() != weights.size()) {
    throw std::invalid_argument(
        "WeightedSample2D: points and weights must have equal length >= 1");
  }
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (!(weights(i) >= 0.0)) {
      throw std::invalid_argument("WeightedSample2D: negative weight");
    }
  }
  const double total =
      detail::kahan_sum(std::span<const double>(weights.data(),
                                                static_cast<std::size_t>(weights.size())));
  if (std::abs(total - 1.0) > 1e-12) {
    throw std::invalid_argument("WeightedSample2D: weights must sum to 1");
  }
}

void WeightedSample2D::normalize() {
  const double total =
      detail::kahan_sum(std::span<const double>(weights.data(),
                                                static_cast<std::size_t>(weights.size())));
  if (total <= 0.0) {
    throw DegeneracyError("WeightedSample2D: total weight is zero");
  }
  weights /= total;
}

std::pair<Eigen::Vector2d, Eigen::Matrix2d> weighted_mean_cov(
    const WeightedSample2D& sample) {
  sample.validate();
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (Eigen::Index i = 0; i < sample.weights.size(); ++i) {
    mean += sample.weights(i) * sample.points.row(i).transpose();
  }
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (Eigen::Index i = 0; i < sample.weights.size(); ++i) {
    const Eigen::Vector2d d = sample.points.row(i).transpose() - mean;
    cov += sample.weights(i) * d * d.transpose();
  }
  return {mean, cov};
}

}  // namespace branchfilter
