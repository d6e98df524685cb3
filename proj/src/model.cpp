#include "branchfilter/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include "branchfilter/errors.hpp"
#include "branchfilter/sampling.hpp"

namespace branchfilter {

namespace {

constexpr double kMaxExactRate = 0x1.0p50;

// Poisson draw that degrades to a rounded Gaussian for astronomical rates.
count_t poisson_count(double rate, RngStream& rng) {
  if (rate < kMaxExactRate) {
    return static_cast<count_t>(poisson_sample(rate, rng));
  }
  const double draw = std::round(rate + std::sqrt(rate) * rng.normal());
  return std::max(draw, 0.0);
}

// Binomial draw with the same large-population policy.
count_t binomial_count(count_t n, double p, RngStream& rng) {
  if (n < kMaxExactRate) {
    return static_cast<count_t>(
        binomial_sample(static_cast<std::uint64_t>(n), p, rng));
  }
  const double mean = n * p;
  const double sd = std::sqrt(n * p * (1.0 - p));
  return std::clamp(std::round(mean + sd * rng.normal()), 0.0, n);
}

void check_step_args(count_t x, count_t z) {
  if (!(x >= 0.0) || !(z >= 0.0) || z > x) {
    throw std::domain_error("transition: requires 0 <= z <= x");
  }
}

}  // namespace

void ModelParams::validate() const {
  if (!(pi > 0.0 && pi < 1.0)) {
    throw std::domain_error("ModelParams: pi must lie in (0, 1)");
  }
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw std::domain_error("ModelParams: lambda must be positive and finite");
  }
  if (!(phi >= 0.0 && phi <= 1.0)) {
    throw std::domain_error("ModelParams: phi must lie in [0, 1]");
  }
}

void Trajectory::validate() const {
  if (x.size() != z.size() || x.empty()) {
    throw std::invalid_argument("Trajectory: x and z must have equal length >= 1");
  }
  bool extinct = false;
  for (std::size_t t = 0; t < x.size(); ++t) {
    if (!(x[t] >= 0.0) || !(z[t] >= 0.0) || z[t] > x[t]) {
      throw std::invalid_argument("Trajectory: requires 0 <= z[t] <= x[t]");
    }
    if (extinct && x[t] != 0.0) {
      throw std::invalid_argument("Trajectory: extinction must be absorbing");
    }
    if (x[t] == 0.0) extinct = true;
  }
}

MomentSet compute_moments(const ModelParams& params) {
  params.validate();
  const double pi = params.pi, lambda = params.lambda, phi = params.phi;
  MomentSet ms;
  ms.m_plus = lambda + 1.0;
  ms.s2_plus = lambda;
  ms.m_minus = phi * lambda;
  ms.s2_minus = phi * lambda;
  ms.m = pi * ms.m_minus + (1.0 - pi) * ms.m_plus;
  const double gap = ms.m_minus - ms.m_plus;
  ms.s2 = pi * ms.s2_minus + (1.0 - pi) * ms.s2_plus + pi * (1.0 - pi) * gap * gap;
  // General mixture route; the closed epidemic form is gamma2_epidemic.
  ms.gamma2 = (1.0 - pi) * ms.m + pi * ms.s2 + (1.0 + pi) * ms.m * ms.m -
              2.0 * pi * ms.m * ms.m_minus;
  return ms;
}

double gamma2_epidemic(const ModelParams& params, double /*m*/) {
  const double pi = params.pi, lambda = params.lambda, phi = params.phi;
  const double q = 1.0 - pi;
  return q * lambda + q * q + q * (lambda + 1.0) * (lambda + 1.0) +
         phi * lambda * pi;
}

double lambda_from_pi(double m, double pi, double phi) {
  const double den = 1.0 - pi + phi * pi;
  if (!(den > 0.0)) {
    throw InfeasibleError("lambda_from_pi: degenerate denominator 1-pi+phi*pi");
  }
  const double lambda = (m - (1.0 - pi)) / den;
  if (!(lambda > 0.0)) {
    throw InfeasibleError("lambda_from_pi: implied lambda is not positive (pi=" +
                          std::to_string(pi) + ", m=" + std::to_string(m) + ")");
  }
  return lambda;
}

namespace {

// gamma2 along the fixed-m curve, as a function of pi alone.
double curve_gamma2(double m, double pi, double phi) {
  const double lambda = lambda_from_pi(m, pi, phi);
  return gamma2_epidemic({pi, lambda, phi}, m);
}

// d/dpi of curve_gamma2, in closed form. Needed to pin down tangent roots:
// when the target gamma2 grazes the curve's peak the residual never changes
// sign, but the derivative still crosses zero transversally there.
double curve_gamma2_deriv(double m, double pi, double phi) {
  const double s = 1.0 - pi;
  const double den = 1.0 - (1.0 - phi) * pi;
  const double num = m - 1.0 + pi;
  const double lambda = num / den;
  const double dlambda = (den + num * (1.0 - phi)) / (den * den);
  return -lambda + s * dlambda - 2.0 * s - (lambda + 1.0) * (lambda + 1.0) +
         2.0 * s * (lambda + 1.0) * dlambda + phi * (lambda + pi * dlambda);
}

double bisect(const std::function<double(double)>& f, double a, double b,
              double fa) {
  for (int it = 0; it < 200 && b - a > 1e-16; ++it) {
    const double c = 0.5 * (a + b);
    const double fc = f(c);
    if (fc == 0.0) return c;
    if (std::signbit(fc) == std::signbit(fa)) {
      a = c;
      fa = fc;
    } else {
      b = c;
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

MomentInversion invert_moments(double m, double gamma2, double phi) {
  if (!(m > 0.0) || !std::isfinite(m)) {
    throw InfeasibleError("invert_moments: m must be positive and finite");
  }
  if (!(gamma2 > 0.0) || !std::isfinite(gamma2)) {
    throw InfeasibleError("invert_moments: gamma2 must be positive and finite");
  }
  if (!(phi >= 0.0 && phi <= 1.0)) {
    throw std::domain_error("invert_moments: phi must lie in [0, 1]");
  }

  constexpr double kEdge = 1e-6;
  // lambda(pi) > 0 on the open arc (max(0, 1-m), 1).
  const double lo = std::max(kEdge, m < 1.0 ? (1.0 - m) + 1e-12 : 0.0);
  const double hi = 1.0 - kEdge;
  if (!(lo < hi)) {
    throw InfeasibleError("invert_moments: feasible arc is empty");
  }

  constexpr int kScan = 1024;
  const std::function<double(double)> residual = [&](double pi) {
    return curve_gamma2(m, pi, phi) - gamma2;
  };

  std::vector<double> roots;
  std::vector<double> scan_pi(kScan + 1), scan_r(kScan + 1);
  int argmax = 0;
  for (int i = 0; i <= kScan; ++i) {
    const double pi = lo + (hi - lo) * static_cast<double>(i) / kScan;
    const double r = residual(pi);
    scan_pi[static_cast<std::size_t>(i)] = pi;
    scan_r[static_cast<std::size_t>(i)] = r;
    if (r > scan_r[static_cast<std::size_t>(argmax)]) argmax = i;
    if (r == 0.0) {
      roots.push_back(pi);
    } else if (i > 0 && scan_r[static_cast<std::size_t>(i) - 1] != 0.0 &&
               std::signbit(r) != std::signbit(scan_r[static_cast<std::size_t>(i) - 1])) {
      roots.push_back(bisect(residual, scan_pi[static_cast<std::size_t>(i) - 1], pi,
                             scan_r[static_cast<std::size_t>(i) - 1]));
    }
  }

  if (roots.empty()) {
    // The residual may graze zero at the curve's interior peak without a
    // sign change at scan resolution. Locate the peak from the analytic
    // derivative and split the bracket there.
    const int il = std::max(argmax - 1, 0);
    const int ir = std::min(argmax + 1, kScan);
    const std::function<double(double)> deriv = [&](double pi) {
      return curve_gamma2_deriv(m, pi, phi);
    };
    const double dl = deriv(scan_pi[static_cast<std::size_t>(il)]);
    const double dr = deriv(scan_pi[static_cast<std::size_t>(ir)]);
    const bool grazing = scan_r[static_cast<std::size_t>(il)] < 0.0 &&
                         scan_r[static_cast<std::size_t>(ir)] < 0.0;
    if (argmax > 0 && argmax < kScan && grazing &&
        std::signbit(dl) != std::signbit(dr)) {
      const double peak = bisect(deriv, scan_pi[static_cast<std::size_t>(il)],
                                 scan_pi[static_cast<std::size_t>(ir)], dl);
      const double rp = residual(peak);
      if (rp > 0.0) {
        roots.push_back(
            bisect(residual, scan_pi[static_cast<std::size_t>(il)], peak,
                   scan_r[static_cast<std::size_t>(il)]));
        roots.push_back(bisect(residual, peak, scan_pi[static_cast<std::size_t>(ir)], rp));
      } else if (rp > -1e-9 * std::max(1.0, std::abs(gamma2))) {
        roots.push_back(peak);  // tangency: the double root is the peak
      }
    }
  }
  if (roots.empty()) {
    throw InfeasibleError(
        "invert_moments: no root on the feasible arc (moments incompatible)");
  }

  // Smallest-pi root among those of minimal round-trip residual; refined
  // roots are all at tolerance, so ties resolve to the smallest pi.
  double best_pi = roots.front();
  double best_res = std::numeric_limits<double>::infinity();
  for (double pi : roots) {
    const MomentSet ms = compute_moments({pi, lambda_from_pi(m, pi, phi), phi});
    const double res = std::abs(ms.m - m) / std::max(1.0, std::abs(m)) +
                       std::abs(ms.gamma2 - gamma2) / std::max(1.0, gamma2);
    if (res < best_res - 1e-9 * std::max(1.0, best_res)) {
      best_res = res;
      best_pi = pi;
    }
  }
  return {best_pi, lambda_from_pi(m, best_pi, phi),
          static_cast<int>(roots.size())};
}

double transition_mean(count_t x, count_t z, const ModelParams& params) {
  check_step_args(x, z);
  const double survivors = x - z;
  return survivors + params.lambda * (survivors + params.phi * z);
}

count_t transition_sample(count_t x, count_t z, const ModelParams& params,
                          RngStream& rng) {
  check_step_args(x, z);
  if (x == 0.0) return 0.0;
  const double survivors = x - z;
  const double rate = params.lambda * (survivors + params.phi * z);
  return survivors + poisson_count(rate, rng);
}

count_t transition_sample_marginal(count_t x, const ModelParams& params,
                                   RngStream& rng) {
  if (!(x >= 0.0)) throw std::domain_error("transition: x must be >= 0");
  if (x == 0.0) return 0.0;
  const count_t detected = binomial_count(x, params.pi, rng);
  return transition_sample(x, detected, params, rng);
}

Trajectory simulate(const ModelParams& params, count_t x0, int horizon,
                    RngStream& rng, bool condition_survival, int attempt_cap) {
  params.validate();
  if (!(x0 >= 1.0)) throw std::domain_error("simulate: x0 must be >= 1");
  if (horizon < 1) throw std::domain_error("simulate: horizon must be >= 1");
  if (attempt_cap < 1) throw std::domain_error("simulate: attempt_cap must be >= 1");

  for (int attempt = 0; attempt < attempt_cap; ++attempt) {
    RngStream sub = rng.split(static_cast<std::uint64_t>(attempt));
    Trajectory traj;
    traj.x.resize(static_cast<std::size_t>(horizon) + 1);
    traj.z.resize(static_cast<std::size_t>(horizon) + 1);
    traj.x[0] = x0;
    for (int t = 0; t < horizon; ++t) {
      traj.z[t] = binomial_count(traj.x[t], params.pi, sub);
      traj.x[t + 1] = transition_sample(traj.x[t], traj.z[t], params, sub);
    }
    traj.z[horizon] = binomial_count(traj.x[horizon], params.pi, sub);
    if (!condition_survival || traj.x[static_cast<std::size_t>(horizon)] > 0.0) {
      return traj;
    }
  }
  throw SurvivalCapError("simulate: no surviving trajectory within " +
                         std::to_string(attempt_cap) + " attempts");
}

std::pair<count_t, count_t> brute_force_step(count_t x,
                                             const ModelParams& params,
                                             RngStream& rng) {
  if (!(x >= 0.0)) throw std::domain_error("brute_force_step: x must be >= 0");
  count_t z = 0.0;
  count_t next = 0.0;
  const auto n = static_cast<std::uint64_t>(x);
  for (std::uint64_t i = 0; i < n; ++i) {
    const bool detected = rng.uniform01() < params.pi;
    if (detected) {
      z += 1.0;
      next += static_cast<count_t>(
          poisson_sample(params.phi * params.lambda, rng));
    } else {
      next += 1.0 + static_cast<count_t>(poisson_sample(params.lambda, rng));
    }
  }
  return {next, z};
}

}  // namespace branchfilter
