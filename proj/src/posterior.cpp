#include "branchfilter/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "branchfilter/errors.hpp"

namespace branchfilter {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;

struct WeightedStats {
  double mean;
  double sd;
  double iqr;
  double ess;
  double min;
  double max;
};

WeightedStats weighted_stats(std::span<const double> values,
                             std::span<const double> weights) {
  const std::size_t n = values.size();
  double wsum = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    wsum += weights[i];
    mean += weights[i] * values[i];
  }
  if (!(wsum > 0.0)) throw DegeneracyError("weighted_stats: zero total weight");
  mean /= wsum;
  double var = 0.0, w2 = 0.0;
  double lo = values[0], hi = values[0];
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights[i] / wsum;
    var += w * (values[i] - mean) * (values[i] - mean);
    w2 += w * w;
    lo = std::min(lo, values[i]);
    hi = std::max(hi, values[i]);
  }
  // Weighted quartiles from the sorted sample.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double q1 = lo, q3 = hi, acc = 0.0;
  bool got_q1 = false, got_q3 = false;
  for (std::size_t idx : order) {
    acc += weights[idx] / wsum;
    if (!got_q1 && acc >= 0.25) {
      q1 = values[idx];
      got_q1 = true;
    }
    if (!got_q3 && acc >= 0.75) {
      q3 = values[idx];
      got_q3 = true;
      break;
    }
  }
  return {mean, std::sqrt(var), q3 - q1, 1.0 / w2, lo, hi};
}

double silverman_bandwidth(const WeightedStats& st, double dim_exponent) {
  double spread = st.sd;
  if (st.iqr > 0.0) spread = std::min(spread, st.iqr / 1.34);
  return 0.9 * spread * std::pow(st.ess, dim_exponent);
}

// Degenerate sample: a narrow triangular spike with unit integral, so the
// grid invariants still hold and the HPD collapses to a point.
DensityGrid1D spike_grid(double value) {
  const double eps = std::max(1e-12, std::abs(value) * 1e-9);
  DensityGrid1D g;
  g.points.resize(3);
  g.points << value - eps, value, value + eps;
  g.density.resize(3);
  g.density << 0.0, 1.0 / eps, 0.0;
  g.bandwidth = eps;
  return g;
}

double trapezoid_integral(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
    acc += 0.5 * (y(i) + y(i + 1)) * (x(i + 1) - x(i));
  }
  return acc;
}

}  // namespace

DensityGrid1D weighted_kde_1d(std::span<const double> values,
                              std::span<const double> weights, int grid_size) {
  if (values.size() != weights.size() || values.empty()) {
    throw std::invalid_argument("weighted_kde_1d: mismatched or empty input");
  }
  if (grid_size < 2) {
    throw std::invalid_argument("weighted_kde_1d: grid_size must be >= 2");
  }
  const WeightedStats st = weighted_stats(values, weights);
  if (!(st.sd > 0.0)) {
    throw PointMassError("weighted_kde_1d: all values identical");
  }
  const double b = silverman_bandwidth(st, -0.2);

  DensityGrid1D grid;
  grid.bandwidth = b;
  grid.points.resize(grid_size);
  grid.density.setZero(grid_size);
  const double lo = st.min - 3.0 * b;
  const double hi = st.max + 3.0 * b;
  const double step = (hi - lo) / (grid_size - 1);
  for (int g = 0; g < grid_size; ++g) grid.points(g) = lo + g * step;

  double wsum = 0.0;
  for (double w : weights) wsum += w;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double w = weights[i] / wsum;
    if (w == 0.0) continue;
    for (int g = 0; g < grid_size; ++g) {
      const double zscore = (grid.points(g) - values[i]) / b;
      grid.density(g) += w * std::exp(-0.5 * zscore * zscore);
    }
  }
  grid.density *= kInvSqrt2Pi / b;
  grid.density /= trapezoid_integral(grid.points, grid.density);
  return grid;
}

HpdSet hpd_from_density(const DensityGrid1D& grid, double level) {
  if (!(level > 0.0 && level <= 1.0)) {
    throw std::domain_error("hpd_from_density: level must lie in (0, 1]");
  }
  const Eigen::Index g = grid.points.size();
  if (g < 2 || grid.density.size() != g) {
    throw std::invalid_argument("hpd_from_density: malformed grid");
  }
  // Uniform-cell masses; ordering by density equals ordering by mass, which
  // makes the greedy superlevel selection the minimum-length one.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(g));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return grid.density(a) > grid.density(b);
  });
  const double total = grid.density.sum();
  std::vector<char> selected(static_cast<std::size_t>(g), 0);
  double mass = 0.0;
  for (Eigen::Index idx : order) {
    selected[static_cast<std::size_t>(idx)] = 1;
    mass += grid.density(idx) / total;
    if (mass >= level) break;
  }

  HpdSet out;
  out.level = level;
  out.attained_mass = mass;
  Eigen::Index run_start = -1;
  for (Eigen::Index i = 0; i <= g; ++i) {
    const bool in = i < g && selected[static_cast<std::size_t>(i)];
    if (in && run_start < 0) run_start = i;
    if (!in && run_start >= 0) {
      out.intervals.push_back({grid.points(run_start), grid.points(i - 1)});
      run_start = -1;
    }
  }
  return out;
}

namespace {

DensityGrid2D joint_kde(const WeightedSample2D& sample, int grid_size) {
  DensityGrid2D grid;
  const Eigen::Index n = sample.weights.size();
  std::vector<double> xs(static_cast<std::size_t>(n)), ys(static_cast<std::size_t>(n)),
      ws(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    xs[static_cast<std::size_t>(i)] = sample.points(i, 0);
    ys[static_cast<std::size_t>(i)] = sample.points(i, 1);
    ws[static_cast<std::size_t>(i)] = sample.weights(i);
  }
  const WeightedStats sx = weighted_stats(xs, ws);
  const WeightedStats sy = weighted_stats(ys, ws);
  // Product kernel with per-axis rule-of-thumb bandwidths (d = 2).
  const double bx = sx.sd > 0.0 ? silverman_bandwidth(sx, -1.0 / 6.0)
                                : std::max(1e-12, std::abs(sx.mean) * 1e-9);
  const double by = sy.sd > 0.0 ? silverman_bandwidth(sy, -1.0 / 6.0)
                                : std::max(1e-12, std::abs(sy.mean) * 1e-9);
  grid.bandwidth = {bx, by};
  grid.x.resize(grid_size);
  grid.y.resize(grid_size);
  const double xlo = sx.min - 3.0 * bx, xhi = sx.max + 3.0 * bx;
  const double ylo = sy.min - 3.0 * by, yhi = sy.max + 3.0 * by;
  for (int i = 0; i < grid_size; ++i) {
    grid.x(i) = xlo + (xhi - xlo) * i / (grid_size - 1);
    grid.y(i) = ylo + (yhi - ylo) * i / (grid_size - 1);
  }
  grid.density.setZero(grid_size, grid_size);
  // Separable kernel: accumulate per-axis kernel matrices, then one GEMM.
  Eigen::MatrixXd kx(grid_size, n), ky(grid_size, n);
  for (Eigen::Index p = 0; p < n; ++p) {
    for (int i = 0; i < grid_size; ++i) {
      const double zx = (grid.x(i) - xs[static_cast<std::size_t>(p)]) / bx;
      const double zy = (grid.y(i) - ys[static_cast<std::size_t>(p)]) / by;
      kx(i, p) = std::exp(-0.5 * zx * zx);
      ky(i, p) = std::exp(-0.5 * zy * zy);
    }
    kx.col(p) *= ws[static_cast<std::size_t>(p)];
  }
  grid.density = kx * ky.transpose();
  grid.density *= kInvSqrt2Pi * kInvSqrt2Pi / (bx * by);
  // Normalize cell masses to 1.
  const double dx = grid.x(1) - grid.x(0);
  const double dy = grid.y(1) - grid.y(0);
  const double total = grid.density.sum() * dx * dy;
  if (total > 0.0) grid.density /= total;
  return grid;
}

DensityGrid1D marginal_or_spike(std::span<const double> values,
                                std::span<const double> weights, int grid_size,
                                double fallback) {
  try {
    return weighted_kde_1d(values, weights, grid_size);
  } catch (const PointMassError&) {
    return spike_grid(fallback);
  }
}

}  // namespace

PosteriorSummary summarize(const ParticleCloud& cloud, int grid_size,
                           int joint_grid_size, double hpd_level) {
  WeightedSample2D sample = cloud.theta_sample();
  sample.normalize();
  sample.validate();

  PosteriorSummary out;
  std::tie(out.mean, out.cov) = weighted_mean_cov(sample);

  const Eigen::Index n = sample.weights.size();
  std::vector<double> pis(static_cast<std::size_t>(n)), lams(static_cast<std::size_t>(n)),
      ws(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    pis[static_cast<std::size_t>(i)] = sample.points(i, 0);
    lams[static_cast<std::size_t>(i)] = sample.points(i, 1);
    ws[static_cast<std::size_t>(i)] = sample.weights(i);
  }

  out.marginal_pi = marginal_or_spike(pis, ws, grid_size, out.mean(0));
  out.marginal_lambda = marginal_or_spike(lams, ws, grid_size, out.mean(1));
  out.hpd_pi = hpd_from_density(out.marginal_pi, hpd_level);
  out.hpd_lambda = hpd_from_density(out.marginal_lambda, hpd_level);

  Eigen::Index gi;
  out.marginal_pi.density.maxCoeff(&gi);
  out.marginal_mode_pi = out.marginal_pi.points(gi);
  out.marginal_lambda.density.maxCoeff(&gi);
  out.marginal_mode_lambda = out.marginal_lambda.points(gi);

  out.joint = joint_kde(sample, joint_grid_size);
  Eigen::Index mi, mj;
  out.joint.density.maxCoeff(&mi, &mj);
  out.joint_mode = {out.joint.x(mi), out.joint.y(mj)};
  return out;
}

}  // namespace branchfilter
