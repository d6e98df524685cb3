#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

#include "branchfilter/errors.hpp"
#include "branchfilter/filter.hpp"
#include "branchfilter/fixtures.hpp"
#include "branchfilter/model.hpp"
#include "branchfilter/posterior.hpp"
#include "branchfilter/sampling.hpp"

using namespace branchfilter;

namespace {

FilterConfig default_config(std::uint64_t seed) {
  FilterConfig c;
  c.seed = seed;
  return c;
}

bool clouds_identical(const ParticleCloud& a, const ParticleCloud& b) {
  if (a.particles.size() != b.particles.size()) return false;
  for (std::size_t i = 0; i < a.particles.size(); ++i) {
    if (a.particles[i].x != b.particles[i].x) return false;
    if (a.particles[i].theta != b.particles[i].theta) return false;
    if (a.weights(static_cast<Eigen::Index>(i)) !=
        b.weights(static_cast<Eigen::Index>(i))) {
      return false;
    }
  }
  return a.ess == b.ess && a.t == b.t;
}

}  // namespace

TEST_CASE("shrinkage_constants: boundary and frozen values") {
  auto [a1, h1] = shrinkage_constants(1.0);
  CHECK(a1 == 1.0);
  CHECK(h1 == 0.0);
  auto [a2, h2] = shrinkage_constants(0.95);
  CHECK(a2 == doctest::Approx(0.9736842105263156).epsilon(1e-15));
  CHECK(h2 == doctest::Approx(0.05193905817174549).epsilon(1e-12));
  auto [a3, h3] = shrinkage_constants(0.5);
  CHECK(a3 == doctest::Approx(0.5));
  CHECK(h3 == doctest::Approx(0.75));
  CHECK_THROWS_AS(shrinkage_constants(0.0), std::domain_error);
  CHECK_THROWS_AS(shrinkage_constants(1.2), std::domain_error);
}

TEST_CASE("init_cloud: every particle sits on the prior curve") {
  const Fixture& f = fixture_by_name("pi04_lambda06");
  const ObservedSeries series{f.trajectory.z};
  FilterConfig config = default_config(3);
  const ParticleCloud cloud = init_cloud(series, config);
  const double mt = m_tilde(series);
  REQUIRE(static_cast<int>(cloud.particles.size()) == config.n_particles);
  for (const Particle& p : cloud.particles) {
    CHECK(p.x == 100.0);
    CHECK(p.theta(0) > 0.0);
    CHECK(p.theta(0) < 1.0);
    const double lam = lambda_from_pi(mt, p.theta(0), config.phi);
    CHECK(std::abs(p.theta(1) - lam) <= 1e-12 * std::max(1.0, lam));
  }
  CHECK(std::abs(cloud.weights.sum() - 1.0) < 1e-9);
  CHECK(cloud.ess >= 1.0);
  CHECK(cloud.ess <= config.n_particles);
}

TEST_CASE("init_cloud: assimilating Z_0 pulls pi toward the detected fraction") {
  const Fixture& f = fixture_by_name("pi04_lambda06");  // z0 = 44 at x0 = 100
  const ObservedSeries series{f.trajectory.z};
  const ParticleCloud cloud = init_cloud(series, default_config(3));
  double prior_mean = 0.0, post_mean = 0.0;
  const double n = static_cast<double>(cloud.particles.size());
  for (std::size_t i = 0; i < cloud.particles.size(); ++i) {
    prior_mean += cloud.particles[i].theta(0) / n;
    post_mean += cloud.weights(static_cast<Eigen::Index>(i)) * cloud.particles[i].theta(0);
  }
  CHECK(std::abs(post_mean - 0.44) < std::abs(prior_mean - 0.44));
}

TEST_CASE("init_cloud: discrete-uniform prior spans its support") {
  const Fixture& f = fixture_by_name("pi04_lambda06_x0unknown");
  const ObservedSeries series{f.trajectory.z};
  FilterConfig config = default_config(4);
  config.x0 = X0Prior::discrete_uniform(50, 200);
  const ParticleCloud cloud = init_cloud(series, config);
  double lo = 1e300, hi = -1e300;
  for (const Particle& p : cloud.particles) {
    CHECK(p.x == std::floor(p.x));
    lo = std::min(lo, p.x);
    hi = std::max(hi, p.x);
  }
  CHECK(lo >= 50.0);
  CHECK(hi <= 200.0);
  CHECK(hi - lo > 100.0);  // spans most of the box at N = 2000
}

TEST_CASE("init_cloud: impossible first observation degenerates at step 0") {
  ObservedSeries series{{50, 10, 5}};
  FilterConfig config = default_config(5);
  config.x0 = X0Prior::known(5);  // z0 = 50 > x0
  try {
    init_cloud(series, config);
    FAIL("expected DegeneracyError");
  } catch (const DegeneracyError& e) {
    CHECK(e.step() == 0);
  }
}

TEST_CASE("lw_step: delta = 1 keeps a point-mass parameter exactly") {
  const Fixture& f = fixture_by_name("pi04_lambda06");
  const ObservedSeries series{f.trajectory.z};
  FilterConfig config = default_config(6);
  config.delta = 1.0;
  config.n_particles = 256;

  // hand-built cloud: one shared theta, known state
  ParticleCloud cloud;
  cloud.particles.resize(256);
  const Eigen::Vector2d theta(0.4, 0.6);
  for (auto& p : cloud.particles) {
    p.x = 100;
    p.theta = theta;
    p.theta_k = {std::log(0.4 / 0.6), std::log(0.6)};
  }
  cloud.weights = Eigen::VectorXd::Constant(256, 1.0 / 256);
  cloud.t = 0;
  cloud.z_t = series.z[0];
  cloud.ess = 256;

  const ParticleCloud next = lw_step(cloud, series.z[1], config);
  for (const auto& p : next.particles) {
    CHECK(p.theta(0) == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(p.theta(1) == doctest::Approx(0.6).epsilon(1e-15));
  }
  CHECK(std::abs(next.weights.sum() - 1.0) < 1e-9);
  CHECK(next.ess >= 1.0);
  CHECK(next.ess <= 256.0);
}

TEST_CASE("lw_step: weights normalized and ess bounded on a real fixture") {
  const Fixture& f = fixture_by_name("pi06_lambda097");
  const ObservedSeries series{f.trajectory.z};
  const FilterConfig config = default_config(7);
  ParticleCloud cloud = init_cloud(series, config);
  for (int t = 1; t <= 5; ++t) {
    cloud = lw_step(cloud, series.z[static_cast<std::size_t>(t)], config);
    CHECK(std::abs(cloud.weights.sum() - 1.0) < 1e-9);
    CHECK(cloud.ess >= 1.0);
    CHECK(cloud.ess <= config.n_particles);
    CHECK(cloud.t == t);
  }
}

TEST_CASE("parameter validity: transformed kernel never leaves the domain") {
  const Fixture& f = fixture_by_name("pi08_lambda147");
  const ObservedSeries series{f.trajectory.z};
  const FilterConfig config = default_config(8);
  ParticleCloud cloud = init_cloud(series, config);
  for (int t = 1; t <= series.generations(); ++t) {
    cloud = lw_step(cloud, series.z[static_cast<std::size_t>(t)], config);
    for (const Particle& p : cloud.particles) {
      CHECK(p.theta(0) > 0.0);
      CHECK(p.theta(0) < 1.0);
      CHECK(p.theta(1) > 0.0);
    }
  }
}

TEST_CASE("natural kernel mode also keeps parameters valid, via rejection") {
  const Fixture& f = fixture_by_name("pi04_lambda06");
  const ObservedSeries series{f.trajectory.z};
  FilterConfig config = default_config(9);
  config.kernel_space = KernelSpace::natural;
  const FilterResult result = run_filter(series, config);
  for (const Particle& p : result.final_cloud.particles) {
    CHECK(p.theta(0) > 0.0);
    CHECK(p.theta(0) < 1.0);
    CHECK(p.theta(1) > 0.0);
  }
}

TEST_CASE("kernel shrinkage preserves the first two moments") {
  // Direct check of the location/spread algebra: selections uniform, so the
  // smoothed sample must keep the source mean and covariance in expectation.
  const int n = 100000;
  RngStream rng(77, 0);
  std::vector<Eigen::Vector2d> theta(static_cast<std::size_t>(n));
  Eigen::Vector2d mean_in = Eigen::Vector2d::Zero();
  for (auto& th : theta) {
    th = {1.0 + 0.3 * rng.normal(), -2.0 + 0.8 * rng.normal()};
    mean_in += th / n;
  }
  Eigen::Matrix2d cov_in = Eigen::Matrix2d::Zero();
  for (const auto& th : theta) {
    cov_in += (th - mean_in) * (th - mean_in).transpose() / n;
  }
  const auto [a, h2] = shrinkage_constants(0.95);
  Eigen::Vector2d mean_out = Eigen::Vector2d::Zero();
  std::vector<Eigen::Vector2d> smoothed(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d loc = a * theta[static_cast<std::size_t>(i)] + (1.0 - a) * mean_in;
    smoothed[static_cast<std::size_t>(i)] = mvn2_sample(loc, h2 * cov_in, rng);
    mean_out += smoothed[static_cast<std::size_t>(i)] / n;
  }
  Eigen::Matrix2d cov_out = Eigen::Matrix2d::Zero();
  for (const auto& th : smoothed) {
    cov_out += (th - mean_out) * (th - mean_out).transpose() / n;
  }
  // 3 standard errors: se(mean) ~ sd/sqrt(n), se(cov) ~ cov*sqrt(2/n)
  CHECK(std::abs(mean_out(0) - mean_in(0)) < 3.0 * 0.3 / std::sqrt(n));
  CHECK(std::abs(mean_out(1) - mean_in(1)) < 3.0 * 0.8 / std::sqrt(n));
  CHECK(std::abs(cov_out(0, 0) - cov_in(0, 0)) < 3.0 * cov_in(0, 0) * std::sqrt(2.0 / n));
  CHECK(std::abs(cov_out(1, 1) - cov_in(1, 1)) < 3.0 * cov_in(1, 1) * std::sqrt(2.0 / n));
}

TEST_CASE("run_filter: bit-identical across repeats and thread counts") {
  const Fixture& f = fixture_by_name("pi02_lambda031");
  const ObservedSeries series{f.trajectory.z};
  FilterConfig config = default_config(10);
  config.n_particles = 500;
  const FilterResult r1 = run_filter(series, config);
  const FilterResult r2 = run_filter(series, config);
  config.threads = 4;
  const FilterResult r4 = run_filter(series, config);
  CHECK(clouds_identical(r1.final_cloud, r2.final_cloud));
  CHECK(clouds_identical(r1.final_cloud, r4.final_cloud));
  REQUIRE(r1.history.size() == r4.history.size());
  for (std::size_t i = 0; i < r1.history.size(); ++i) {
    CHECK(r1.history[i].mean_pi == r4.history[i].mean_pi);
    CHECK(r1.history[i].ess == r4.history[i].ess);
  }
}

TEST_CASE("run_filter: history covers every assimilated observation") {
  const Fixture& f = fixture_by_name("pi04_lambda06");
  const ObservedSeries series{f.trajectory.z};
  FilterConfig config = default_config(11);
  config.n_particles = 500;
  const FilterResult result = run_filter(series, config);
  CHECK(result.history.size() == series.z.size());
  CHECK(result.history.front().t == 0);
  CHECK(result.history.back().t == series.generations());
  CHECK(result.diagnostics.resample_count == series.generations());
  CHECK(result.diagnostics.min_ess >= 1.0);
}

TEST_CASE("run_filter: mid-series impossible observation reports its step") {
  ObservedSeries series{{2, 1, 1000, 1}};
  FilterConfig config = default_config(12);
  config.n_particles = 200;
  config.x0 = X0Prior::known(2);
  try {
    run_filter(series, config);
    FAIL("expected DegeneracyError");
  } catch (const DegeneracyError& e) {
    CHECK(e.step() == 2);
  }
}

TEST_CASE("exact inference check: tiny state space, fixed parameters") {
  // theta fixed via a point-mass cloud with delta = 1; the state posterior
  // after one step must match exhaustive enumeration.
  const double pi = 0.5, lambda = 0.8, phi = 0.5;
  const count_t x0 = 3;
  const count_t z0 = 1, z1 = 2;
  const int n = 100000;

  FilterConfig config;
  config.seed = 99;
  config.n_particles = n;
  config.delta = 1.0;
  config.phi = phi;

  ParticleCloud cloud;
  cloud.particles.resize(static_cast<std::size_t>(n));
  for (auto& p : cloud.particles) {
    p.x = x0;
    p.theta = {pi, lambda};
    p.theta_k = {std::log(pi / (1.0 - pi)), std::log(lambda)};
  }
  cloud.weights = Eigen::VectorXd::Constant(n, 1.0 / n);
  cloud.t = 0;
  cloud.z_t = z0;
  cloud.ess = n;

  const ParticleCloud next = lw_step(cloud, z1, config);

  // enumeration oracle: p(x1 | z0, z1) over the shifted-Poisson support
  const double rate = lambda * ((x0 - z0) + phi * z0);
  std::map<double, double> exact;
  double norm = 0.0;
  for (int y = 0; y < 200; ++y) {
    const double x1 = (x0 - z0) + y;
    if (z1 > x1) continue;
    const double log_prior = y * std::log(rate) - rate - std::lgamma(y + 1.0);
    const double log_obs = binomial_log_pmf(x1, z1, pi);
    const double w = std::exp(log_prior + log_obs);
    exact[x1] += w;
    norm += w;
  }
  for (auto& [k, v] : exact) v /= norm;

  std::map<double, double> filtered;
  for (std::size_t i = 0; i < next.particles.size(); ++i) {
    filtered[next.particles[i].x] += next.weights(static_cast<Eigen::Index>(i));
  }
  double tv = 0.0;
  for (const auto& [k, v] : exact) {
    const auto it = filtered.find(k);
    tv += std::abs(v - (it == filtered.end() ? 0.0 : it->second));
  }
  for (const auto& [k, v] : filtered) {
    if (!exact.count(k)) tv += v;
  }
  CHECK(0.5 * tv <= 0.02);
}

TEST_CASE("posterior variance of pi shrinks as data accumulates") {
  // The curve prior concentrates almost all information about pi within the
  // first couple of observations (exact enumeration: the variance falls
  // 2.4e-3 -> 8.8e-4 -> 3.8e-4 over t = 0, 1, 5 and is flat afterwards), so
  // the early cloud is the meaningful baseline.
  const Fixture& f = fixture_by_name("pi04_lambda06");
  const ObservedSeries series{f.trajectory.z};
  int shrank = 0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    FilterConfig config = default_config(100 + static_cast<std::uint64_t>(s));
    const FilterResult result = run_filter(series, config);
    const double var1 = result.history[1].var_pi;
    const double var30 = result.history[30].var_pi;
    shrank += var30 < var1;
  }
  CHECK(shrank >= 18);
}

TEST_CASE("marginal transition mode runs end to end") {
  const Fixture& f = fixture_by_name("pi04_lambda06");
  const ObservedSeries series{f.trajectory.z};
  FilterConfig config = default_config(13);
  config.transition = TransitionMode::marginal;
  config.n_particles = 1000;
  const FilterResult result = run_filter(series, config);
  const StepSummary& last = result.history.back();
  CHECK(last.mean_pi > 0.2);
  CHECK(last.mean_pi < 0.6);
}

TEST_CASE("unknown x0 inflates posterior dispersion on the same seed") {
  const Fixture& f = fixture_by_name("pi04_lambda06_x0unknown");
  const ObservedSeries series{f.trajectory.z};
  FilterConfig known = default_config(14);
  known.x0 = X0Prior::known(100);
  FilterConfig unknown = default_config(14);
  unknown.x0 = X0Prior::discrete_uniform(50, 200);
  const FilterResult rk = run_filter(series, known);
  const FilterResult ru = run_filter(series, unknown);
  CHECK(ru.history.back().var_pi > rk.history.back().var_pi);
}

TEST_CASE("config validation") {
  FilterConfig config;
  config.delta = 0.0;
  CHECK_THROWS_AS(config.validate(), std::domain_error);
  config = FilterConfig{};
  config.n_particles = 0;
  CHECK_THROWS_AS(config.validate(), std::domain_error);
  config = FilterConfig{};
  config.x0 = X0Prior::discrete_uniform(200, 50);
  CHECK_THROWS_AS(config.validate(), std::domain_error);
  config = FilterConfig{};
  config.jitter = -1.0;
  CHECK_THROWS_AS(config.validate(), std::domain_error);
}
