#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "branchfilter/errors.hpp"
#include "branchfilter/rng.hpp"
#include "branchfilter/sampling.hpp"
#include "stat_utils.hpp"

using namespace branchfilter;

namespace {

double poisson_log_pmf(int k, double rate) {
  return k * std::log(rate) - rate - std::lgamma(k + 1.0);
}

}  // namespace

TEST_CASE("poisson: zero rate and domain errors") {
  RngStream rng(1, 0);
  CHECK(poisson_sample(0.0, rng) == 0);
  CHECK_THROWS_AS(poisson_sample(-1.0, rng), std::domain_error);
  CHECK_THROWS_AS(poisson_sample(std::numeric_limits<double>::quiet_NaN(), rng),
                  std::domain_error);
  CHECK_THROWS_AS(poisson_sample(std::numeric_limits<double>::infinity(), rng),
                  std::domain_error);
}

TEST_CASE("poisson: law of large numbers at rate 0.6") {
  RngStream rng(100, 1);
  const int n = 1000000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += static_cast<double>(poisson_sample(0.6, rng));
  CHECK(std::abs(sum / n - 0.6) < 0.003);
}

TEST_CASE("poisson: variance equals mean at rate 48") {
  RngStream rng(100, 2);
  const int n = 1000000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = static_cast<double>(poisson_sample(48.0, rng));
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(var - 48.0) < 0.5);
}

TEST_CASE("poisson: chi-square fit on both sampler branches") {
  for (const double rate : {3.7, 42.0}) {
    RngStream rng(55, static_cast<std::uint64_t>(rate));
    const int n = 200000;
    const int kmax = static_cast<int>(rate + 10.0 * std::sqrt(rate)) + 5;
    std::vector<double> counts(static_cast<std::size_t>(kmax) + 1, 0.0);
    std::vector<double> probs(static_cast<std::size_t>(kmax) + 1, 0.0);
    for (int k = 0; k <= kmax; ++k) probs[static_cast<std::size_t>(k)] = std::exp(poisson_log_pmf(k, rate));
    for (int i = 0; i < n; ++i) {
      const auto k = poisson_sample(rate, rng);
      if (k <= static_cast<std::uint64_t>(kmax)) counts[static_cast<std::size_t>(k)] += 1.0;
    }
    CHECK(statutil::chisq_gof_pvalue(counts, probs, n) > 0.001);
  }
}

TEST_CASE("binomial: degenerate p and domain errors") {
  RngStream rng(2, 0);
  CHECK(binomial_sample(100, 0.0, rng) == 0);
  CHECK(binomial_sample(100, 1.0, rng) == 100);
  CHECK(binomial_sample(0, 0.3, rng) == 0);
  CHECK_THROWS_AS(binomial_sample(10, -0.1, rng), std::domain_error);
  CHECK_THROWS_AS(binomial_sample(10, 1.5, rng), std::domain_error);
}

TEST_CASE("binomial: law of large numbers at (100, 0.4)") {
  RngStream rng(200, 1);
  const int n = 1000000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += static_cast<double>(binomial_sample(100, 0.4, rng));
  CHECK(std::abs(sum / n - 40.0) < 0.1);
}

TEST_CASE("binomial: chi-square fit across inversion, BTRS, and symmetry") {
  struct Cfg {
    std::uint64_t n;
    double p;
  };
  for (const Cfg cfg : {Cfg{30, 0.17}, Cfg{400, 0.3}, Cfg{25, 0.9}}) {
    RngStream rng(77, cfg.n);
    const int draws = 200000;
    std::vector<double> counts(cfg.n + 1, 0.0), probs(cfg.n + 1, 0.0);
    for (std::uint64_t k = 0; k <= cfg.n; ++k) {
      probs[k] = std::exp(binomial_log_pmf(static_cast<double>(cfg.n),
                                           static_cast<double>(k), cfg.p));
    }
    for (int i = 0; i < draws; ++i) counts[binomial_sample(cfg.n, cfg.p, rng)] += 1.0;
    CHECK(statutil::chisq_gof_pvalue(counts, probs, draws) > 0.001);
  }
}

TEST_CASE("binomial_log_pmf: identities and frozen value") {
  CHECK(binomial_log_pmf(0.0, 0.0, 0.4) == 0.0);
  CHECK(binomial_log_pmf(3.0, 5.0, 0.4) == -std::numeric_limits<double>::infinity());
  // log(C(10,4) 0.4^4 0.6^6), direct arithmetic
  CHECK(binomial_log_pmf(10.0, 4.0, 0.4) ==
        doctest::Approx(-1.3830091393750976).epsilon(1e-12));
  CHECK_THROWS_AS(binomial_log_pmf(10.0, 4.0, 0.0), std::domain_error);
  CHECK_THROWS_AS(binomial_log_pmf(10.0, 4.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(binomial_log_pmf(-1.0, 0.0, 0.4), std::domain_error);
}

TEST_CASE("binomial_log_pmf: integer sizes renormalize to one") {
  for (const double size : {10.0, 37.0}) {
    double total = 0.0;
    for (double k = 0.0; k <= size; k += 1.0) {
      total += std::exp(binomial_log_pmf(size, k, 0.3));
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("binomial_log_pmf: real-valued size interpolates between integers") {
  const double lo = binomial_log_pmf(10.0, 4.0, 0.4);
  const double mid = binomial_log_pmf(10.5, 4.0, 0.4);
  const double hi = binomial_log_pmf(11.0, 4.0, 0.4);
  CHECK(((lo < mid && mid < hi) || (lo > mid && mid > hi)));
}

TEST_CASE("mvn2: zero covariance returns the mean exactly") {
  RngStream rng(3, 0);
  const Eigen::Vector2d mean(1.0, 2.0);
  const Eigen::Vector2d draw = mvn2_sample(mean, Eigen::Matrix2d::Zero(), rng);
  CHECK(draw(0) == 1.0);
  CHECK(draw(1) == 2.0);
}

TEST_CASE("mvn2: sample covariance matches a diagonal target within 2%") {
  RngStream rng(3, 1);
  Eigen::Matrix2d cov;
  cov << 1.0, 0.0, 0.0, 4.0;
  const Eigen::Vector2d mean(0.0, 0.0);
  const int n = 100000;
  Eigen::Matrix2d acc = Eigen::Matrix2d::Zero();
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d d = mvn2_sample(mean, cov, rng);
    acc += d * d.transpose();
  }
  acc /= n;
  CHECK(std::abs(acc(0, 0) - 1.0) < 0.02);
  CHECK(std::abs(acc(1, 1) - 4.0) < 0.08);
  CHECK(std::abs(acc(0, 1)) < 0.02);
}

TEST_CASE("mvn2: rank-1 covariance stays on its line") {
  RngStream rng(3, 2);
  Eigen::Matrix2d cov;
  cov << 1.0, 1.0, 1.0, 1.0;
  const Eigen::Vector2d mean(1.0, 2.0);
  for (int i = 0; i < 10000; ++i) {
    const Eigen::Vector2d d = mvn2_sample(mean, cov, rng);
    CHECK(std::abs((d(0) - 1.0) - (d(1) - 2.0)) < 1e-10);
  }
}

TEST_CASE("mvn2: negative eigenvalues clamp or throw per the threshold") {
  RngStream rng(3, 3);
  Eigen::Matrix2d nearly;
  nearly << 1.0, 0.0, 0.0, -1e-11;  // clamped
  CHECK_NOTHROW(mvn2_sample({0.0, 0.0}, nearly, rng));
  Eigen::Matrix2d bad;
  bad << 1.0, 0.0, 0.0, -1e-9;
  CHECK_THROWS_AS(mvn2_sample({0.0, 0.0}, bad, rng), std::domain_error);
}

TEST_CASE("resample_index: point mass and frequencies") {
  RngStream rng(4, 0);
  const std::vector<double> point{1.0, 0.0, 0.0};
  for (int i = 0; i < 100; ++i) CHECK(resample_index(point, rng) == 0);

  const std::vector<double> half{0.5, 0.5};
  int zero = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) zero += resample_index(half, rng) == 0;
  CHECK(std::abs(static_cast<double>(zero) / n - 0.5) < 0.01);

  const std::vector<double> w{0.2, 0.3, 0.5};
  std::vector<double> freq(3, 0.0);
  for (int i = 0; i < n; ++i) freq[resample_index(w, rng)] += 1.0;
  for (int i = 0; i < 3; ++i) CHECK(std::abs(freq[static_cast<std::size_t>(i)] / n - w[static_cast<std::size_t>(i)]) < 0.01);
}

TEST_CASE("resample_index: degeneracy and validation") {
  RngStream rng(4, 1);
  const std::vector<double> zeros{0.0, 0.0};
  CHECK_THROWS_AS(resample_index(zeros, rng), DegeneracyError);
  const std::vector<double> unnormalized{0.6, 0.6};
  CHECK_THROWS_AS(resample_index(unnormalized, rng), std::invalid_argument);
  const std::vector<double> negative{1.2, -0.2};
  CHECK_THROWS_AS(resample_index(negative, rng), std::invalid_argument);
}

TEST_CASE("weighted_mean_cov: hand cases") {
  WeightedSample2D one;
  one.points.resize(1, 2);
  one.points << 3.0, 7.0;
  one.weights.resize(1);
  one.weights << 1.0;
  auto [m1, c1] = weighted_mean_cov(one);
  CHECK(m1(0) == 3.0);
  CHECK(m1(1) == 7.0);
  CHECK(c1.isZero(0.0));

  WeightedSample2D two;
  two.points.resize(2, 2);
  two.points << 0.0, 0.0, 2.0, 0.0;
  two.weights.resize(2);
  two.weights << 0.5, 0.5;
  auto [m2, c2] = weighted_mean_cov(two);
  CHECK(m2(0) == doctest::Approx(1.0));
  CHECK(m2(1) == 0.0);
  CHECK(c2(0, 0) == doctest::Approx(1.0));
  CHECK(c2(0, 1) == 0.0);
  CHECK(c2(1, 1) == 0.0);
}

TEST_CASE("weighted_mean_cov: PSD and equal weights reduce to plain moments") {
  RngStream rng(9, 0);
  const int n = 400;
  WeightedSample2D s;
  s.points.resize(n, 2);
  s.weights = Eigen::VectorXd::Constant(n, 1.0 / n);
  for (int i = 0; i < n; ++i) {
    s.points(i, 0) = rng.normal() * 2.0 + 1.0;
    s.points(i, 1) = rng.normal() - 3.0;
  }
  auto [mean, cov] = weighted_mean_cov(s);

  Eigen::Vector2d plain_mean = s.points.colwise().mean().transpose();
  CHECK(mean(0) == doctest::Approx(plain_mean(0)).epsilon(1e-12));
  CHECK(mean(1) == doctest::Approx(plain_mean(1)).epsilon(1e-12));

  Eigen::Matrix2d plain_cov = Eigen::Matrix2d::Zero();
  for (int i = 0; i < n; ++i) {
    Eigen::Vector2d d = s.points.row(i).transpose() - plain_mean;
    plain_cov += d * d.transpose() / n;
  }
  CHECK((cov - plain_cov).cwiseAbs().maxCoeff() < 1e-12);

  CHECK(cov(0, 1) == cov(1, 0));
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  CHECK(eig.eigenvalues().minCoeff() > -1e-12);
}

TEST_CASE("weighted sample validation catches bad weights") {
  WeightedSample2D s;
  s.points.resize(2, 2);
  s.points << 0.0, 0.0, 1.0, 1.0;
  s.weights.resize(2);
  s.weights << 0.7, 0.7;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s.normalize();
  CHECK_NOTHROW(s.validate());
}
