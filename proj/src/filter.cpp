#include "branchfilter/filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "branchfilter/errors.hpp"

namespace branchfilter {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::uint64_t kSystematicStream = 0xFFFFFFFFull;

std::uint64_t draw_stream(int t, std::uint64_t j) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(t)) << 32) | j;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

double sigmoid(double u) {
  if (u >= 0.0) {
    return 1.0 / (1.0 + std::exp(-u));
  }
  const double e = std::exp(u);
  return e / (1.0 + e);
}

Eigen::Vector2d encode_theta(double pi, double lambda, KernelSpace space) {
  if (space == KernelSpace::natural) return {pi, lambda};
  return {logit(pi), std::log(lambda)};
}

// Decode with clamping so downstream pmf evaluations stay in-domain even
// when a kernel draw lands deep in a logit tail.
std::pair<double, double> decode_theta(const Eigen::Vector2d& k,
                                       KernelSpace space) {
  if (space == KernelSpace::natural) return {k(0), k(1)};
  const double pi = std::clamp(sigmoid(k(0)), 1e-14, 1.0 - 1e-14);
  const double lambda = std::exp(std::clamp(k(1), -700.0, 700.0));
  return {pi, lambda};
}

// In-place normalization of log weights; returns log(sum exp(logw)).
// Throws DegeneracyError when every weight is zero.
double normalize_log_weights(Eigen::VectorXd& logw, int step,
                             const char* stage) {
  const double mx = logw.maxCoeff();
  if (!(mx > kNegInf)) {
    throw DegeneracyError(std::string("particle filter: all weights vanished ") +
                              stage + " at step " + std::to_string(step),
                          step);
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < logw.size(); ++i) {
    logw(i) = std::exp(logw(i) - mx);
    sum += logw(i);
  }
  logw /= sum;
  return mx + std::log(sum);
}

double effective_sample_size(const Eigen::VectorXd& w) {
  return 1.0 / w.squaredNorm();
}

// Static-partition parallel loop; deterministic because every iteration
// owns its slot and its RNG stream.
template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  if (threads <= 1 || n < 2 * threads) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  std::exception_ptr first_error = nullptr;
  std::mutex error_mutex;
  const int chunk = (n + threads - 1) / threads;
  for (int tid = 0; tid < threads; ++tid) {
    const int lo = tid * chunk;
    const int hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn, &first_error, &error_mutex] {
      try {
        for (int i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> guard(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

void FilterConfig::validate() const {
  if (n_particles < 1 || static_cast<std::uint64_t>(n_particles) >= kSystematicStream) {
    throw std::domain_error("FilterConfig: n_particles out of range");
  }
  if (!(delta > 0.0 && delta <= 1.0)) {
    throw std::domain_error("FilterConfig: delta must lie in (0, 1]");
  }
  if (!(phi >= 0.0 && phi <= 1.0)) {
    throw std::domain_error("FilterConfig: phi must lie in [0, 1]");
  }
  if (!(jitter >= 0.0)) {
    throw std::domain_error("FilterConfig: jitter must be >= 0");
  }
  if (threads < 1) throw std::domain_error("FilterConfig: threads must be >= 1");
  if (x0.kind == X0Prior::Kind::known) {
    if (!(x0.value >= 0.0)) throw std::domain_error("FilterConfig: x0 must be >= 0");
  } else {
    if (!(x0.lo >= 0.0) || x0.lo > x0.hi) {
      throw std::domain_error("FilterConfig: invalid discrete uniform bounds");
    }
  }
}

std::pair<double, double> shrinkage_constants(double delta) {
  if (!(delta > 0.0 && delta <= 1.0)) {
    throw std::domain_error("shrinkage_constants: delta must lie in (0, 1]");
  }
  const double a = (3.0 * delta - 1.0) / (2.0 * delta);
  return {a, 1.0 - a * a};
}

WeightedSample2D ParticleCloud::theta_sample() const {
  WeightedSample2D s;
  s.points.resize(static_cast<Eigen::Index>(particles.size()), 2);
  for (std::size_t i = 0; i < particles.size(); ++i) {
    s.points.row(static_cast<Eigen::Index>(i)) = particles[i].theta.transpose();
  }
  s.weights = weights;
  return s;
}

ParticleCloud init_cloud(const ObservedSeries& series,
                         const FilterConfig& config) {
  config.validate();
  series.validate();
  if (series.generations() < 1) {
    throw SeriesError("init_cloud: need at least two observations");
  }
  const double mt = m_tilde(series);
  const double pi_min = mt >= 1.0 ? 0.0 : 1.0 - mt;
  if (!(pi_min < 1.0)) {
    throw InfeasibleError("init_cloud: prior curve has an empty feasible arc");
  }

  const int n = config.n_particles;
  ParticleCloud cloud;
  cloud.particles.resize(static_cast<std::size_t>(n));
  Eigen::VectorXd logw(n);

  const count_t z0 = series.z.front();
  for (int j = 0; j < n; ++j) {
    RngStream rs(config.seed, draw_stream(0, static_cast<std::uint64_t>(j)));
    // Stratified uniform over the arc: stratum j carries one particle.
    const double u = (static_cast<double>(j) + rs.uniform_open()) / n;
    const double pi = pi_min + (1.0 - pi_min) * u;
    const double lambda = lambda_from_pi(mt, pi, config.phi);
    Particle& p = cloud.particles[static_cast<std::size_t>(j)];
    p.theta = {pi, lambda};
    p.theta_k = encode_theta(pi, lambda, config.kernel_space);
    if (config.x0.kind == X0Prior::Kind::known) {
      p.x = config.x0.value;
    } else {
      const double span = config.x0.hi - config.x0.lo + 1.0;
      p.x = std::min(config.x0.hi,
                     config.x0.lo + std::floor(rs.uniform01() * span));
    }
    logw(j) = binomial_log_pmf(p.x, z0, pi);
  }

  const double log_norm = normalize_log_weights(logw, 0, "assimilating Z_0");
  cloud.weights = std::move(logw);
  cloud.t = 0;
  cloud.z_t = z0;
  cloud.ess = effective_sample_size(cloud.weights);
  cloud.log_evidence_increment = log_norm - std::log(static_cast<double>(n));
  cloud.unique_ancestors = n;
  return cloud;
}

ParticleCloud lw_step(const ParticleCloud& cloud, count_t z_next,
                      const FilterConfig& config) {
  config.validate();
  if (!(z_next >= 0.0)) throw std::domain_error("lw_step: z_next must be >= 0");
  const int n = static_cast<int>(cloud.particles.size());
  if (n != config.n_particles) {
    throw std::invalid_argument("lw_step: cloud size differs from config");
  }
  const int t_next = cloud.t + 1;
  const double a = config.shrinkage_a();
  const double h2 = config.kernel_h2();
  const count_t z_curr = cloud.z_t;

  // Kernel-space mean and covariance of the parameter cloud.
  Eigen::Vector2d theta_bar = Eigen::Vector2d::Zero();
  for (int i = 0; i < n; ++i) {
    theta_bar += cloud.weights(i) * cloud.particles[static_cast<std::size_t>(i)].theta_k;
  }
  Eigen::Matrix2d vmat = Eigen::Matrix2d::Zero();
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d d =
        cloud.particles[static_cast<std::size_t>(i)].theta_k - theta_bar;
    vmat += cloud.weights(i) * d * d.transpose();
  }
  if (config.jitter > 0.0) {
    vmat += config.jitter * Eigen::Matrix2d::Identity();
  }
  const Eigen::Matrix2d kernel_sqrt = detail::psd_sqrt(h2 * vmat);

  // Shrunk kernel locations and predictive log-likelihoods at the point
  // estimates (mu_i, decoded pi of the location).
  std::vector<Eigen::Vector2d> locations(static_cast<std::size_t>(n));
  Eigen::VectorXd predictive(n);
  Eigen::VectorXd aux_logw(n);
  for (int i = 0; i < n; ++i) {
    const Particle& p = cloud.particles[static_cast<std::size_t>(i)];
    locations[static_cast<std::size_t>(i)] = a * p.theta_k + (1.0 - a) * theta_bar;
    if (cloud.weights(i) == 0.0) {
      predictive(i) = kNegInf;
      aux_logw(i) = kNegInf;
      continue;
    }
    const auto [pi_loc, lambda_loc] =
        decode_theta(locations[static_cast<std::size_t>(i)], config.kernel_space);
    (void)lambda_loc;
    const double mu =
        config.transition == TransitionMode::conditional
            ? transition_mean(p.x, z_curr, {p.theta(0), p.theta(1), config.phi})
            : static_cast<double>(p.x) *
                  compute_moments({p.theta(0), p.theta(1), config.phi}).m;
    predictive(i) = std::isfinite(mu) ? binomial_log_pmf(mu, z_next, pi_loc)
                                      : kNegInf;
    aux_logw(i) = std::log(cloud.weights(i)) + predictive(i);
  }
  Eigen::VectorXd aux = aux_logw;
  const double log_aux_norm = normalize_log_weights(aux, t_next, "in selection");

  // Cumulative weights once; every draw is an inverse-CDF lookup.
  std::vector<double> cdf(static_cast<std::size_t>(n));
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    acc += aux(i);
    cdf[static_cast<std::size_t>(i)] = acc;
  }

  double u_systematic = 0.0;
  if (config.resampling == ResamplingScheme::systematic) {
    RngStream rs(config.seed, draw_stream(t_next, kSystematicStream));
    u_systematic = rs.uniform01();
  }

  ParticleCloud next;
  next.particles.resize(static_cast<std::size_t>(n));
  Eigen::VectorXd logw(n);
  std::vector<int> ancestor(static_cast<std::size_t>(n));

  parallel_for(n, config.threads, [&](int j) {
    RngStream rs(config.seed, draw_stream(t_next, static_cast<std::uint64_t>(j)));
    const std::size_t k =
        config.resampling == ResamplingScheme::systematic
            ? index_from_cdf(cdf, (static_cast<double>(j) + u_systematic) / n)
            : index_from_cdf(cdf, rs.uniform01());
    ancestor[static_cast<std::size_t>(j)] = static_cast<int>(k);
    const Particle& parent = cloud.particles[k];

    Eigen::Vector2d proposal;
    if (config.kernel_space == KernelSpace::transformed) {
      proposal = locations[k] + kernel_sqrt * Eigen::Vector2d(rs.normal(), rs.normal());
    } else {
      // Literal-space kernel; invalid proposals are redrawn.
      int tries = 0;
      do {
        proposal =
            locations[k] + kernel_sqrt * Eigen::Vector2d(rs.normal(), rs.normal());
        if (++tries > 1000) {
          throw DegeneracyError(
              "lw_step: kernel cannot produce a valid parameter at step " +
                  std::to_string(t_next),
              t_next);
        }
      } while (!(proposal(0) > 0.0 && proposal(0) < 1.0 && proposal(1) > 0.0));
    }
    const auto [pi_new, lambda_new] = decode_theta(proposal, config.kernel_space);
    const ModelParams params{pi_new, lambda_new, config.phi};

    const count_t x_new = config.transition == TransitionMode::conditional
                              ? transition_sample(parent.x, z_curr, params, rs)
                              : transition_sample_marginal(parent.x, params, rs);

    Particle& out = next.particles[static_cast<std::size_t>(j)];
    out.x = x_new;
    out.theta = {pi_new, lambda_new};
    out.theta_k = proposal;
    logw(j) = binomial_log_pmf(x_new, z_next, pi_new) - predictive(k);
  });

  const double log_ratio_norm = normalize_log_weights(logw, t_next, "in reweighting");
  next.weights = std::move(logw);
  next.t = t_next;
  next.z_t = z_next;
  next.ess = effective_sample_size(next.weights);
  // log p(z_next | past) = log sum_i w_i p_i + log mean_j ratio_j.
  next.log_evidence_increment =
      log_aux_norm + log_ratio_norm - std::log(static_cast<double>(n));
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  int unique = 0;
  for (int anc : ancestor) {
    if (!seen[static_cast<std::size_t>(anc)]) {
      seen[static_cast<std::size_t>(anc)] = 1;
      ++unique;
    }
  }
  next.unique_ancestors = unique;
  return next;
}

StepSummary summarize_cloud_step(const ParticleCloud& cloud) {
  StepSummary s;
  s.t = cloud.t;
  s.ess = cloud.ess;
  s.log_evidence_increment = cloud.log_evidence_increment;
  s.unique_ancestors = cloud.unique_ancestors;
  double mpi = 0.0, mlam = 0.0, mx = 0.0;
  for (std::size_t i = 0; i < cloud.particles.size(); ++i) {
    const double w = cloud.weights(static_cast<Eigen::Index>(i));
    mpi += w * cloud.particles[i].theta(0);
    mlam += w * cloud.particles[i].theta(1);
    mx += w * cloud.particles[i].x;
  }
  double vpi = 0.0, vlam = 0.0, vx = 0.0;
  for (std::size_t i = 0; i < cloud.particles.size(); ++i) {
    const double w = cloud.weights(static_cast<Eigen::Index>(i));
    vpi += w * (cloud.particles[i].theta(0) - mpi) * (cloud.particles[i].theta(0) - mpi);
    vlam += w * (cloud.particles[i].theta(1) - mlam) * (cloud.particles[i].theta(1) - mlam);
    vx += w * (cloud.particles[i].x - mx) * (cloud.particles[i].x - mx);
  }
  s.mean_pi = mpi;
  s.var_pi = vpi;
  s.mean_lambda = mlam;
  s.var_lambda = vlam;
  s.mean_x = mx;
  s.var_x = vx;
  return s;
}

FilterResult run_filter(const ObservedSeries& series,
                        const FilterConfig& config) {
  config.validate();
  series.validate();
  if (series.generations() < 1) {
    throw SeriesError("run_filter: need at least two observations");
  }

  FilterResult result;
  ParticleCloud cloud = init_cloud(series, config);
  result.history.push_back(summarize_cloud_step(cloud));
  result.diagnostics.min_ess = cloud.ess;

  const int n_gen = series.generations();
  for (int t = 1; t <= n_gen; ++t) {
    cloud = lw_step(cloud, series.z[static_cast<std::size_t>(t)], config);
    ++result.diagnostics.resample_count;
    result.diagnostics.min_ess = std::min(result.diagnostics.min_ess, cloud.ess);
    if (cloud.ess < 0.05 * config.n_particles) {
      result.diagnostics.low_ess_steps.push_back(t);
    }
    result.history.push_back(summarize_cloud_step(cloud));
  }
  result.final_cloud = std::move(cloud);
  return result;
}

}  // namespace branchfilter
