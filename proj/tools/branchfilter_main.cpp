// branchfilter: simulate partially observed branching epidemics, estimate
// their offspring moments, and run the Liu-West particle filter over an
// observed detection series.
//
// Exit codes: 0 success, 2 usage, 3 input parse, 4 numerical/degeneracy,
// 5 infeasible configuration.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "branchfilter/errors.hpp"
#include "branchfilter/estimators.hpp"
#include "branchfilter/filter.hpp"
#include "branchfilter/fixtures.hpp"
#include "branchfilter/io.hpp"
#include "branchfilter/model.hpp"
#include "branchfilter/posterior.hpp"

namespace {

using branchfilter::count_t;
using nlohmann::ordered_json;

constexpr int kExitUsage = 2;
constexpr int kExitParse = 3;
constexpr int kExitNumerical = 4;
constexpr int kExitInfeasible = 5;

std::string config_hash(const ordered_json& config) {
  return branchfilter::hex64(branchfilter::fnv1a64(config.dump()));
}

std::string format_count_value(count_t v) {
  if (v == std::floor(v) && std::abs(v) < 0x1.0p63) {
    return std::to_string(static_cast<long long>(v));
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << body;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  double pi = 0.4;
  double lambda = 0.6;
  double phi = 0.5;
  count_t x0 = 100;
  int horizon = 30;
  std::uint64_t seed = 0;
  bool condition_survival = false;
  int attempt_cap = 10000;
  std::string out = "trajectory.csv";
};

int run_simulate(const SimulateArgs& args) {
  const branchfilter::ModelParams params{args.pi, args.lambda, args.phi};
  params.validate();
  ordered_json config = {{"pi", args.pi},
                         {"lambda", args.lambda},
                         {"phi", args.phi},
                         {"x0", args.x0},
                         {"n", args.horizon},
                         {"condition_survival", args.condition_survival},
                         {"attempt_cap", args.attempt_cap},
                         {"seed", args.seed}};
  const std::string hash = config_hash(config);

  branchfilter::RngStream rng(args.seed, 0);
  const branchfilter::Trajectory traj =
      branchfilter::simulate(params, args.x0, args.horizon, rng,
                             args.condition_survival, args.attempt_cap);

  std::ostringstream csv;
  branchfilter::write_trajectory_csv(
      csv, traj,
      {{"generator", std::string("branchfilter simulate v") + std::string(branchfilter::kVersion)},
       {"seed", std::to_string(args.seed)},
       {"config_hash", hash}});
  write_text_file(args.out, csv.str());

  const branchfilter::MomentSet moments = branchfilter::compute_moments(params);
  ordered_json summary;
  summary["command"] = "simulate";
  summary["version"] = branchfilter::kVersion;
  summary["seed"] = args.seed;
  summary["config_hash"] = hash;
  summary["config"] = config;
  summary["moments"] = branchfilter::to_json(moments);
  summary["extinct"] = traj.x.back() == 0.0;
  summary["final_x"] = traj.x.back();
  summary["out"] = args.out;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateArgs {
  std::string in;
  double level = 0.95;
  double phi = 0.5;
  bool odd_pair = false;
  std::string out = "estimate.json";
};

int run_estimate(const EstimateArgs& args) {
  const branchfilter::SeriesCsv csv = branchfilter::read_series_csv_file(args.in);
  branchfilter::ObservedSeries series{csv.z};
  if (series.z.size() < 2) {
    throw branchfilter::SeriesError("estimate: need at least two generations");
  }
  const branchfilter::EstimateReport report =
      branchfilter::estimate_report(series, args.phi, args.level, args.odd_pair);

  ordered_json config = {{"in", args.in},
                         {"level", args.level},
                         {"phi", args.phi},
                         {"odd_pair", args.odd_pair}};
  ordered_json j;
  j["command"] = "estimate";
  j["version"] = branchfilter::kVersion;
  j["config_hash"] = config_hash(config);
  j["config"] = config;
  j["report"] = branchfilter::to_json(report);
  const std::string body = j.dump(2) + "\n";
  write_text_file(args.out, body);
  std::cout << body;
  return 0;
}

// ---------------------------------------------------------------------------
// filter

struct FilterArgs {
  std::string in;
  int particles = 2000;
  double delta = 0.95;
  double phi = 0.5;
  count_t x0 = 100;
  std::string x0_prior;  // "lo:hi" when x0 is unknown
  std::string transition = "conditional";
  std::string kernel = "transformed";
  std::string resampling = "systematic";
  double jitter = 0.0;
  std::uint64_t seed = 0;
  int threads = 1;
  int grid = 512;
  std::string out_dir = ".";
};

branchfilter::FilterConfig make_filter_config(const FilterArgs& args) {
  branchfilter::FilterConfig config;
  config.n_particles = args.particles;
  config.delta = args.delta;
  config.phi = args.phi;
  if (args.x0_prior.empty()) {
    config.x0 = branchfilter::X0Prior::known(args.x0);
  } else {
    const auto colon = args.x0_prior.find(':');
    if (colon == std::string::npos) {
      throw CLI::ValidationError("--x0-prior", "expected 'lo:hi'");
    }
    const double lo = std::stod(args.x0_prior.substr(0, colon));
    const double hi = std::stod(args.x0_prior.substr(colon + 1));
    config.x0 = branchfilter::X0Prior::discrete_uniform(lo, hi);
  }
  config.transition = args.transition == "marginal"
                          ? branchfilter::TransitionMode::marginal
                          : branchfilter::TransitionMode::conditional;
  config.kernel_space = args.kernel == "natural"
                            ? branchfilter::KernelSpace::natural
                            : branchfilter::KernelSpace::transformed;
  config.resampling = args.resampling == "multinomial"
                          ? branchfilter::ResamplingScheme::multinomial
                          : branchfilter::ResamplingScheme::systematic;
  config.jitter = args.jitter;
  config.seed = args.seed;
  config.threads = args.threads;
  config.validate();
  return config;
}

std::string density_csv_1d(const branchfilter::DensityGrid1D& grid,
                           const std::string& axis, const std::string& meta) {
  std::ostringstream out;
  out << meta;
  out << axis << ",density\n";
  for (Eigen::Index i = 0; i < grid.points.size(); ++i) {
    out << grid.points(i) << "," << grid.density(i) << "\n";
  }
  return out.str();
}

int run_filter_cmd(const FilterArgs& args) {
  const branchfilter::SeriesCsv csv = branchfilter::read_series_csv_file(args.in);
  branchfilter::ObservedSeries series{csv.z};
  const branchfilter::FilterConfig config = make_filter_config(args);

  const ordered_json config_json = branchfilter::to_json(config);
  const std::string hash = config_hash(config_json);
  const std::string meta = "# generator=branchfilter filter v" +
                           std::string(branchfilter::kVersion) +
                           "\n# seed=" + std::to_string(args.seed) +
                           "\n# config_hash=" + hash + "\n";

  const branchfilter::FilterResult result = branchfilter::run_filter(series, config);
  const branchfilter::PosteriorSummary summary =
      branchfilter::summarize(result.final_cloud, args.grid);

  const std::filesystem::path dir(args.out_dir);
  std::filesystem::create_directories(dir);

  ordered_json j;
  j["command"] = "filter";
  j["version"] = branchfilter::kVersion;
  j["seed"] = args.seed;
  j["config_hash"] = hash;
  j["config"] = config_json;
  j["input"] = args.in;
  j["summary"] = branchfilter::to_json(summary);
  ordered_json history = ordered_json::array();
  for (const auto& step : result.history) history.push_back(branchfilter::to_json(step));
  j["history"] = history;
  j["diagnostics"] = branchfilter::to_json(result.diagnostics);
  write_text_file(dir / "posterior.json", j.dump(2) + "\n");

  std::ostringstream cloud;
  cloud << meta << "pi,lambda,x,weight\n";
  const auto& fc = result.final_cloud;
  for (std::size_t i = 0; i < fc.particles.size(); ++i) {
    cloud << fc.particles[i].theta(0) << "," << fc.particles[i].theta(1) << ","
          << format_count_value(fc.particles[i].x) << ","
          << fc.weights(static_cast<Eigen::Index>(i)) << "\n";
  }
  write_text_file(dir / "cloud.csv", cloud.str());

  write_text_file(dir / "marginal_pi.csv",
                  density_csv_1d(summary.marginal_pi, "pi", meta));
  write_text_file(dir / "marginal_lambda.csv",
                  density_csv_1d(summary.marginal_lambda, "lambda", meta));

  std::ostringstream joint;
  joint << meta << "pi,lambda,density\n";
  for (Eigen::Index i = 0; i < summary.joint.x.size(); ++i) {
    for (Eigen::Index k = 0; k < summary.joint.y.size(); ++k) {
      joint << summary.joint.x(i) << "," << summary.joint.y(k) << ","
            << summary.joint.density(i, k) << "\n";
    }
  }
  write_text_file(dir / "joint_grid.csv", joint.str());

  ordered_json brief;
  brief["command"] = "filter";
  brief["version"] = branchfilter::kVersion;
  brief["seed"] = args.seed;
  brief["config_hash"] = hash;
  brief["posterior_mean"] = {{"pi", summary.mean(0)}, {"lambda", summary.mean(1)}};
  brief["min_ess"] = result.diagnostics.min_ess;
  brief["out_dir"] = args.out_dir;
  std::cout << brief.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// moments

struct MomentsArgs {
  bool invert = false;
  double pi = 0.0;
  double lambda = 0.0;
  double m = 0.0;
  double gamma2 = 0.0;
  double phi = 0.5;
};

int run_moments(const MomentsArgs& args) {
  ordered_json j;
  j["command"] = "moments";
  j["version"] = branchfilter::kVersion;
  if (!args.invert) {
    const branchfilter::ModelParams params{args.pi, args.lambda, args.phi};
    params.validate();
    j["config"] = {{"pi", args.pi}, {"lambda", args.lambda}, {"phi", args.phi}};
    j["moments"] = branchfilter::to_json(branchfilter::compute_moments(params));
  } else {
    j["config"] = {{"m", args.m}, {"gamma2", args.gamma2}, {"phi", args.phi}};
    try {
      const branchfilter::MomentInversion inv =
          branchfilter::invert_moments(args.m, args.gamma2, args.phi);
      j["inversion"] = {{"feasible", true},
                        {"pi", inv.pi},
                        {"lambda", inv.lambda},
                        {"root_count", inv.root_count},
                        {"multiple_roots", inv.multiple_roots()}};
    } catch (const branchfilter::InfeasibleError& e) {
      j["inversion"] = {{"feasible", false}, {"reason", e.what()}};
    }
  }
  j["config_hash"] = config_hash(j["config"]);
  std::cout << j.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// fixtures

int run_fixtures(const std::string& name, const std::string& out,
                 const std::string& out_dir, bool list) {
  if (list) {
    for (const auto& f : branchfilter::bundled_fixtures()) {
      std::cout << f.name << " (pi=" << f.params.pi
                << ", lambda=" << f.params.lambda << ", x0="
                << format_count_value(f.x0)
                << (f.x0_treated_known ? "" : ", x0 treated unknown") << ")\n";
    }
    return 0;
  }
  auto write_fixture = [&](const branchfilter::Fixture& f,
                           const std::filesystem::path& path) {
    std::ostringstream csv;
    branchfilter::write_trajectory_csv(
        csv, f.trajectory,
        {{"generator", std::string("branchfilter fixtures v") +
                           std::string(branchfilter::kVersion)},
         {"fixture", std::string(f.name)}});
    write_text_file(path, csv.str());
  };
  if (!name.empty()) {
    write_fixture(branchfilter::fixture_by_name(name), out);
    return 0;
  }
  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  for (const auto& f : branchfilter::bundled_fixtures()) {
    write_fixture(f, dir / (std::string(f.name) + ".csv"));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"partially observed branching epidemics: simulation, moment "
               "estimation, and Liu-West particle filtering"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* simulate = app.add_subcommand("simulate", "simulate a trajectory");
  simulate->add_option("--pi", sim.pi, "detection probability")
      ->required()
      ->check(CLI::Range(0.0, 1.0).description("(0, 1)"));
  simulate->add_option("--lambda", sim.lambda, "infection rate")->required()
      ->check(CLI::PositiveNumber);
  simulate->add_option("--phi", sim.phi, "infective fraction of the interval")
      ->check(CLI::Range(0.0, 1.0));
  simulate->add_option("--x0", sim.x0, "initial population")
      ->check(CLI::Range(1.0, 1e18));
  simulate->add_option("--n", sim.horizon, "number of generations")
      ->required()
      ->check(CLI::Range(1, 1000000000));
  simulate->add_option("--seed", sim.seed, "RNG seed")->envname("BRANCHFILTER_SEED");
  simulate->add_flag("--condition-survival", sim.condition_survival,
                     "resimulate until the final generation is alive");
  simulate->add_option("--attempt-cap", sim.attempt_cap)->check(CLI::PositiveNumber);
  simulate->add_option("--out", sim.out, "output CSV path");

  EstimateArgs est;
  CLI::App* estimate = app.add_subcommand("estimate", "frequentist estimates from a series");
  estimate->add_option("--in", est.in, "input CSV (n,z or n,x,z)")->required();
  estimate->add_option("--level", est.level, "confidence level")
      ->check(CLI::Range(0.0, 1.0).description("(0, 1)"));
  estimate->add_option("--phi", est.phi)->check(CLI::Range(0.0, 1.0));
  estimate->add_flag("--odd-pair", est.odd_pair,
                     "invert the odd-index estimator pair instead");
  estimate->add_option("--out", est.out, "output JSON path");

  FilterArgs fil;
  CLI::App* filter = app.add_subcommand("filter", "Liu-West joint state/parameter filter");
  filter->add_option("--in", fil.in, "input CSV of observations")->required();
  filter->add_option("--particles", fil.particles)->check(CLI::Range(1, 100000000));
  filter->add_option("--delta", fil.delta, "kernel discount")
      ->check(CLI::Range(0.0, 1.0).description("(0, 1]"));
  filter->add_option("--phi", fil.phi)->check(CLI::Range(0.0, 1.0));
  filter->add_option("--x0", fil.x0, "known initial population");
  auto* x0p = filter->add_option("--x0-prior", fil.x0_prior,
                                 "discrete uniform prior 'lo:hi' on x0");
  x0p->excludes("--x0");
  filter->add_option("--transition", fil.transition)
      ->check(CLI::IsMember({"conditional", "marginal"}));
  filter->add_option("--kernel", fil.kernel)
      ->check(CLI::IsMember({"transformed", "natural"}));
  filter->add_option("--resampling", fil.resampling)
      ->check(CLI::IsMember({"multinomial", "systematic"}));
  filter->add_option("--jitter", fil.jitter)->check(CLI::NonNegativeNumber);
  filter->add_option("--seed", fil.seed)->envname("BRANCHFILTER_SEED");
  filter->add_option("--threads", fil.threads)->check(CLI::Range(1, 1024));
  filter->add_option("--grid", fil.grid, "marginal density grid size")
      ->check(CLI::Range(8, 1000000));
  filter->add_option("--out-dir", fil.out_dir);

  MomentsArgs mom;
  CLI::App* moments = app.add_subcommand("moments", "forward moments or inversion");
  moments->add_flag("--invert", mom.invert, "invert (m, gamma2) to (pi, lambda)");
  moments->add_option("--pi", mom.pi)->check(CLI::Range(0.0, 1.0).description("(0, 1)"));
  moments->add_option("--lambda", mom.lambda)->check(CLI::PositiveNumber);
  moments->add_option("--m", mom.m);
  moments->add_option("--gamma2", mom.gamma2);
  moments->add_option("--phi", mom.phi)->check(CLI::Range(0.0, 1.0));

  std::string fixture_name, fixture_out = "fixture.csv", fixture_dir = ".";
  bool fixture_list = false, fixture_all = false;
  CLI::App* fixtures = app.add_subcommand("fixtures", "bundled study scenarios");
  fixtures->add_flag("--list", fixture_list, "list fixture names");
  fixtures->add_option("--name", fixture_name, "fixture to export");
  fixtures->add_option("--out", fixture_out, "output CSV path for --name");
  fixtures->add_flag("--all", fixture_all, "export every fixture");
  fixtures->add_option("--out-dir", fixture_dir, "directory for --all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (simulate->parsed()) {
      if (!(sim.pi > 0.0 && sim.pi < 1.0)) {
        std::cerr << "usage error: --pi must lie strictly inside (0, 1)\n";
        return kExitUsage;
      }
      return run_simulate(sim);
    }
    if (estimate->parsed()) return run_estimate(est);
    if (filter->parsed()) return run_filter_cmd(fil);
    if (moments->parsed()) {
      if (!mom.invert && !(mom.pi > 0.0 && mom.pi < 1.0)) {
        std::cerr << "usage error: --pi must lie strictly inside (0, 1)\n";
        return kExitUsage;
      }
      return run_moments(mom);
    }
    if (fixtures->parsed()) {
      if (!fixture_list && !fixture_all && fixture_name.empty()) fixture_list = true;
      return run_fixtures(fixture_name, fixture_out, fixture_dir, fixture_list);
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const branchfilter::CsvError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitParse;
  } catch (const branchfilter::DegeneracyError& e) {
    std::cerr << "filter degeneracy: " << e.what()
              << "\nhint: retry with --jitter > 0 or more --particles\n";
    return kExitNumerical;
  } catch (const branchfilter::SurvivalCapError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const branchfilter::SeriesError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const branchfilter::InfeasibleError& e) {
    std::cerr << "infeasible configuration: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const std::domain_error& e) {
    std::cerr << "infeasible configuration: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
