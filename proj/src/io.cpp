#include "branchfilter/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "branchfilter/errors.hpp"

namespace branchfilter {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_count(const std::string& raw, std::size_t line) {
  const std::string s = trim(raw);
  if (s.empty()) throw CsvError("empty numeric field", line);
  double value = 0.0;
  const auto* begin = s.data();
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw CsvError("cannot parse number '" + s + "'", line);
  }
  if (!(value >= 0.0) || !std::isfinite(value)) {
    throw CsvError("counts must be finite and >= 0", line);
  }
  return value;
}

std::string format_count(count_t v) {
  if (v == std::floor(v) && std::abs(v) < 0x1.0p63) {
    return std::to_string(static_cast<long long>(v));
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

SeriesCsv read_series_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  bool has_x = false;
  SeriesCsv out;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto fields = split_csv_line(stripped);
    if (!header_seen) {
      if (fields.size() == 2 && trim(fields[0]) == "n" && trim(fields[1]) == "z") {
        has_x = false;
      } else if (fields.size() == 3 && trim(fields[0]) == "n" &&
                 trim(fields[1]) == "x" && trim(fields[2]) == "z") {
        has_x = true;
        out.x.emplace();
      } else {
        throw CsvError("expected header 'n,z' or 'n,x,z'", lineno);
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != (has_x ? 3u : 2u)) {
      throw CsvError("wrong number of fields", lineno);
    }
    parse_count(fields[0], lineno);  // generation index, validated only
    if (has_x) {
      out.x->push_back(parse_count(fields[1], lineno));
      out.z.push_back(parse_count(fields[2], lineno));
    } else {
      out.z.push_back(parse_count(fields[1], lineno));
    }
  }
  if (!header_seen) throw CsvError("missing header", lineno == 0 ? 1 : lineno);
  if (out.z.empty()) throw CsvError("no data rows", lineno);
  return out;
}

SeriesCsv read_series_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot open '" + path.string() + "'", 0);
  return read_series_csv(in);
}

void write_trajectory_csv(
    std::ostream& out, const Trajectory& traj,
    const std::vector<std::pair<std::string, std::string>>& metadata) {
  for (const auto& [key, value] : metadata) {
    out << "# " << key << "=" << value << "\n";
  }
  out << "n,x,z\n";
  for (std::size_t t = 0; t < traj.x.size(); ++t) {
    out << t << "," << format_count(traj.x[t]) << "," << format_count(traj.z[t])
        << "\n";
  }
}

std::uint64_t fnv1a64(std::string_view data) noexcept {
  std::uint64_t hash = 0xCBF29CE484222325ull;
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 0x100000001B3ull;
  }
  return hash;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(value));
  return buf;
}

nlohmann::ordered_json to_json(const MomentSet& ms) {
  return {{"m_plus", ms.m_plus},     {"s2_plus", ms.s2_plus},
          {"m_minus", ms.m_minus},   {"s2_minus", ms.s2_minus},
          {"m", ms.m},               {"s2", ms.s2},
          {"gamma2", ms.gamma2}};
}

nlohmann::ordered_json to_json(const EstimateReport& report) {
  nlohmann::ordered_json j;
  j["m_bar"] = report.m_bar;
  j["m_tilde"] = report.m_tilde;
  j["m_hat_odd"] = report.m_hat_odd;
  j["gamma_hat_sq"] = report.gamma_hat_sq;
  j["gamma_hat_odd_sq"] = report.gamma_hat_odd_sq;
  j["ci_m"] = {{"lo", report.ci_m.lo}, {"hi", report.ci_m.hi}};
  j["ci_gamma2"] = {{"lo", report.ci_gamma2.lo}, {"hi", report.ci_gamma2.hi}};
  j["pi_lambda"] = {{"feasible", report.pi_lambda.feasible},
                    {"pi", report.pi_lambda.feasible ? nlohmann::ordered_json(report.pi_lambda.pi)
                                                     : nlohmann::ordered_json(nullptr)},
                    {"lambda", report.pi_lambda.feasible
                                   ? nlohmann::ordered_json(report.pi_lambda.lambda)
                                   : nlohmann::ordered_json(nullptr)},
                    {"multiple_roots", report.pi_lambda.multiple_roots}};
  j["n0"] = report.n0;
  j["level"] = report.level;
  return j;
}

nlohmann::ordered_json to_json(const HpdSet& hpd) {
  nlohmann::ordered_json intervals = nlohmann::ordered_json::array();
  for (const auto& iv : hpd.intervals) {
    intervals.push_back({{"lo", iv.lo}, {"hi", iv.hi}});
  }
  return {{"level", hpd.level},
          {"intervals", intervals},
          {"attained_mass", hpd.attained_mass}};
}

nlohmann::ordered_json to_json(const PosteriorSummary& summary) {
  nlohmann::ordered_json j;
  j["mean"] = {{"pi", summary.mean(0)}, {"lambda", summary.mean(1)}};
  j["joint_mode"] = {{"pi", summary.joint_mode(0)},
                     {"lambda", summary.joint_mode(1)}};
  j["marginal_mode"] = {{"pi", summary.marginal_mode_pi},
                        {"lambda", summary.marginal_mode_lambda}};
  j["cov"] = {{summary.cov(0, 0), summary.cov(0, 1)},
              {summary.cov(1, 0), summary.cov(1, 1)}};
  j["hpd_pi"] = to_json(summary.hpd_pi);
  j["hpd_lambda"] = to_json(summary.hpd_lambda);
  j["kde_bandwidth"] = {{"pi", summary.marginal_pi.bandwidth},
                        {"lambda", summary.marginal_lambda.bandwidth}};
  return j;
}

nlohmann::ordered_json to_json(const FilterConfig& config) {
  nlohmann::ordered_json j;
  j["n_particles"] = config.n_particles;
  j["delta"] = config.delta;
  j["phi"] = config.phi;
  if (config.x0.kind == X0Prior::Kind::known) {
    j["x0"] = {{"mode", "known"}, {"value", config.x0.value}};
  } else {
    j["x0"] = {{"mode", "discrete_uniform"},
               {"lo", config.x0.lo},
               {"hi", config.x0.hi}};
  }
  j["transition"] =
      config.transition == TransitionMode::conditional ? "conditional" : "marginal";
  j["kernel"] =
      config.kernel_space == KernelSpace::transformed ? "transformed" : "natural";
  j["resampling"] = config.resampling == ResamplingScheme::multinomial
                        ? "multinomial"
                        : "systematic";
  j["jitter"] = config.jitter;
  j["seed"] = config.seed;
  // threads is an execution knob, not part of the statistical configuration:
  // results are identical at any thread count, so it stays out of the
  // reproducibility hash.
  return j;
}

nlohmann::ordered_json to_json(const StepSummary& step) {
  return {{"t", step.t},
          {"ess", step.ess},
          {"mean_pi", step.mean_pi},
          {"var_pi", step.var_pi},
          {"mean_lambda", step.mean_lambda},
          {"var_lambda", step.var_lambda},
          {"mean_x", step.mean_x},
          {"var_x", step.var_x},
          {"log_evidence_increment", step.log_evidence_increment},
          {"unique_ancestors", step.unique_ancestors}};
}

nlohmann::ordered_json to_json(const FilterDiagnostics& diag) {
  return {{"resample_count", diag.resample_count},
          {"min_ess", diag.min_ess},
          {"low_ess_steps", diag.low_ess_steps}};
}

}  // namespace branchfilter
