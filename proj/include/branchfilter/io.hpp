#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "branchfilter/estimators.hpp"
#include "branchfilter/filter.hpp"
#include "branchfilter/model.hpp"
#include "branchfilter/posterior.hpp"

namespace branchfilter {

inline constexpr std::string_view kVersion = "0.1.0";

// Parsed count series; x is absent when the file only carries observations.
struct SeriesCsv {
  std::vector<count_t> z;
  std::optional<std::vector<count_t>> x;
};

// Reads `n,z` or `n,x,z` CSV (UTF-8, LF, '#' comment lines allowed before
// and after the header). Throws CsvError with the 1-based physical line.
SeriesCsv read_series_csv(std::istream& in);
SeriesCsv read_series_csv_file(const std::filesystem::path& path);

// Writes `n,x,z` with one row per generation, preceded by `# key=value`
// metadata comment lines in the given order.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj,
                          const std::vector<std::pair<std::string, std::string>>& metadata);

// FNV-1a 64-bit; used for config hashes and fixture digests.
std::uint64_t fnv1a64(std::string_view data) noexcept;
std::string hex64(std::uint64_t value);

// JSON encoders (stable field order).
nlohmann::ordered_json to_json(const MomentSet& ms);
nlohmann::ordered_json to_json(const EstimateReport& report);
nlohmann::ordered_json to_json(const HpdSet& hpd);
nlohmann::ordered_json to_json(const PosteriorSummary& summary);
nlohmann::ordered_json to_json(const FilterConfig& config);
nlohmann::ordered_json to_json(const StepSummary& step);
nlohmann::ordered_json to_json(const FilterDiagnostics& diag);

}  // namespace branchfilter
