#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace branchfilter {

// Weight collapse inside the particle filter. `step` is the index of the
// observation being assimilated (-1 when the context has no step).
class DegeneracyError : public std::runtime_error {
 public:
  explicit DegeneracyError(const std::string& what, int step = -1)
      : std::runtime_error(what), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

// Parameters or moments outside the model's valid region.
class InfeasibleError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Survival conditioning exhausted its attempt budget.
class SurvivalCapError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Observed series too short or identically zero for the requested estimator.
class SeriesError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Density estimation received a sample without spread.
class PointMassError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// CSV parse failure; `line` is 1-based and counts physical file lines.
class CsvError : public std::runtime_error {
 public:
  CsvError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace branchfilter
