#pragma once

// Problem files, command runners and deterministic JSON reports behind the
// `jetkcc` command line tool.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "jetkcc/dtransform.hpp"
#include "jetkcc/jetgeom.hpp"
#include "jetkcc/kcc.hpp"

namespace jetkcc {

inline constexpr const char* kToolVersion = "0.1.0";

/// Malformed input file. `path()` names the offending key, e.g.
/// "/system/F/3/expr".
class InputError : public Error {
 public:
  InputError(std::string path, const std::string& message)
      : Error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// FNV-1a 64-bit hash of `bytes`.
std::uint64_t fnv1a64(const std::string& bytes);

struct ProblemFile {
  int m = 0;
  int n = 0;
  MetricField h;
  std::optional<MetricField> phi;
  PdeSystem system;
  /// "explicit", "affine" or "first_order".
  std::string system_kind;
  std::vector<std::string> warnings;
  std::vector<JetPoint> points;
  std::optional<SectionMap> section;
  std::optional<SectionMap> variation;
  std::uint64_t hash = 0;
};

ProblemFile parse_problem(const std::string& text);
ProblemFile load_problem(const std::string& path);

CoordinateChange parse_change(const std::string& text, int m, int n);
CoordinateChange load_change(const std::string& path, int m, int n);

/// {"temporal_metric": [[...], ...]}; the dimension is the row count.
MetricField parse_metric_file(const std::string& text);
MetricField load_metric_file(const std::string& path);

/// [{"t": [...], "x": [...], "v": [[...], ...]}, ...] with v rows indexed by i.
std::vector<JetPoint> parse_points(const std::string& text, int m, int n);

std::string read_file(const std::string& path);

/// Comma-separated numbers, e.g. "0.5,1,-2"; `what` names the option in errors.
std::vector<double> parse_number_list(const std::string& text, const std::string& what);

struct RunOptions {
  std::uint64_t seed = 0;
  int samples = 10;
  std::vector<Invariant> which{std::begin(kAllInvariants), std::end(kAllInvariants)};
  /// Check tolerance; each command substitutes its default when unset.
  std::optional<double> tol;
  double step = 1e-5;
  /// Explicit evaluation points; otherwise the problem's points, otherwise
  /// `samples` points drawn with `seed`.
  std::optional<std::vector<JetPoint>> points;
};

struct Report {
  /// Serialized JSON, numbers with 17 significant digits.
  std::string text;
  bool pass = true;
  std::string first_failure;
  /// 0 on pass, 1 on a failed check.
  int exit_code() const { return pass ? 0 : 1; }
};

Report run_invariants(const ProblemFile& problem, const RunOptions& options);
/// `change_hash` is the FNV-1a hash of the coordinate-change file.
Report run_transform_check(const ProblemFile& problem, const CoordinateChange& change, const RunOptions& options,
                           std::uint64_t change_hash = 0);
Report run_fd_check(const ProblemFile& problem, const RunOptions& options);
Report run_characterize(const ProblemFile& problem, const std::vector<double>& base);
Report run_nullspace(const MetricField& h, const std::vector<std::vector<double>>& times, std::uint64_t input_hash);
Report run_jacobi_check(const ProblemFile& problem, const RunOptions& options);

/// Tolerances used when RunOptions::tol is unset.
inline constexpr double kDefaultTransformTol = 1e-6;
inline constexpr double kDefaultFdTol = 1e-5;
inline constexpr double kDefaultJacobiTol = 1e-6;

/// Finite-difference comparisons floor each component's denominator at this
/// fraction of the larger of the oracle and the differenced quantity at the
/// point.
inline constexpr double kFdScaleFloor = 1e-3;

}  // namespace jetkcc
