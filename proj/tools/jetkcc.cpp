// jetkcc: multi-time KCC invariants of second-order PDE systems on J1(T,M).
//
// Exit codes: 0 pass, 1 check failure, 2 input error, 3 numeric degeneracy.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "jetkcc/cli.hpp"

namespace {

constexpr int kExitInput = 2;
constexpr int kExitDegenerate = 3;

std::vector<jetkcc::Invariant> parse_which(const std::string& text) {
  std::vector<jetkcc::Invariant> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string name = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    const auto which = jetkcc::invariant_from_name(name);
    if (!which) throw jetkcc::InputError("--which", "unknown invariant '" + name + "'");
    out.push_back(*which);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

int emit(const jetkcc::Report& report, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << report.text;
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw jetkcc::InputError(out_path, "cannot write report");
    out << report.text;
  }
  if (!report.pass) std::cerr << "jetkcc: check failed: " << report.first_failure << "\n";
  return report.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-time KCC invariants of second-order PDE systems"};
  app.set_version_flag("--version", jetkcc::kToolVersion);
  app.require_subcommand(1);

  std::string problem_path, change_path, metric_path, points_path, out_path, which_text, base_text;
  std::vector<std::string> t_points;
  std::uint64_t seed = 0;
  int samples = 10;
  int m_flag = 0;
  double tol = 0.0;
  double step = 1e-5;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Sampling seed")->capture_default_str();
    cmd->add_option("--samples", samples, "Number of sampled points")->capture_default_str();
    cmd->add_option("--out", out_path, "Write the report to this file instead of stdout");
  };

  auto* invariants = app.add_subcommand("invariants", "Evaluate invariants at points");
  invariants->add_option("problem", problem_path, "Problem file")->required();
  invariants->add_option("--which", which_text, "Comma-separated subset of eps,P,R,B,D");
  auto* points_opt = invariants->add_option("--points", points_path, "JSON file of evaluation points");
  add_common(invariants);

  auto* check = app.add_subcommand("check", "Run consistency checks");
  check->require_subcommand(1);
  auto* transform = check->add_subcommand("transform", "Covariance under a coordinate change");
  transform->add_option("problem", problem_path, "Problem file")->required();
  transform->add_option("change", change_path, "Coordinate-change file")->required();
  auto* tol_transform = transform->add_option("--tol", tol, "Relative tolerance (default 1e-6)");
  add_common(transform);

  auto* fd = check->add_subcommand("fd", "Symbolic derivatives against central differences");
  fd->add_option("problem", problem_path, "Problem file")->required();
  fd->add_option("--step", step, "Finite-difference step")->capture_default_str();
  auto* tol_fd = fd->add_option("--tol", tol, "Relative tolerance (default 1e-5)");
  add_common(fd);

  auto* jacobi = check->add_subcommand("jacobi", "Jacobi identity along the problem's section and variation");
  jacobi->add_option("problem", problem_path, "Problem file")->required();
  auto* tol_jacobi = jacobi->add_option("--tol", tol, "Absolute tolerance (default 1e-6)");
  add_common(jacobi);

  auto* characterize = app.add_subcommand("characterize", "Extract (Gamma, S) at a base point");
  characterize->add_option("problem", problem_path, "Problem file")->required();
  characterize->add_option("--base", base_text, "Base point t1,...,tm,x1,...,xn")->required();
  characterize->add_option("--out", out_path, "Write the report to this file instead of stdout");

  auto* nullspace = app.add_subcommand("nullspace", "Null space of the S constraints for a temporal metric");
  nullspace->add_option("metric", metric_path, "Metric file")->required();
  nullspace->add_option("--t", t_points, "Temporal point t1,...,tm; repeat to scan")->required();
  nullspace->add_option("--m", m_flag, "Temporal dimension")->required();
  nullspace->add_option("--out", out_path, "Write the report to this file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    jetkcc::RunOptions options;
    options.seed = seed;
    options.samples = samples;
    options.step = step;
    if (!which_text.empty()) options.which = parse_which(which_text);

    if (*invariants) {
      const auto problem = jetkcc::load_problem(problem_path);
      if (*points_opt) options.points = jetkcc::parse_points(jetkcc::read_file(points_path), problem.m, problem.n);
      return emit(jetkcc::run_invariants(problem, options), out_path);
    }
    if (*transform) {
      if (*tol_transform) options.tol = tol;
      const auto problem = jetkcc::load_problem(problem_path);
      const std::string change_text = jetkcc::read_file(change_path);
      const auto change = jetkcc::parse_change(change_text, problem.m, problem.n);
      return emit(jetkcc::run_transform_check(problem, change, options, jetkcc::fnv1a64(change_text)), out_path);
    }
    if (*fd) {
      if (*tol_fd) options.tol = tol;
      return emit(jetkcc::run_fd_check(jetkcc::load_problem(problem_path), options), out_path);
    }
    if (*jacobi) {
      if (*tol_jacobi) options.tol = tol;
      return emit(jetkcc::run_jacobi_check(jetkcc::load_problem(problem_path), options), out_path);
    }
    if (*characterize) {
      const auto problem = jetkcc::load_problem(problem_path);
      return emit(jetkcc::run_characterize(problem, jetkcc::parse_number_list(base_text, "--base")), out_path);
    }
    if (*nullspace) {
      const std::string text = jetkcc::read_file(metric_path);
      const auto h = jetkcc::parse_metric_file(text);
      if (m_flag != h.dim()) {
        throw jetkcc::InputError("--m", "metric file has dimension " + std::to_string(h.dim()));
      }
      std::vector<std::vector<double>> times;
      for (const auto& t : t_points) times.push_back(jetkcc::parse_number_list(t, "--t"));
      return emit(jetkcc::run_nullspace(h, times, jetkcc::fnv1a64(text)), out_path);
    }
  } catch (const jetkcc::DegenerateError& e) {
    std::cerr << "jetkcc: degenerate: " << e.what() << "\n";
    return kExitDegenerate;
  } catch (const jetkcc::EvaluationError& e) {
    std::cerr << "jetkcc: evaluation failed: " << e.what() << "\n";
    return kExitDegenerate;
  } catch (const jetkcc::Error& e) {
    std::cerr << "jetkcc: input error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
