#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "jetkcc/cli.hpp"
#include "json.hpp"

namespace {

using jetkcc::InputError;
using jetkcc::ProblemFile;
using jetkcc::RunOptions;
using Json = nlohmann::json;

std::string data(const std::string& name) { return std::string(JETKCC_DATA_DIR) + "/" + name; }

std::string input_error_path(const std::string& text) {
  try {
    jetkcc::parse_problem(text);
  } catch (const InputError& e) {
    return e.path();
  }
  return "<no error>";
}

const char* kOscillator = R"({"m": 1, "n": 1, "temporal_metric": [["1"]],
  "system": {"F": [{"i": 1, "alpha": 1, "beta": 1, "expr": "x1"}]}})";

// Largest |value| of one invariant over all points of a report.
double report_max(const Json& report, const std::string& which) {
  double out = 0.0;
  for (const auto& pt : report["invariants"][which]["values"])
    for (const auto& c : pt["components"]) out = std::max(out, std::fabs(c["value"].get<double>()));
  return out;
}

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(jetkcc::fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(jetkcc::fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(LoadProblem, OscillatorLoads) {
  const ProblemFile p = jetkcc::parse_problem(kOscillator);
  EXPECT_EQ(p.m, 1);
  EXPECT_EQ(p.n, 1);
  EXPECT_EQ(p.system_kind, "explicit");
  EXPECT_TRUE(jetkcc::structurally_equal(p.system(0, 0, 0), jetkcc::parse("x1", 1, 1)));
  EXPECT_EQ(p.hash, jetkcc::fnv1a64(kOscillator));
}

TEST(LoadProblem, DuplicateCoverageIsRejected) {
  const std::string text = R"({"m": 2, "n": 1, "temporal_metric": [["1", "0"], ["0", "1"]],
    "system": {"F": [{"i": 1, "alpha": 1, "beta": 1, "expr": "0"},
                     {"i": 1, "alpha": 2, "beta": 1, "expr": "x1"},
                     {"i": 1, "alpha": 1, "beta": 2, "expr": "x1"},
                     {"i": 1, "alpha": 2, "beta": 2, "expr": "0"}]}})";
  EXPECT_EQ(input_error_path(text), "/system/F/2");
}

TEST(LoadProblem, MissingCoverageIsRejected) {
  const std::string text = R"({"m": 2, "n": 1, "temporal_metric": [["1", "0"], ["0", "1"]],
    "system": {"F": [{"i": 1, "alpha": 1, "beta": 1, "expr": "0"}]}})";
  EXPECT_EQ(input_error_path(text), "/system/F");
}

TEST(LoadProblem, ErrorsNameTheOffendingKey) {
  EXPECT_EQ(input_error_path(R"({"m": 1, "n": 1, "temporal_metric": [["1"]],
    "system": {"F": [{"i": 1, "alpha": 1, "beta": 1, "expr": "x1 +"}]}})"),
            "/system/F/0/expr");
  EXPECT_EQ(input_error_path(R"({"m": 1, "n": 1, "temporal_metric": [["1"]],
    "system": {"F": [{"i": 2, "alpha": 1, "beta": 1, "expr": "x1"}]}})"),
            "/system/F/0/i");
  EXPECT_EQ(input_error_path(R"({"m": 1, "n": 1, "temporal_metric": [["x2"]],
    "system": {"F": [{"i": 1, "alpha": 1, "beta": 1, "expr": "x1"}]}})"),
            "/temporal_metric/0/0");
  EXPECT_EQ(input_error_path(R"({"m": 1, "n": 1, "temporal_metric": [["1"]], "colour": 3,
    "system": {"F": [{"i": 1, "alpha": 1, "beta": 1, "expr": "x1"}]}})"),
            "/colour");
  EXPECT_EQ(input_error_path(R"({"n": 1, "temporal_metric": [["1"]], "system": {"F": []}})"), "/m");
  EXPECT_EQ(input_error_path(R"({"m": 1, "n": 1, "temporal_metric": [["1"]], "system": {"type": "affine"}})"),
            "/spatial_metric");
  EXPECT_EQ(input_error_path(R"({"m": 1, "n": 1, "temporal_metric": [["1"]], "system": {"type": "magic"}})"),
            "/system/type");
}

TEST(LoadProblem, ParseErrorsCarryPositions) {
  try {
    jetkcc::parse_problem(R"({"m": 1, "n": 1, "temporal_metric": [["1"]],
      "system": {"F": [{"i": 1, "alpha": 1, "beta": 1, "expr": "x1 + * 2"}]}})");
    FAIL() << "expected an input error";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("offset 5"), std::string::npos) << e.what();
  }
  try {
    jetkcc::parse_problem("{\"m\": 1,,}");
    FAIL() << "expected an input error";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos) << e.what();
  }
}

TEST(LoadProblem, AsymmetricMetricIsRejected) {
  EXPECT_EQ(input_error_path(R"({"m": 2, "n": 1, "temporal_metric": [["1", "t1"], ["0", "1"]],
    "system": {"F": [{"i": 1, "alpha": 1, "beta": 1, "expr": "0"}, {"i": 1, "alpha": 1, "beta": 2, "expr": "0"},
                     {"i": 1, "alpha": 2, "beta": 2, "expr": "0"}]}})"),
            "/temporal_metric/1/0");
}

TEST(LoadProblem, AffineBuilderMatchesLibrary) {
  const ProblemFile p = jetkcc::load_problem(data("affine_curved.json"));
  ASSERT_TRUE(p.phi.has_value());
  const jetkcc::PdeSystem expected = jetkcc::build_affine_system(p.h, *p.phi);
  for (int i = 0; i < p.n; ++i)
    for (int a = 0; a < p.m; ++a)
      for (int b = 0; b < p.m; ++b) EXPECT_TRUE(jetkcc::structurally_equal(p.system(i, a, b), expected(i, a, b)));
}

TEST(LoadProblem, FirstOrderBuilderAndSections) {
  const ProblemFile ds = jetkcc::load_problem(data("jet_ds.json"));
  EXPECT_EQ(ds.system_kind, "first_order");
  const ProblemFile flat = jetkcc::load_problem(data("affine_flat.json"));
  ASSERT_TRUE(flat.section && flat.variation);
  EXPECT_EQ(flat.section->n(), 2);
}

TEST(LoadProblem, PointsAndChange) {
  const auto pts = jetkcc::parse_points(R"([{"t": [0.5], "x": [1], "v": [[2]]}])", 1, 1);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_EQ(pts[0].v()(0, 0), 2.0);
  EXPECT_THROW(jetkcc::parse_points(R"([{"t": [0.5], "x": [1], "v": [[2, 3]]}])", 1, 1), InputError);
  EXPECT_THROW(jetkcc::parse_change(R"({"t_forward": ["t1"], "x_forward": ["x1"], "t_inverse": ["t1"]})", 1, 1),
               InputError);
  const auto cc = jetkcc::load_change(data("triangular_change.json"), 2, 2);
  EXPECT_EQ(cc.m(), 2);
}

TEST(RunInvariants, OscillatorHasUnitJacobiCurvature) {
  RunOptions opt;
  opt.samples = 5;
  const auto r = jetkcc::run_invariants(jetkcc::parse_problem(kOscillator), opt);
  EXPECT_TRUE(r.pass);
  const Json j = Json::parse(r.text);
  for (const auto& pt : j["invariants"]["P"]["values"]) {
    ASSERT_EQ(pt["components"].size(), 1u);
    EXPECT_EQ(pt["components"][0]["index"], Json::array({1, 1}));
    EXPECT_EQ(pt["components"][0]["value"].get<double>(), -1.0);
  }
  // eps = -x1.
  for (std::size_t k = 0; k < j["points"].size(); ++k) {
    const double x = j["points"][k]["x"][0].get<double>();
    EXPECT_DOUBLE_EQ(j["invariants"]["eps"]["values"][k]["components"][0]["value"].get<double>(), -x);
  }
  EXPECT_EQ(report_max(j, "R"), 0.0);
  EXPECT_EQ(report_max(j, "B"), 0.0);
  EXPECT_EQ(report_max(j, "D"), 0.0);
}

TEST(RunInvariants, AffineFirstInvariantVanishes) {
  RunOptions opt;
  opt.samples = 10;
  opt.which = {jetkcc::Invariant::eps, jetkcc::Invariant::D};
  const Json j = Json::parse(jetkcc::run_invariants(jetkcc::load_problem(data("affine_curved.json")), opt).text);
  EXPECT_LE(report_max(j, "eps"), 1e-9);
  EXPECT_EQ(report_max(j, "D"), 0.0);
  EXPECT_FALSE(j["invariants"].contains("P"));
}

TEST(RunInvariants, ZeroSystemHasZeroInvariantsMarkedExact) {
  const ProblemFile p = jetkcc::parse_problem(R"({"m": 1, "n": 2, "temporal_metric": [["1"]],
    "system": {"F": [{"i": 1, "alpha": 1, "beta": 1, "expr": "0"}, {"i": 2, "alpha": 1, "beta": 1, "expr": "0"}]}})");
  const Json j = Json::parse(jetkcc::run_invariants(p, RunOptions{}).text);
  for (const char* name : {"eps", "P", "R", "B", "D"}) {
    EXPECT_EQ(report_max(j, name), 0.0) << name;
    for (const auto& c : j["invariants"][name]["values"][0]["components"]) EXPECT_TRUE(c["structural_zero"]);
  }
}

TEST(RunInvariants, IndexTuplesMatchSignatureRank) {
  RunOptions opt;
  opt.samples = 1;
  const Json j = Json::parse(jetkcc::run_invariants(jetkcc::load_problem(data("jet_ds.json")), opt).text);
  for (const auto& [name, entry] : j["invariants"].items()) {
    const std::size_t rank = entry["signature"].size();
    for (const auto& c : entry["values"][0]["components"]) ASSERT_EQ(c["index"].size(), rank) << name;
  }
}

TEST(RunInvariants, ReportsAreDeterministicAndRoundTripNumbers) {
  const ProblemFile p = jetkcc::load_problem(data("jet_ds.json"));
  RunOptions opt;
  opt.seed = 42;
  opt.samples = 3;
  const auto a = jetkcc::run_invariants(p, opt);
  const auto b = jetkcc::run_invariants(p, opt);
  EXPECT_EQ(a.text, b.text);
  opt.seed = 43;
  EXPECT_NE(a.text, jetkcc::run_invariants(p, opt).text);

  // 17 significant digits reproduce the sampled doubles exactly.
  const Json j = Json::parse(a.text);
  const jetkcc::PointSampler sampler(p.m, p.n, 42);
  EXPECT_EQ(j["points"][1]["t"][0].get<double>(), sampler.point(1).t()[0]);
  EXPECT_EQ(j["points"][2]["v"][1][0].get<double>(), sampler.point(2).v()(1, 0));
}

TEST(RunChecks, TransformOnAffineProblemPasses) {
  const ProblemFile p = jetkcc::load_problem(data("affine_curved.json"));
  const auto cc = jetkcc::load_change(data("triangular_change.json"), p.m, p.n);
  RunOptions opt;
  opt.samples = 20;
  const auto r = jetkcc::run_transform_check(p, cc, opt);
  EXPECT_TRUE(r.pass) << r.text;
  const Json j = Json::parse(r.text);
  EXPECT_EQ(j["checks"].size(), 7u);
}

TEST(RunChecks, TransformFailureNamesFirstCheck) {
  const ProblemFile p = jetkcc::load_problem(data("jet_ds.json"));
  // A forward map paired with a wrong inverse fails the round trip on load.
  const auto bad = jetkcc::parse_change(R"({"t_forward": ["2*t1", "t2"], "x_forward": ["x1", "x2"],
    "t_inverse": ["t1", "t2"], "x_inverse": ["x1", "x2"]})", 2, 2);
  EXPECT_THROW(jetkcc::run_transform_check(p, bad, RunOptions{}), InputError);

  RunOptions opt;
  opt.tol = 0.0;
  opt.samples = 3;
  const auto cc = jetkcc::load_change(data("triangular_change.json"), 2, 2);
  const auto r = jetkcc::run_transform_check(p, cc, opt);
  ASSERT_FALSE(r.pass);
  EXPECT_EQ(r.exit_code(), 1);
  const Json j = Json::parse(r.text);
  std::string first;
  for (const auto& c : j["checks"])
    if (!c["pass"].get<bool>()) {
      first = c["name"];
      break;
    }
  EXPECT_EQ(r.first_failure, first);
  EXPECT_EQ(j["first_failure"], first);
}

TEST(RunChecks, FiniteDifferencesAgree) {
  for (const char* name : {"oscillator.json", "affine_curved.json", "jet_ds.json", "cubic.json"}) {
    const auto r = jetkcc::run_fd_check(jetkcc::load_problem(data(name)), RunOptions{});
    EXPECT_TRUE(r.pass) << name << "\n" << r.text;
  }
}

TEST(RunChecks, NullspaceFlatThreeTimesHasDimensionThree) {
  const auto h = jetkcc::load_metric_file(data("flat_metric_m3.json"));
  const auto r = jetkcc::run_nullspace(h, {{0.0, 0.0, 0.0}, {0.5, -0.5, 1.0}}, 0);
  EXPECT_TRUE(r.pass);
  const Json j = Json::parse(r.text);
  ASSERT_EQ(j["scan"].size(), 2u);
  for (const auto& e : j["scan"]) EXPECT_EQ(e["dimension"], 3);
  EXPECT_THROW(jetkcc::run_nullspace(h, {{0.0}}, 0), InputError);
}

TEST(RunChecks, JacobiOnFlatLinearData) {
  const auto r = jetkcc::run_jacobi_check(jetkcc::load_problem(data("affine_flat.json")), RunOptions{});
  EXPECT_TRUE(r.pass) << r.text;
  const Json j = Json::parse(r.text);
  EXPECT_EQ(j["checks"][1]["max_abs"].get<double>(), 0.0);
}

TEST(RunChecks, JacobiRefusesNonSolutions) {
  ProblemFile p = jetkcc::load_problem(data("affine_flat.json"));
  p.section = jetkcc::SectionMap({jetkcc::parse("t1^2", 2, 2), jetkcc::parse("0", 2, 2)});
  const auto r = jetkcc::run_jacobi_check(p, RunOptions{});
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.first_failure, "section_is_solution");

  ProblemFile q = jetkcc::parse_problem(kOscillator);
  EXPECT_THROW(jetkcc::run_jacobi_check(q, RunOptions{}), InputError);
}

TEST(RunChecks, CharacterizeAcceptsAffineAndRejectsCubic) {
  const auto ok = jetkcc::run_characterize(jetkcc::load_problem(data("affine_curved.json")), {0.3, 0.2, 0.1, 0.4});
  EXPECT_TRUE(ok.pass) << ok.text;
  const auto bad = jetkcc::run_characterize(jetkcc::load_problem(data("cubic.json")), {0.3, 0.2, 0.1});
  EXPECT_FALSE(bad.pass);
  EXPECT_EQ(bad.first_failure, "extraction_not_quadratic");
  EXPECT_THROW(jetkcc::run_characterize(jetkcc::load_problem(data("cubic.json")), {0.3}), InputError);
}

TEST(NumberList, ParsesAndRejects) {
  EXPECT_EQ(jetkcc::parse_number_list("0.5,1,-2", "--t"), (std::vector<double>{0.5, 1.0, -2.0}));
  EXPECT_THROW(jetkcc::parse_number_list("0.5,abc", "--t"), InputError);
  EXPECT_THROW(jetkcc::parse_number_list("1e999", "--t"), InputError);
}

}  // namespace
