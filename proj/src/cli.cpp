#include "jetkcc/cli.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "jetkcc/characterize.hpp"
#include "json.hpp"

namespace jetkcc {
namespace {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Input parsing

std::string key_path(const std::string& base, const std::string& key) { return base + "/" + key; }
std::string key_path(const std::string& base, std::size_t index) { return base + "/" + std::to_string(index); }

Json parse_json(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("", "invalid JSON at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

void require_object(const Json& j, const std::string& path) {
  if (!j.is_object()) throw InputError(path.empty() ? "/" : path, "expected an object");
}

void reject_unknown_keys(const Json& j, const std::string& path, std::initializer_list<const char*> known) {
  for (const auto& [key, value] : j.items()) {
    const bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return key == k; });
    if (!ok) throw InputError(key_path(path, key), "unknown key");
  }
}

const Json& member(const Json& j, const std::string& path, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw InputError(key_path(path, key), "missing required key");
  return *it;
}

int read_int(const Json& j, const std::string& path, int lo, int hi) {
  if (!j.is_number_integer()) throw InputError(path, "expected an integer");
  const auto v = j.get<long long>();
  if (v < lo || v > hi) {
    throw InputError(path, "expected a value in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return static_cast<int>(v);
}

double read_number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw InputError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw InputError(path, "expected a finite number");
  return v;
}

Expression read_expr(const Json& j, const std::string& path, int m, int n) {
  if (!j.is_string()) throw InputError(path, "expected an expression string");
  try {
    return parse(j.get<std::string>(), m, n);
  } catch (const ParseError& e) {
    throw InputError(path, e.what());
  }
}

std::vector<std::string> read_strings(const Json& j, const std::string& path, int count) {
  if (!j.is_array()) throw InputError(path, "expected an array of expression strings");
  if (static_cast<int>(j.size()) != count) {
    throw InputError(path, "expected " + std::to_string(count) + " entries, got " + std::to_string(j.size()));
  }
  std::vector<std::string> out;
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_string()) throw InputError(key_path(path, k), "expected an expression string");
    out.push_back(j[k].get<std::string>());
  }
  return out;
}

std::vector<Expression> read_exprs(const Json& j, const std::string& path, int count, int m, int n) {
  read_strings(j, path, count);
  std::vector<Expression> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(read_expr(j[k], key_path(path, k), m, n));
  return out;
}

MetricField read_metric(const Json& j, const std::string& path, MetricKind kind, int dim, int m, int n) {
  if (!j.is_array() || static_cast<int>(j.size()) != dim) {
    throw InputError(path, "expected " + std::to_string(dim) + " rows");
  }
  ExprArray g({dim, dim});
  for (int a = 0; a < dim; ++a) {
    const std::string row_path = key_path(path, static_cast<std::size_t>(a));
    const Json& row = j[static_cast<std::size_t>(a)];
    if (!row.is_array() || static_cast<int>(row.size()) != dim) {
      throw InputError(row_path, "expected " + std::to_string(dim) + " entries");
    }
    for (int b = 0; b < dim; ++b) {
      g(a, b) = read_expr(row[static_cast<std::size_t>(b)], key_path(row_path, static_cast<std::size_t>(b)), m, n);
    }
  }
  for (int a = 0; a < dim; ++a)
    for (int b = a + 1; b < dim; ++b)
      if (!structurally_equal(g(a, b), g(b, a))) {
        throw InputError(key_path(key_path(path, static_cast<std::size_t>(b)), static_cast<std::size_t>(a)),
                         "metric is not symmetric as written");
      }
  try {
    return MetricField(kind, std::move(g));
  } catch (const PreconditionError& e) {
    throw InputError(path, e.what());
  }
}

JetPoint read_point(const Json& j, const std::string& path, int m, int n) {
  require_object(j, path);
  reject_unknown_keys(j, path, {"t", "x", "v"});
  auto vec = [&](const char* key, int count) {
    const Json& a = member(j, path, key);
    const std::string p = key_path(path, key);
    if (!a.is_array() || static_cast<int>(a.size()) != count) {
      throw InputError(p, "expected " + std::to_string(count) + " numbers");
    }
    std::vector<double> out;
    for (std::size_t k = 0; k < a.size(); ++k) out.push_back(read_number(a[k], key_path(p, k)));
    return out;
  };
  std::vector<double> t = vec("t", m);
  std::vector<double> x = vec("x", n);
  const Json& vj = member(j, path, "v");
  const std::string vp = key_path(path, "v");
  if (!vj.is_array() || static_cast<int>(vj.size()) != n) throw InputError(vp, "expected " + std::to_string(n) + " rows");
  NumArray v({n, m});
  for (int i = 0; i < n; ++i) {
    const Json& row = vj[static_cast<std::size_t>(i)];
    const std::string rp = key_path(vp, static_cast<std::size_t>(i));
    if (!row.is_array() || static_cast<int>(row.size()) != m) {
      throw InputError(rp, "expected " + std::to_string(m) + " numbers");
    }
    for (int a = 0; a < m; ++a) v(i, a) = read_number(row[static_cast<std::size_t>(a)], key_path(rp, static_cast<std::size_t>(a)));
  }
  return JetPoint(std::move(t), std::move(x), std::move(v));
}

std::vector<JetPoint> read_points(const Json& j, const std::string& path, int m, int n) {
  if (!j.is_array()) throw InputError(path, "expected an array of points");
  std::vector<JetPoint> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(read_point(j[k], key_path(path, k), m, n));
  return out;
}

SectionMap read_section(const Json& j, const std::string& path, int m, int n) {
  auto comps = read_exprs(j, path, n, m, n);
  try {
    return SectionMap(std::move(comps));
  } catch (const PreconditionError& e) {
    throw InputError(path, e.what());
  }
}

PdeSystem read_explicit_system(const Json& entries, const std::string& path, int m, int n) {
  if (!entries.is_array()) throw InputError(path, "expected an array of {i, alpha, beta, expr} entries");
  PdeSystem F(m, n);
  std::set<std::tuple<int, int, int>> seen;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const Json& e = entries[k];
    const std::string ep = key_path(path, k);
    require_object(e, ep);
    reject_unknown_keys(e, ep, {"i", "alpha", "beta", "expr"});
    const int i = read_int(member(e, ep, "i"), key_path(ep, "i"), 1, n) - 1;
    int a = read_int(member(e, ep, "alpha"), key_path(ep, "alpha"), 1, m) - 1;
    int b = read_int(member(e, ep, "beta"), key_path(ep, "beta"), 1, m) - 1;
    if (a > b) std::swap(a, b);
    if (!seen.insert({i, a, b}).second) {
      throw InputError(ep, "duplicate coverage of F^" + std::to_string(i + 1) + "_(" + std::to_string(a + 1) + "," +
                               std::to_string(b + 1) + ")");
    }
    F.set(i, a, b, read_expr(member(e, ep, "expr"), key_path(ep, "expr"), m, n));
  }
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a)
      for (int b = a; b < m; ++b)
        if (!seen.count({i, a, b})) {
          throw InputError(path, "missing entry for F^" + std::to_string(i + 1) + "_(" + std::to_string(a + 1) + "," +
                                     std::to_string(b + 1) + ")");
        }
  return F;
}

ExprArray read_first_order_field(const Json& entries, const std::string& path, int m, int n) {
  if (!entries.is_array()) throw InputError(path, "expected an array of {i, alpha, expr} entries");
  ExprArray X({n, m});
  std::set<std::pair<int, int>> seen;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const Json& e = entries[k];
    const std::string ep = key_path(path, k);
    require_object(e, ep);
    reject_unknown_keys(e, ep, {"i", "alpha", "expr"});
    const int i = read_int(member(e, ep, "i"), key_path(ep, "i"), 1, n) - 1;
    const int a = read_int(member(e, ep, "alpha"), key_path(ep, "alpha"), 1, m) - 1;
    if (!seen.insert({i, a}).second) {
      throw InputError(ep, "duplicate coverage of X^" + std::to_string(i + 1) + "_" + std::to_string(a + 1));
    }
    X(i, a) = read_expr(member(e, ep, "expr"), key_path(ep, "expr"), m, n);
  }
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a)
      if (!seen.count({i, a})) {
        throw InputError(path, "missing entry for X^" + std::to_string(i + 1) + "_" + std::to_string(a + 1));
      }
  return X;
}

// ---------------------------------------------------------------------------
// Report serialization

void append_number(std::string& out, double v) {
  if (!std::isfinite(v)) {
    out += "null";
    return;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

bool is_scalar(const Json& j) { return !j.is_array() && !j.is_object(); }

void write_json(const Json& j, std::string& out, int depth) {
  const std::string pad(static_cast<std::size_t>(2 * (depth + 1)), ' ');
  const std::string close_pad(static_cast<std::size_t>(2 * depth), ' ');
  switch (j.type()) {
    case Json::value_t::number_float:
      append_number(out, j.get<double>());
      return;
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      const bool flat = std::all_of(j.begin(), j.end(), [](const Json& e) { return is_scalar(e); });
      out += '[';
      for (std::size_t k = 0; k < j.size(); ++k) {
        if (k) out += flat ? ", " : ",";
        if (!flat) out += "\n" + pad;
        write_json(j[k], out, depth + 1);
      }
      if (!flat) out += "\n" + close_pad;
      out += ']';
      return;
    }
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      bool first = true;
      for (const auto& [key, value] : j.items()) {
        if (!first) out += ',';
        first = false;
        out += "\n" + pad + Json(key).dump() + ": ";
        write_json(value, out, depth + 1);
      }
      out += "\n" + close_pad + '}';
      return;
    }
    default:
      out += j.dump();
  }
}

std::string serialize(const Json& j) {
  std::string out;
  write_json(j, out, 0);
  out += '\n';
  return out;
}

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Json header(const std::string& command, std::uint64_t input_hash) {
  Json j;
  j["tool"] = "jetkcc";
  j["version"] = kToolVersion;
  j["command"] = command;
  j["input_hash"] = "fnv1a64:" + hex64(input_hash);
  j["index_base"] = 1;
  return j;
}

Json point_json(const JetPoint& p) {
  Json j;
  j["t"] = p.t();
  j["x"] = p.x();
  Json v = Json::array();
  for (int i = 0; i < p.n(); ++i) {
    Json row = Json::array();
    for (int a = 0; a < p.m(); ++a) row.push_back(p.v()(i, a));
    v.push_back(row);
  }
  j["v"] = v;
  return j;
}

Json one_based(const std::vector<int>& idx) {
  Json j = Json::array();
  for (int k : idx) j.push_back(k + 1);
  return j;
}

/// A named tolerance check; deviations are relative unless stated.
struct Check {
  std::string name;
  double max_abs = 0.0;
  double max_rel = 0.0;
  double tol = 0.0;
  bool pass = true;
  Json detail;
};

Json check_json(const Check& c) {
  Json j;
  j["name"] = c.name;
  j["max_abs"] = c.max_abs;
  j["max_rel"] = c.max_rel;
  j["tol"] = c.tol;
  j["pass"] = c.pass;
  if (!c.detail.is_null()) j["detail"] = c.detail;
  return j;
}

Report finish(Json j, const std::vector<Check>& checks) {
  Report r;
  Json arr = Json::array();
  for (const auto& c : checks) {
    arr.push_back(check_json(c));
    if (!c.pass && r.pass) {
      r.pass = false;
      r.first_failure = c.name;
    }
  }
  j["checks"] = arr;
  j["pass"] = r.pass;
  j["first_failure"] = r.pass ? Json(nullptr) : Json(r.first_failure);
  r.text = serialize(j);
  return r;
}

std::vector<JetPoint> choose_points(const ProblemFile& problem, const RunOptions& options, std::string& source) {
  if (options.points) {
    source = "points_file";
    return *options.points;
  }
  if (!problem.points.empty()) {
    source = "problem";
    return problem.points;
  }
  if (options.samples < 1) throw InputError("--samples", "must be positive");
  source = "sampled";
  const PointSampler sampler(problem.m, problem.n, options.seed);
  std::vector<JetPoint> out;
  for (int k = 0; k < options.samples; ++k) out.push_back(sampler.point(static_cast<std::uint64_t>(k)));
  return out;
}

Json sampling_json(const RunOptions& options, const std::string& source) {
  Json j;
  j["source"] = source;
  j["seed"] = options.seed;
  if (source == "sampled") {
    j["samples"] = options.samples;
    j["boxes"] = Json{{"t", {-1.0, 1.0}}, {"x", {-1.0, 1.0}}, {"v", {-2.0, 2.0}}};
  }
  return j;
}

Json signature_json(const IndexSignature& sig) {
  Json slots = Json::array();
  for (const auto& s : sig.slots()) {
    slots.push_back(Json{{"name", s.name},
                         {"kind", s.kind == IndexKind::temporal ? "temporal" : "spatial"},
                         {"variance", s.variance == Variance::upper ? "upper" : "lower"}});
  }
  return slots;
}

double max_abs_of(const NumArray& a) {
  double out = 0.0;
  for (double v : a.flat()) out = std::max(out, std::fabs(v));
  return out;
}

// ---------------------------------------------------------------------------
// Finite differences

JetPoint shifted(const JetPoint& p, VariableId var, double delta) {
  JetPoint q = p;
  switch (var.kind()) {
    case VariableId::Kind::temporal:
      q.t()[static_cast<std::size_t>(var.temporal())] += delta;
      break;
    case VariableId::Kind::spatial:
      q.x()[static_cast<std::size_t>(var.spatial())] += delta;
      break;
    case VariableId::Kind::velocity:
      q.v()(var.spatial(), var.temporal()) += delta;
      break;
  }
  return q;
}

template <class Fn>
NumArray central_difference(const JetPoint& p, VariableId var, double step, Fn&& f) {
  NumArray plus = f(shifted(p, var, step));
  const NumArray minus = f(shifted(p, var, -step));
  auto out = plus.flat();
  const auto mo = minus.flat();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = (out[k] - mo[k]) / (2.0 * step);
  return plus;
}

/// Accumulates |a - b| / max(|a|, |b|, floor) with floor = kFdScaleFloor *
/// max(largest oracle component, `input_scale`), where `input_scale` is the
/// size of the differenced quantity and so sets the size of the FD noise.
struct FdComparison {
  double max_abs = 0.0;
  double max_rel = 0.0;
  std::vector<int> worst_index;
  std::uint64_t worst_point = 0;

  void add(const NumArray& symbolic, const NumArray& oracle, double input_scale, std::uint64_t point) {
    const double floor = std::max(kFdScaleFloor * std::max(max_abs_of(oracle), input_scale), kDeviationFloor);
    const auto s = symbolic.flat();
    const auto o = oracle.flat();
    for (std::size_t k = 0; k < s.size(); ++k) {
      const double diff = std::fabs(s[k] - o[k]);
      const double rel = diff / std::max({std::fabs(s[k]), std::fabs(o[k]), floor});
      max_abs = std::max(max_abs, diff);
      if (rel > max_rel) {
        max_rel = rel;
        worst_index = symbolic.index_of(k);
        worst_point = point;
      }
    }
  }

  Check check(const std::string& name, double tol) const {
    Check c{name, max_abs, max_rel, tol, max_rel <= tol, Json()};
    if (!worst_index.empty()) c.detail = Json{{"worst_index", one_based(worst_index)}, {"worst_point", worst_point}};
    return c;
  }
};

std::vector<VariableId> jet_variables(int m, int n) {
  std::vector<VariableId> out;
  for (int a = 0; a < m; ++a) out.push_back(VariableId::t(a));
  for (int i = 0; i < n; ++i) out.push_back(VariableId::x(i));
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a) out.push_back(VariableId::v(i, a));
  return out;
}

Eigen::MatrixXd to_matrix(const NumArray& a) {
  const int d = a.shape()[0];
  Eigen::MatrixXd out(d, d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) out(r, c) = a(r, c);
  return out;
}

std::vector<double> parse_csv_numbers(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size() || !std::isfinite(v)) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::logic_error&) {
      throw InputError(what, "cannot read '" + item + "' as a number");
    }
  }
  return out;
}

}  // namespace

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(path, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ProblemFile parse_problem(const std::string& text) {
  const Json j = parse_json(text);
  require_object(j, "");
  reject_unknown_keys(j, "", {"m", "n", "temporal_metric", "spatial_metric", "system", "points", "section", "variation"});
  const int m = read_int(member(j, "", "m"), "/m", 1, kMaxDim);
  const int n = read_int(member(j, "", "n"), "/n", 1, kMaxDim);

  MetricField h = read_metric(member(j, "", "temporal_metric"), "/temporal_metric", MetricKind::temporal, m, m, n);
  std::optional<MetricField> phi;
  if (j.contains("spatial_metric")) {
    phi = read_metric(j["spatial_metric"], "/spatial_metric", MetricKind::spatial, n, m, n);
  }

  const Json& sys = member(j, "", "system");
  require_object(sys, "/system");
  std::string kind = "explicit";
  if (sys.contains("type")) {
    if (!sys["type"].is_string()) throw InputError("/system/type", "expected a string");
    kind = sys["type"].get<std::string>();
  }
  std::optional<PdeSystem> F;
  std::vector<std::string> warnings;
  if (kind == "explicit") {
    reject_unknown_keys(sys, "/system", {"type", "F"});
    F = read_explicit_system(member(sys, "/system", "F"), "/system/F", m, n);
  } else if (kind == "affine") {
    reject_unknown_keys(sys, "/system", {"type"});
    if (!phi) throw InputError("/spatial_metric", "required by the affine builder");
    F = build_affine_system(h, *phi);
  } else if (kind == "first_order") {
    reject_unknown_keys(sys, "/system", {"type", "X", "symmetrize"});
    const ExprArray X = read_first_order_field(member(sys, "/system", "X"), "/system/X", m, n);
    bool symmetrize = false;
    if (sys.contains("symmetrize")) {
      if (!sys["symmetrize"].is_boolean()) throw InputError("/system/symmetrize", "expected true or false");
      symmetrize = sys["symmetrize"].get<bool>();
    }
    FirstOrderSystem fo = build_first_order_system(X, symmetrize);
    F = std::move(fo.system);
    warnings = std::move(fo.warnings);
  } else {
    throw InputError("/system/type", "expected \"affine\" or \"first_order\"");
  }

  ProblemFile p{m, n, std::move(h), std::move(phi), std::move(*F), kind, std::move(warnings), {}, {}, {}, fnv1a64(text)};
  if (j.contains("points")) p.points = read_points(j["points"], "/points", m, n);
  if (j.contains("section")) p.section = read_section(j["section"], "/section", m, n);
  if (j.contains("variation")) p.variation = read_section(j["variation"], "/variation", m, n);
  return p;
}

ProblemFile load_problem(const std::string& path) { return parse_problem(read_file(path)); }

CoordinateChange parse_change(const std::string& text, int m, int n) {
  const Json j = parse_json(text);
  require_object(j, "");
  reject_unknown_keys(j, "", {"t_forward", "x_forward", "t_inverse", "x_inverse"});
  auto tf = read_exprs(member(j, "", "t_forward"), "/t_forward", m, m, n);
  auto xf = read_exprs(member(j, "", "x_forward"), "/x_forward", n, m, n);
  auto ti = read_exprs(member(j, "", "t_inverse"), "/t_inverse", m, m, n);
  auto xi = read_exprs(member(j, "", "x_inverse"), "/x_inverse", n, m, n);
  try {
    return CoordinateChange(m, n, std::move(tf), std::move(xf), std::move(ti), std::move(xi));
  } catch (const PreconditionError& e) {
    throw InputError("", e.what());
  }
}

CoordinateChange load_change(const std::string& path, int m, int n) { return parse_change(read_file(path), m, n); }

MetricField parse_metric_file(const std::string& text) {
  const Json j = parse_json(text);
  require_object(j, "");
  reject_unknown_keys(j, "", {"temporal_metric"});
  const Json& rows = member(j, "", "temporal_metric");
  if (!rows.is_array() || rows.empty() || rows.size() > static_cast<std::size_t>(kMaxDim)) {
    throw InputError("/temporal_metric", "expected 1 to " + std::to_string(kMaxDim) + " rows");
  }
  const int m = static_cast<int>(rows.size());
  return read_metric(rows, "/temporal_metric", MetricKind::temporal, m, m, 1);
}

MetricField load_metric_file(const std::string& path) { return parse_metric_file(read_file(path)); }

std::vector<JetPoint> parse_points(const std::string& text, int m, int n) {
  return read_points(parse_json(text), "", m, n);
}

// ---------------------------------------------------------------------------
// Commands

Report run_invariants(const ProblemFile& problem, const RunOptions& options) {
  Json j = header("invariants", problem.hash);
  std::string source;
  const std::vector<JetPoint> points = choose_points(problem, options, source);
  j["sampling"] = sampling_json(options, source);
  j["m"] = problem.m;
  j["n"] = problem.n;
  j["system_kind"] = problem.system_kind;
  j["warnings"] = problem.warnings;
  Json pts = Json::array();
  for (const auto& p : points) pts.push_back(point_json(p));
  j["points"] = pts;

  const KccInvariants inv(problem.system, problem.h);
  Json invariants;
  for (Invariant which : options.which) {
    const ExprArray& expr = inv.expressions(which);
    Json entry;
    entry["signature"] = signature_json(invariant_signature(which));
    entry["shape"] = expr.shape();
    Json per_point = Json::array();
    double max_abs = 0.0;
    for (std::size_t k = 0; k < points.size(); ++k) {
      const DTensorValue val = inv.evaluate(which, points[k]);
      Json comps = Json::array();
      const auto flat = val.values.flat();
      for (std::size_t c = 0; c < flat.size(); ++c) {
        const bool exact = expr.flat()[c].is_zero();
        const double v = exact ? 0.0 : flat[c];
        max_abs = std::max(max_abs, std::fabs(v));
        Json comp;
        comp["index"] = one_based(val.values.index_of(c));
        comp["value"] = v;
        if (exact) comp["structural_zero"] = true;
        comps.push_back(comp);
      }
      per_point.push_back(Json{{"point", k}, {"components", comps}});
    }
    entry["max_abs"] = max_abs;
    entry["values"] = per_point;
    invariants[invariant_name(which)] = entry;
  }
  j["invariants"] = invariants;
  return finish(std::move(j), {});
}

Report run_transform_check(const ProblemFile& problem, const CoordinateChange& change, const RunOptions& options,
                           std::uint64_t change_hash) {
  const double tol = options.tol.value_or(kDefaultTransformTol);
  if (options.samples < 1) throw InputError("--samples", "must be positive");
  if (change.m() != problem.m || change.n() != problem.n) {
    throw InputError("", "coordinate change dimensions do not match the problem");
  }
  Json j = header("check transform", problem.hash ^ change_hash);
  j["change_hash"] = "fnv1a64:" + hex64(change_hash);
  j["sampling"] = sampling_json(options, "sampled");
  j["warnings"] = problem.warnings;

  const PointSampler sampler(problem.m, problem.n, options.seed);
  try {
    change.validate(sampler, options.samples);
  } catch (const PreconditionError& e) {
    throw InputError("", e.what());
  }

  std::vector<Check> checks;
  const InvarianceReport rep = check_invariance(problem.system, problem.h, change, sampler, options.samples, options.which);
  for (const auto& e : rep.entries) {
    Check c{std::string("invariant_") + invariant_name(e.which), e.max_abs_difference, e.max_deviation, tol,
            e.max_deviation <= tol, Json{{"worst_point", e.worst_point}}};
    checks.push_back(c);
  }

  // Canonical tensors C and J_h.
  const MetricField h_new = pushforward_metric(change, problem.h);
  Check cc_check{"tensor_C", 0.0, 0.0, tol, true, Json()};
  Check jh_check{"tensor_J_h", 0.0, 0.0, tol, true, Json()};
  for (int k = 0; k < options.samples; ++k) {
    const JetPoint p = sampler.point(static_cast<std::uint64_t>(k));
    const JetPoint q = transform_jet_point(change, p);
    const auto [C, J] = canonical_tensors(problem.h, p);
    const auto [C_new, J_new] = canonical_tensors(h_new, q);
    const auto update = [&](Check& c, const DTensorValue& old_val, const DTensorValue& new_val) {
      const DTensorValue moved = transform_dtensor(old_val, change, p);
      const auto a = moved.values.flat();
      const auto b = new_val.values.flat();
      for (std::size_t s = 0; s < a.size(); ++s) {
        c.max_abs = std::max(c.max_abs, std::fabs(a[s] - b[s]));
        c.max_rel = std::max(c.max_rel, relative_deviation(a[s], b[s]));
      }
    };
    update(cc_check, C, C_new);
    update(jh_check, J, J_new);
  }
  cc_check.pass = cc_check.max_rel <= tol;
  jh_check.pass = jh_check.max_rel <= tol;
  checks.push_back(cc_check);
  checks.push_back(jh_check);
  return finish(std::move(j), checks);
}

Report run_fd_check(const ProblemFile& problem, const RunOptions& options) {
  const double tol = options.tol.value_or(kDefaultFdTol);
  const double step = options.step;
  if (!(step > 0.0)) throw InputError("--step", "must be positive");
  Json j = header("check fd", problem.hash);
  std::string source;
  const std::vector<JetPoint> points = choose_points(problem, options, source);
  j["sampling"] = sampling_json(options, source);
  j["step"] = step;
  j["scale_floor"] = kFdScaleFloor;
  j["warnings"] = problem.warnings;

  const int m = problem.m;
  const int n = problem.n;
  const KccInvariants inv(problem.system, problem.h);
  const CompiledArray F(problem.system.components());
  const CompiledArray h(problem.h.components());
  ExprArray Htr_expr({m});
  for (int g = 0; g < m; ++g) Htr_expr(g) = inv.traces().H[static_cast<std::size_t>(g)];
  const CompiledArray Htr(Htr_expr);
  const CompiledArray dFv(inv.trace_velocity_derivative());
  const CompiledArray N(inv.connection());
  const CompiledArray P(inv.expressions(Invariant::P));
  const CompiledArray R(inv.expressions(Invariant::R));
  const CompiledArray B(inv.expressions(Invariant::B));
  const auto variables = jet_variables(m, n);

  // dF^(i)_(a)b / dz against central differences of F.
  DerivativeCache diff;
  ExprArray dF({n, m, m, static_cast<int>(variables.size())});
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b)
        for (std::size_t z = 0; z < variables.size(); ++z) dF(i, a, b, z) = diff(problem.system(i, a, b), variables[z]);
  const CompiledArray dF_compiled(dF);

  // Numeric h-trace of F, the input to every oracle below.
  const auto trace = [&](const JetPoint& p) {
    const Bindings b = p.bindings();
    const Eigen::MatrixXd hinv = to_matrix(problem.h.evaluate(b)).inverse();
    const NumArray Fv = F.evaluate(b);
    NumArray out({n});
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < m; ++a)
        for (int c = 0; c < m; ++c) out(i) += hinv(a, c) * Fv(i, a, c);
    return out;
  };
  const auto eval = [](const CompiledArray& c) { return [&c](const JetPoint& p) { return c.evaluate(p.bindings()); }; };

  FdComparison cmp_dF, cmp_dFv, cmp_N, cmp_P, cmp_R, cmp_B;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const JetPoint& p = points[k];
    const Bindings bind = p.bindings();

    NumArray oracle_dF({n, m, m, static_cast<int>(variables.size())});
    for (std::size_t z = 0; z < variables.size(); ++z) {
      const NumArray d = central_difference(p, variables[z], step, eval(F));
      for (int i = 0; i < n; ++i)
        for (int a = 0; a < m; ++a)
          for (int b = 0; b < m; ++b) oracle_dF(i, a, b, z) = d(i, a, b);
    }
    cmp_dF.add(dF_compiled.evaluate(bind), oracle_dF, max_abs_of(F.evaluate(bind)), k);

    // dF^i/dx^j_g of the trace.
    NumArray oracle_dFv({n, n, m});
    for (int j2 = 0; j2 < n; ++j2)
      for (int g = 0; g < m; ++g) {
        const NumArray d = central_difference(p, VariableId::v(j2, g), step, trace);
        for (int i = 0; i < n; ++i) oracle_dFv(i, j2, g) = d(i);
      }
    const double trace_scale = max_abs_of(trace(p));
    cmp_dFv.add(dFv.evaluate(bind), oracle_dFv, trace_scale, k);

    // N^(i)_(a)j = (1/2) dF^i/dx^j_g h_ga + (1/2) H^g h_ga delta^i_j.
    const NumArray hv = problem.h.evaluate(bind);
    const NumArray Hv = Htr.evaluate(bind);
    NumArray oracle_N({n, m, n});
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < m; ++a)
        for (int j2 = 0; j2 < n; ++j2) {
          double acc = 0.0;
          for (int g = 0; g < m; ++g) {
            acc += 0.5 * oracle_dFv(i, j2, g) * hv(g, a);
            if (i == j2) acc += 0.5 * Hv(g) * hv(g, a);
          }
          oracle_N(i, a, j2) = acc;
        }
    cmp_N.add(N.evaluate(bind), oracle_N, trace_scale, k);

    // P with every F-derivative replaced by a central difference; second
    // derivatives differentiate the symbolic dF^i/dx^j_g, checked above.
    const Eigen::MatrixXd hinv = to_matrix(hv).inverse();
    std::vector<NumArray> dh_dt;
    std::vector<NumArray> dH_dt;
    for (int e = 0; e < m; ++e) {
      dh_dt.push_back(central_difference(p, VariableId::t(e), step, eval(h)));
      dH_dt.push_back(central_difference(p, VariableId::t(e), step, eval(Htr)));
    }
    std::vector<double> W(static_cast<std::size_t>(m), 0.0);
    for (int mu = 0; mu < m; ++mu)
      for (int g = 0; g < m; ++g)
        for (int e = 0; e < m; ++e) W[static_cast<std::size_t>(mu)] += 0.5 * hinv(g, e) * dh_dt[static_cast<std::size_t>(e)](mu, g);
    double scalar = 0.0;
    for (int g = 0; g < m; ++g) scalar += 0.5 * dH_dt[static_cast<std::size_t>(g)](g);
    for (int mu = 0; mu < m; ++mu) scalar += W[static_cast<std::size_t>(mu)] * Hv(mu);
    for (int g = 0; g < m; ++g)
      for (int mu = 0; mu < m; ++mu) scalar -= 0.25 * hv(g, mu) * Hv(g) * Hv(mu);

    const NumArray Fv = F.evaluate(bind);
    std::vector<NumArray> ddFv;  // d(dF^i/dx^j_g)/dz, indexed like `variables`
    for (const auto& z : variables) ddFv.push_back(central_difference(p, z, step, eval(dFv)));
    const auto var_index = [&](VariableId z) {
      return static_cast<std::size_t>(std::find(variables.begin(), variables.end(), z) - variables.begin());
    };
    NumArray oracle_P({n, n});
    for (int i = 0; i < n; ++i)
      for (int j2 = 0; j2 < n; ++j2) {
        double acc = -central_difference(p, VariableId::x(j2), step, trace)(i);
        for (int g = 0; g < m; ++g) {
          acc += 0.5 * ddFv[var_index(VariableId::t(g))](i, j2, g);
          for (int r = 0; r < n; ++r) acc += 0.5 * ddFv[var_index(VariableId::x(r))](i, j2, g) * p.v()(r, g);
        }
        for (int mu = 0; mu < m; ++mu)
          for (int r = 0; r < n; ++r)
            for (int g = 0; g < m; ++g) acc -= 0.5 * ddFv[var_index(VariableId::v(r, g))](i, j2, mu) * Fv(r, g, mu);
        for (int g = 0; g < m; ++g)
          for (int mu = 0; mu < m; ++mu)
            for (int r = 0; r < n; ++r) acc += 0.25 * hv(g, mu) * oracle_dFv(i, r, g) * oracle_dFv(r, j2, mu);
        for (int mu = 0; mu < m; ++mu) acc += W[static_cast<std::size_t>(mu)] * oracle_dFv(i, j2, mu);
        oracle_P(i, j2) = i == j2 ? acc + scalar : acc;
      }
    cmp_P.add(P.evaluate(bind), oracle_P, std::max(trace_scale, max_abs_of(oracle_dFv)), k);

    // R^ia_jk = (1/3)(dP^i_j/dx^k_a - dP^i_k/dx^j_a).
    std::vector<NumArray> dP(static_cast<std::size_t>(n * m));
    for (int r = 0; r < n; ++r)
      for (int a = 0; a < m; ++a) dP[static_cast<std::size_t>(r * m + a)] = central_difference(p, VariableId::v(r, a), step, eval(P));
    NumArray oracle_R({n, m, n, n});
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < m; ++a)
        for (int j2 = 0; j2 < n; ++j2)
          for (int kk = 0; kk < n; ++kk)
            oracle_R(i, a, j2, kk) = (dP[static_cast<std::size_t>(kk * m + a)](i, j2) -
                                      dP[static_cast<std::size_t>(j2 * m + a)](i, kk)) / 3.0;
    const NumArray Pv = P.evaluate(bind);
    cmp_R.add(R.evaluate(bind), oracle_R, max_abs_of(Pv), k);

    // B^ia(b)_jk(l) = dR^ia_jk/dx^l_b.
    NumArray oracle_B({n, m, m, n, n, n});
    for (int l = 0; l < n; ++l)
      for (int b = 0; b < m; ++b) {
        const NumArray d = central_difference(p, VariableId::v(l, b), step, eval(R));
        for (int i = 0; i < n; ++i)
          for (int a = 0; a < m; ++a)
            for (int j2 = 0; j2 < n; ++j2)
              for (int kk = 0; kk < n; ++kk) oracle_B(i, a, b, j2, kk, l) = d(i, a, j2, kk);
      }
    const NumArray Rv = R.evaluate(bind);
    cmp_B.add(B.evaluate(bind), oracle_B, max_abs_of(Rv), k);
  }

  return finish(std::move(j), {cmp_dF.check("dF", tol), cmp_dFv.check("trace_velocity_derivative", tol),
                               cmp_N.check("connection_N", tol), cmp_P.check("P", tol), cmp_R.check("R", tol),
                               cmp_B.check("B", tol)});
}

namespace {

const char* reason_name(ExtractionError::Reason r) {
  switch (r) {
    case ExtractionError::Reason::not_quadratic:
      return "not_quadratic";
    case ExtractionError::Reason::first_invariant:
      return "first_invariant";
    case ExtractionError::Reason::symmetry:
      return "symmetry";
    case ExtractionError::Reason::linear_part:
      return "linear_part";
    case ExtractionError::Reason::constant_part:
      return "constant_part";
    case ExtractionError::Reason::reconstruction:
      return "reconstruction";
  }
  return "unknown";
}

Json diagnostics_json(const ExtractionDiagnostics& d) {
  Json j;
  j["fifth_invariant"] = d.fifth_invariant;
  j["first_invariant"] = d.first_invariant;
  j["symmetry_residual"] = d.symmetry_residual;
  j["gamma_spread"] = d.gamma_spread;
  j["linear_residual"] = d.linear_residual;
  j["constant_residual"] = d.constant_residual;
  j["reconstruction_residual"] = d.reconstruction_residual;
  j["below_theorem_dimension"] = d.below_theorem_dimension;
  return j;
}

Json components_json(const NumArray& a) {
  Json out = Json::array();
  const auto flat = a.flat();
  for (std::size_t k = 0; k < flat.size(); ++k) {
    out.push_back(Json{{"index", one_based(a.index_of(k))}, {"value", flat[k]}});
  }
  return out;
}

}  // namespace

Report run_characterize(const ProblemFile& problem, const std::vector<double>& base) {
  const int m = problem.m;
  const int n = problem.n;
  if (static_cast<int>(base.size()) != m + n) {
    throw InputError("--base", "expected " + std::to_string(m + n) + " numbers (t then x)");
  }
  const std::vector<double> t(base.begin(), base.begin() + m);
  const std::vector<double> x(base.begin() + m, base.end());
  Json j = header("characterize", problem.hash);
  j["base"] = Json{{"t", t}, {"x", x}};
  j["warnings"] = problem.warnings;

  std::vector<Check> checks;
  try {
    const ExtractedStructure s = extract_structure(problem.system, problem.h, t, x);
    j["diagnostics"] = diagnostics_json(s.diagnostics);
    j["Gamma"] = Json{{"signature", "Gamma^i_pq"}, {"components", components_json(s.Gamma)}};
    j["S"] = Json{{"signature", "S^(i nu)_(alpha p q)"}, {"components", components_json(s.S)}};

    SField S(m, n);
    for (int i = 0; i < n; ++i)
      for (int nu = 0; nu < m; ++nu)
        for (int a = 0; a < m; ++a)
          for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q)
              if (nu != a && s.S(i, nu, a, p, q) != 0.0) S.set(i, nu, a, p, q, Expression(s.S(i, nu, a, p, q)));
    JetPoint at(m, n);
    at.t() = t;
    at.x() = x;
    const double ss = star_star_residual(S, problem.h, at.bindings());
    checks.push_back(Check{"star_star", ss, ss, kStarStarTol, ss <= kStarStarTol, Json()});
    const auto& d = s.diagnostics;
    checks.push_back(Check{"fifth_invariant", d.fifth_invariant, d.fifth_invariant, kFifthInvariantTol,
                           d.fifth_invariant <= kFifthInvariantTol, Json()});
    checks.push_back(Check{"first_invariant", d.first_invariant, d.first_invariant, kFirstInvariantTol,
                           d.first_invariant <= kFirstInvariantTol, Json()});
    checks.push_back(Check{"reconstruction", d.reconstruction_residual, d.reconstruction_residual, kStructureTol,
                           d.reconstruction_residual <= kStructureTol, Json()});
  } catch (const ExtractionError& e) {
    j["diagnostics"] = diagnostics_json(e.diagnostics());
    j["error"] = e.what();
    checks.push_back(Check{std::string("extraction_") + reason_name(e.reason()), 0.0, 0.0, 0.0, false, Json()});
  }
  return finish(std::move(j), checks);
}

Report run_nullspace(const MetricField& h, const std::vector<std::vector<double>>& times, std::uint64_t input_hash) {
  const int m = h.dim();
  Json j = header("nullspace", input_hash);
  j["m"] = m;
  j["rank_cutoff"] = kRankCutoff;
  if (times.empty()) throw InputError("--t", "at least one point is required");
  Json scan = Json::array();
  Check basis_check{"basis_residual", 0.0, 0.0, kStarStarTol, true, Json()};
  Check zero_check{"zero_vector", 0.0, 0.0, 0.0, true, Json()};
  for (const auto& t : times) {
    if (static_cast<int>(t.size()) != m) throw InputError("--t", "expected " + std::to_string(m) + " numbers");
    const StarStarNullSpace ns = star_star_nullspace(h, t, m);
    Json entry;
    entry["t"] = t;
    entry["dimension"] = ns.dimension();
    entry["below_theorem_dimension"] = ns.below_theorem_dimension;
    Json unknowns = Json::array();
    for (const auto& [nu, alpha] : ns.unknowns) unknowns.push_back(Json{{"nu", nu + 1}, {"alpha", alpha + 1}});
    entry["unknowns"] = unknowns;
    entry["singular_values"] = ns.singular_values;
    entry["basis"] = ns.basis;
    scan.push_back(entry);
    for (const auto& v : ns.basis) basis_check.max_abs = std::max(basis_check.max_abs, ns.residual(v));
    const std::vector<double> zero(ns.unknowns.size(), 0.0);
    zero_check.max_abs = std::max(zero_check.max_abs, ns.residual(zero));
  }
  basis_check.max_rel = basis_check.max_abs;
  basis_check.pass = basis_check.max_abs <= basis_check.tol;
  zero_check.pass = zero_check.max_abs == 0.0;
  j["scan"] = scan;
  return finish(std::move(j), {zero_check, basis_check});
}

Report run_jacobi_check(const ProblemFile& problem, const RunOptions& options) {
  if (!problem.section) throw InputError("/section", "required by the jacobi check");
  if (!problem.variation) throw InputError("/variation", "required by the jacobi check");
  if (options.samples < 1) throw InputError("--samples", "must be positive");
  const double tol = options.tol.value_or(kDefaultJacobiTol);
  Json j = header("check jacobi", problem.hash);
  j["sampling"] = sampling_json(options, "sampled");
  j["warnings"] = problem.warnings;

  const PointSampler sampler(problem.m, problem.n, options.seed);
  std::vector<std::vector<double>> times;
  for (int k = 0; k < options.samples; ++k) times.push_back(sampler.point(static_cast<std::uint64_t>(k)).t());
  j["times"] = times;

  Check solution{"section_is_solution", 0.0, 0.0, kSolutionTol, true, Json()};
  for (const auto& t : times) {
    const NumArray r = sode_residual(problem.system, *problem.section, t);
    solution.max_abs = std::max(solution.max_abs, max_abs_of(r));
  }
  solution.max_rel = solution.max_abs;
  solution.pass = solution.max_abs <= kSolutionTol;
  if (!solution.pass) return finish(std::move(j), {solution});

  const KccInvariants inv(problem.system, problem.h);
  Check jacobi{"jacobi_residual", 0.0, 0.0, tol, true, Json()};
  Json residuals = Json::array();
  for (const auto& t : times) {
    const std::vector<double> r = jacobi_identity_residual(inv, *problem.section, *problem.variation, t);
    residuals.push_back(r);
    for (double v : r) jacobi.max_abs = std::max(jacobi.max_abs, std::fabs(v));
  }
  jacobi.max_rel = jacobi.max_abs;
  jacobi.pass = jacobi.max_abs <= tol;
  j["residuals"] = residuals;
  return finish(std::move(j), {solution, jacobi});
}

std::vector<double> parse_number_list(const std::string& text, const std::string& what) {
  return parse_csv_numbers(text, what);
}

}  // namespace jetkcc
