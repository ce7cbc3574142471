#pragma once

// Metrics on the temporal and spatial manifolds, their Christoffel symbols
// and curvature, points of J1(T,M), second-order PDE systems, and the
// canonical objects attached to a pair of metrics.

#include <string>
#include <utility>
#include <vector>

#include "jetkcc/expr.hpp"
#include "jetkcc/tensor.hpp"

namespace jetkcc {

/// Threshold below which a metric determinant counts as singular.
inline constexpr double kSingularMetricTol = 1e-12;

/// Bit mask of all jet variables for dimensions (m, n).
std::uint32_t jet_mask(int m, int n);

/// Numeric coordinates (t, x, v) of a point of J1(T,M); v(i, a) = x^i_a.
class JetPoint {
 public:
  JetPoint(int m, int n);
  JetPoint(std::vector<double> t, std::vector<double> x, NumArray v);

  int m() const { return static_cast<int>(t_.size()); }
  int n() const { return static_cast<int>(x_.size()); }

  std::vector<double>& t() { return t_; }
  std::vector<double>& x() { return x_; }
  NumArray& v() { return v_; }
  const std::vector<double>& t() const { return t_; }
  const std::vector<double>& x() const { return x_; }
  const NumArray& v() const { return v_; }

  Bindings bindings() const;

 private:
  std::vector<double> t_;
  std::vector<double> x_;
  NumArray v_;
};

enum class MetricKind { temporal, spatial };

/// Symmetric matrix field h_ab(t) (temporal) or phi_ij(x) (spatial).
class MetricField {
 public:
  MetricField(MetricKind kind, ExprArray components);

  static MetricField identity(MetricKind kind, int dim);
  /// Parses a square matrix of expression strings for dimensions (m, n).
  static MetricField parse(MetricKind kind, const std::vector<std::vector<std::string>>& rows, int m, int n);

  MetricKind kind() const { return kind_; }
  int dim() const { return components_.shape()[0]; }
  const Expression& operator()(int a, int b) const { return components_(a, b); }
  const ExprArray& components() const { return components_; }

  /// Coordinate the components depend on: t^a or x^a.
  VariableId coordinate(int a) const;

  /// Numeric matrix at `b`; throws DegenerateError if |det| <= 1e-12.
  NumArray evaluate(const Bindings& b) const;

 private:
  MetricKind kind_;
  ExprArray components_;
};

/// Second-order system d2x^i/dt^a dt^b + F^i_ab(t, x, v) = 0, stored as the
/// full (n, m, m) array F(i, a, b). Systems built with `set` are symmetric in
/// (a, b) by construction; `as_written` keeps an asymmetric array verbatim.
class PdeSystem {
 public:
  PdeSystem(int m, int n);

  /// Keeps (a, b) and (b, a) as supplied. Used for first-order systems whose
  /// second-order form is not symmetric.
  static PdeSystem as_written(ExprArray components);

  int m() const { return m_; }
  int n() const { return n_; }

  /// Sets F(i, a, b) and F(i, b, a).
  void set(int i, int a, int b, Expression e);
  const Expression& operator()(int i, int a, int b) const { return F_(i, a, b); }
  const ExprArray& components() const { return F_; }
  bool symmetric_storage() const { return symmetric_; }

 private:
  int m_;
  int n_;
  ExprArray F_;
  bool symmetric_ = true;
};

/// Symbolic inverse via adjugate and determinant (dim <= 4).
ExprArray inverse_metric_sym(const MetricField& g);

/// Christoffel symbols, Gamma(a, b, c) = Gamma^a_bc, symmetric in (b, c).
ExprArray christoffel_sym(const MetricField& g);

/// Curvature R(i, p, q, j) = R^i_pqj
///   = d_j gamma^i_pq - d_q gamma^i_pj + gamma^r_pq gamma^i_rj - gamma^r_pj gamma^i_rq,
/// antisymmetric in (q, j).
ExprArray curvature_sym(const MetricField& phi);

/// A metric together with its symbolic inverse and Christoffel symbols.
struct MetricGeometry {
  explicit MetricGeometry(MetricField g);

  MetricField metric;
  ExprArray inverse;
  ExprArray christoffel;
};

/// Canonical temporal/spatial semisprays and the canonical nonlinear
/// connection of a pair of metrics (h, phi). Shapes: H, G, M are (n, m, m);
/// N is (n, m, n) with N(i, a, j) = N^(i)_(a)j.
struct CanonicalObjects {
  ExprArray H;
  ExprArray G;
  ExprArray M;
  ExprArray N;
};
CanonicalObjects canonical_objects(const MetricField& h, const MetricField& phi);

/// Liouville tensor C^(i)_(a) = x^i_a and the h-normalization tensor
/// J^(i)_(a)bj = h_ab delta^i_j at p.
std::pair<DTensorValue, DTensorValue> canonical_tensors(const MetricField& h, const JetPoint& p);

IndexSignature liouville_signature();
IndexSignature normalization_signature();

/// Affine-map system F^i_ab = -H^c_ab x^i_c + gamma^i_pq x^p_a x^q_b.
PdeSystem build_affine_system(const MetricField& h, const MetricField& phi);

/// Second-order form of dx^i/dt^a = X^i_a(t, x):
/// F^i_ab = -(dX^i_a/dt^b + dX^i_a/dx^r x^r_b).
struct FirstOrderSystem {
  PdeSystem system;
  /// Largest |F^i_ab - F^i_ba| over the sample points (0 when symmetrized).
  double max_asymmetry = 0.0;
  std::vector<std::string> warnings;
};

/// Tolerance above which an unsymmetrized first-order system warns.
inline constexpr double kAsymmetryTol = 1e-9;

/// `X` has shape (n, m). With `symmetrize` the (a, b)-average is stored;
/// otherwise F is kept as written and its asymmetry measured at seeded
/// sample points.
FirstOrderSystem build_first_order_system(const ExprArray& X, bool symmetrize);

}  // namespace jetkcc
