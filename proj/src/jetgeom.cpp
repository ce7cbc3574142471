#include "jetkcc/jetgeom.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "jetkcc/sampling.hpp"

namespace jetkcc {

namespace {

void check_dims(int m, int n) {
  if (m < 1 || n < 1 || m > kMaxDim || n > kMaxDim) {
    throw PreconditionError("dimensions must satisfy 1 <= m, n <= " + std::to_string(kMaxDim));
  }
}

Expression var_v(int i, int a) { return Expression::variable(VariableId::v(i, a)); }

}  // namespace

std::uint32_t jet_mask(int m, int n) {
  std::uint32_t mask = 0;
  for (int a = 0; a < m; ++a) mask |= VariableId::t(a).bit();
  for (int i = 0; i < n; ++i) {
    mask |= VariableId::x(i).bit();
    for (int a = 0; a < m; ++a) mask |= VariableId::v(i, a).bit();
  }
  return mask;
}

// ---------------------------------------------------------------------------
// JetPoint

JetPoint::JetPoint(int m, int n) : t_(static_cast<std::size_t>(m)), x_(static_cast<std::size_t>(n)), v_({n, m}) {
  check_dims(m, n);
}

JetPoint::JetPoint(std::vector<double> t, std::vector<double> x, NumArray v)
    : t_(std::move(t)), x_(std::move(x)), v_(std::move(v)) {
  check_dims(m(), n());
  if (v_.shape() != std::vector<int>{n(), m()}) throw PreconditionError("jet point velocity must be n x m");
}

Bindings JetPoint::bindings() const {
  Bindings b(m(), n());
  for (int a = 0; a < m(); ++a) b.set(VariableId::t(a), t_[static_cast<std::size_t>(a)]);
  for (int i = 0; i < n(); ++i) {
    b.set(VariableId::x(i), x_[static_cast<std::size_t>(i)]);
    for (int a = 0; a < m(); ++a) b.set(VariableId::v(i, a), v_(i, a));
  }
  return b;
}

// ---------------------------------------------------------------------------
// MetricField

MetricField::MetricField(MetricKind kind, ExprArray components)
    : kind_(kind), components_(std::move(components)) {
  const auto& shape = components_.shape();
  if (shape.size() != 2 || shape[0] != shape[1]) throw PreconditionError("metric must be a square matrix");
  const int d = shape[0];
  if (d < 1 || d > kMaxDim) {
    throw PreconditionError("metric dimension must be between 1 and " + std::to_string(kMaxDim));
  }
  std::uint32_t allowed = 0;
  for (int a = 0; a < d; ++a) allowed |= coordinate(a).bit();
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) {
      if (!structurally_equal(components_(a, b), components_(b, a))) {
        throw PreconditionError("metric is not symmetric at (" + std::to_string(a + 1) + ", " +
                                std::to_string(b + 1) + ")");
      }
      if ((components_(a, b).dependencies() & ~allowed) != 0) {
        throw PreconditionError(kind == MetricKind::temporal
                                    ? "temporal metric may depend only on t variables"
                                    : "spatial metric may depend only on x variables");
      }
    }
  }
}

MetricField MetricField::identity(MetricKind kind, int dim) {
  ExprArray g({dim, dim});
  for (int a = 0; a < dim; ++a) g(a, a) = Expression(1.0);
  return MetricField(kind, std::move(g));
}

MetricField MetricField::parse(MetricKind kind, const std::vector<std::vector<std::string>>& rows, int m, int n) {
  const int d = static_cast<int>(rows.size());
  ExprArray g({d, d});
  for (int a = 0; a < d; ++a) {
    if (static_cast<int>(rows[static_cast<std::size_t>(a)].size()) != d) {
      throw PreconditionError("metric rows must have equal length");
    }
    for (int b = 0; b < d; ++b) {
      g(a, b) = jetkcc::parse(rows[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)], m, n);
    }
  }
  return MetricField(kind, std::move(g));
}

VariableId MetricField::coordinate(int a) const {
  return kind_ == MetricKind::temporal ? VariableId::t(a) : VariableId::x(a);
}

NumArray MetricField::evaluate(const Bindings& b) const {
  NumArray g = jetkcc::evaluate(components_, b);
  const int d = dim();
  Eigen::MatrixXd mat(d, d);
  for (int a = 0; a < d; ++a)
    for (int c = 0; c < d; ++c) mat(a, c) = g(a, c);
  const double det = mat.determinant();
  if (!(std::fabs(det) > kSingularMetricTol)) {
    throw DegenerateError(std::string(kind_ == MetricKind::temporal ? "temporal" : "spatial") +
                          " metric is singular at the evaluation point (|det| = " + std::to_string(std::fabs(det)) +
                          ")");
  }
  return g;
}

// ---------------------------------------------------------------------------
// PdeSystem

PdeSystem::PdeSystem(int m, int n) : m_(m), n_(n), F_({n, m, m}) { check_dims(m, n); }

PdeSystem PdeSystem::as_written(ExprArray components) {
  const auto& s = components.shape();
  if (s.size() != 3 || s[1] != s[2]) throw PreconditionError("system components must have shape (n, m, m)");
  PdeSystem sys(s[1], s[0]);
  const std::uint32_t allowed = jet_mask(sys.m_, sys.n_);
  for (const auto& e : components.flat()) {
    if ((e.dependencies() & ~allowed) != 0) throw PreconditionError("system component uses undeclared variables");
  }
  sys.F_ = std::move(components);
  for (int i = 0; i < sys.n_ && sys.symmetric_; ++i)
    for (int a = 0; a < sys.m_; ++a)
      for (int b = a + 1; b < sys.m_; ++b)
        if (!structurally_equal(sys.F_(i, a, b), sys.F_(i, b, a))) sys.symmetric_ = false;
  return sys;
}

void PdeSystem::set(int i, int a, int b, Expression e) {
  if ((e.dependencies() & ~jet_mask(m_, n_)) != 0) {
    throw PreconditionError("system component uses undeclared variables");
  }
  F_(i, b, a) = e;
  F_(i, a, b) = std::move(e);
}

// ---------------------------------------------------------------------------
// Inverse, Christoffel symbols, curvature

namespace {

Expression determinant(const ExprArray& g, const std::vector<int>& rows, const std::vector<int>& cols) {
  const std::size_t k = rows.size();
  if (k == 1) return g(rows[0], cols[0]);
  if (k == 2) return g(rows[0], cols[0]) * g(rows[1], cols[1]) - g(rows[0], cols[1]) * g(rows[1], cols[0]);
  Expression det;
  std::vector<int> sub_rows(rows.begin() + 1, rows.end());
  for (std::size_t c = 0; c < k; ++c) {
    const Expression& entry = g(rows[0], cols[c]);
    if (entry.is_zero()) continue;
    std::vector<int> sub_cols;
    for (std::size_t cc = 0; cc < k; ++cc)
      if (cc != c) sub_cols.push_back(cols[cc]);
    const Expression term = entry * determinant(g, sub_rows, sub_cols);
    det = (c % 2 == 0) ? det + term : det - term;
  }
  return det;
}

bool is_diagonal(const ExprArray& g) {
  const int d = g.shape()[0];
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b)
      if (a != b && !g(a, b).is_zero()) return false;
  return true;
}

}  // namespace

ExprArray inverse_metric_sym(const MetricField& g) {
  const int d = g.dim();
  const ExprArray& c = g.components();
  ExprArray inv({d, d});
  if (is_diagonal(c)) {
    for (int a = 0; a < d; ++a) inv(a, a) = Expression(1.0) / c(a, a);
    return inv;
  }
  std::vector<int> all(static_cast<std::size_t>(d));
  for (int a = 0; a < d; ++a) all[static_cast<std::size_t>(a)] = a;
  const Expression det = determinant(c, all, all);
  for (int a = 0; a < d; ++a) {
    for (int b = a; b < d; ++b) {
      // inverse(a, b) = cofactor(b, a) / det
      std::vector<int> rows, cols;
      for (int k = 0; k < d; ++k) {
        if (k != b) rows.push_back(k);
        if (k != a) cols.push_back(k);
      }
      Expression minor = d == 1 ? Expression(1.0) : determinant(c, rows, cols);
      if ((a + b) % 2 == 1) minor = -minor;
      inv(a, b) = minor / det;
      inv(b, a) = inv(a, b);
    }
  }
  return inv;
}

namespace {

ExprArray christoffel_from(const MetricField& g, const ExprArray& inv) {
  const int d = g.dim();
  DerivativeCache diff;
  // dg(b, m, c) = d g_bm / d coord^c
  ExprArray dg({d, d, d});
  for (int b = 0; b < d; ++b)
    for (int m = 0; m < d; ++m)
      for (int c = 0; c < d; ++c) dg(b, m, c) = diff(g(b, m), g.coordinate(c));

  ExprArray gamma({d, d, d});
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) {
      for (int c = b; c < d; ++c) {
        Expression acc;
        for (int m = 0; m < d; ++m) {
          if (inv(a, m).is_zero()) continue;
          const Expression bracket = dg(b, m, c) + dg(c, m, b) - dg(b, c, m);
          acc = acc + inv(a, m) * bracket;
        }
        gamma(a, b, c) = Expression(0.5) * acc;
        gamma(a, c, b) = gamma(a, b, c);
      }
    }
  }
  return gamma;
}

}  // namespace

ExprArray christoffel_sym(const MetricField& g) { return christoffel_from(g, inverse_metric_sym(g)); }

MetricGeometry::MetricGeometry(MetricField g)
    : metric(std::move(g)), inverse(inverse_metric_sym(metric)), christoffel(christoffel_from(metric, inverse)) {}

ExprArray curvature_sym(const MetricField& phi) {
  if (phi.kind() != MetricKind::spatial) throw PreconditionError("curvature_sym expects a spatial metric");
  const int n = phi.dim();
  const ExprArray gamma = christoffel_sym(phi);
  DerivativeCache diff;
  ExprArray R({n, n, n, n});
  for (int i = 0; i < n; ++i) {
    for (int p = 0; p < n; ++p) {
      for (int q = 0; q < n; ++q) {
        for (int j = q + 1; j < n; ++j) {
          Expression acc = diff(gamma(i, p, q), phi.coordinate(j)) - diff(gamma(i, p, j), phi.coordinate(q));
          for (int r = 0; r < n; ++r) {
            acc = acc + gamma(r, p, q) * gamma(i, r, j) - gamma(r, p, j) * gamma(i, r, q);
          }
          R(i, p, q, j) = acc;
          R(i, p, j, q) = -acc;
        }
      }
    }
  }
  return R;
}

// ---------------------------------------------------------------------------
// Canonical objects and tensors

CanonicalObjects canonical_objects(const MetricField& h, const MetricField& phi) {
  if (h.kind() != MetricKind::temporal || phi.kind() != MetricKind::spatial) {
    throw PreconditionError("canonical_objects expects (temporal, spatial) metrics");
  }
  const int m = h.dim();
  const int n = phi.dim();
  const ExprArray Ht = christoffel_sym(h);
  const ExprArray gs = christoffel_sym(phi);

  CanonicalObjects out{ExprArray({n, m, m}), ExprArray({n, m, m}), ExprArray({n, m, m}), ExprArray({n, m, n})};
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < m; ++a) {
      for (int b = a; b < m; ++b) {
        Expression hv;  // H^c_ab x^i_c
        for (int c = 0; c < m; ++c) hv = hv + Ht(c, a, b) * var_v(i, c);
        Expression gvv;  // gamma^i_pq x^p_a x^q_b
        for (int p = 0; p < n; ++p)
          for (int q = 0; q < n; ++q) gvv = gvv + gs(i, p, q) * var_v(p, a) * var_v(q, b);
        out.H(i, a, b) = out.H(i, b, a) = Expression(-0.5) * hv;
        out.M(i, a, b) = out.M(i, b, a) = -hv;
        out.G(i, a, b) = out.G(i, b, a) = Expression(0.5) * gvv;
      }
      for (int j = 0; j < n; ++j) {
        Expression acc;
        for (int r = 0; r < n; ++r) acc = acc + gs(i, j, r) * var_v(r, a);
        out.N(i, a, j) = acc;
      }
    }
  }
  return out;
}

IndexSignature liouville_signature() {
  return IndexSignature({spatial_up("i"), temporal_down("alpha")}, {{0, 1}});
}

IndexSignature normalization_signature() {
  return IndexSignature({spatial_up("i"), temporal_down("alpha"), temporal_down("beta"), spatial_down("j")},
                        {{0, 1}});
}

std::pair<DTensorValue, DTensorValue> canonical_tensors(const MetricField& h, const JetPoint& p) {
  if (h.kind() != MetricKind::temporal || h.dim() != p.m()) {
    throw PreconditionError("canonical_tensors expects a temporal metric matching the point");
  }
  const int m = p.m();
  const int n = p.n();
  DTensorValue C{liouville_signature(), p.v()};
  const NumArray hv = h.evaluate(p.bindings());
  DTensorValue J{normalization_signature(), NumArray({n, m, m, n})};
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) J.values(i, a, b, i) = hv(a, b);
  return {std::move(C), std::move(J)};
}

// ---------------------------------------------------------------------------
// System builders

PdeSystem build_affine_system(const MetricField& h, const MetricField& phi) {
  if (h.kind() != MetricKind::temporal || phi.kind() != MetricKind::spatial) {
    throw PreconditionError("build_affine_system expects (temporal, spatial) metrics");
  }
  const CanonicalObjects c = canonical_objects(h, phi);
  const int m = h.dim();
  const int n = phi.dim();
  PdeSystem F(m, n);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a)
      for (int b = a; b < m; ++b) F.set(i, a, b, c.M(i, a, b) + Expression(2.0) * c.G(i, a, b));
  return F;
}

FirstOrderSystem build_first_order_system(const ExprArray& X, bool symmetrize) {
  const auto& s = X.shape();
  if (s.size() != 2) throw PreconditionError("X must have shape (n, m)");
  const int n = s[0];
  const int m = s[1];
  check_dims(m, n);
  const std::uint32_t allowed = jet_mask(m, n) & ~velocity_mask();
  for (const auto& e : X.flat()) {
    if ((e.dependencies() & ~allowed) != 0) {
      throw PreconditionError("first-order system X may depend only on t and x");
    }
  }

  DerivativeCache diff;
  ExprArray raw({n, m, m});
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < m; ++a) {
      for (int b = 0; b < m; ++b) {
        Expression acc = diff(X(i, a), VariableId::t(b));
        for (int r = 0; r < n; ++r) acc = acc + diff(X(i, a), VariableId::x(r)) * var_v(r, b);
        raw(i, a, b) = -acc;
      }
    }
  }

  FirstOrderSystem out{PdeSystem(m, n), 0.0, {}};
  if (symmetrize) {
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < m; ++a)
        for (int b = a; b < m; ++b)
          out.system.set(i, a, b, a == b ? raw(i, a, a) : Expression(0.5) * (raw(i, a, b) + raw(i, b, a)));
    return out;
  }

  out.system = PdeSystem::as_written(raw);
  if (!out.system.symmetric_storage()) {
    ExprArray asym({n, m, m});
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) asym(i, a, b) = raw(i, a, b) - raw(i, b, a);
    const CompiledArray compiled(asym);
    const PointSampler sampler(m, n, 0);
    for (std::uint64_t k = 0; k < 16; ++k) {
      try {
        const NumArray values = compiled.evaluate(sampler.point(k).bindings());
        for (double d : values.flat()) {
          out.max_asymmetry = std::max(out.max_asymmetry, std::fabs(d));
        }
      } catch (const EvaluationError&) {
        // X undefined at this sample; skip it.
      }
    }
    if (out.max_asymmetry > kAsymmetryTol) {
      out.warnings.push_back("second-order form is not symmetric in (alpha, beta): max |F_ab - F_ba| = " +
                             std::to_string(out.max_asymmetry) + "; components kept as written");
    }
  }
  return out;
}

}  // namespace jetkcc
