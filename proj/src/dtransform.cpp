#include "jetkcc/dtransform.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace jetkcc {

namespace {

using std::size_t;

Expression var_t(int a) { return Expression::variable(VariableId::t(a)); }
Expression var_x(int i) { return Expression::variable(VariableId::x(i)); }
Expression var_v(int i, int a) { return Expression::variable(VariableId::v(i, a)); }

std::uint32_t temporal_bits(int m) {
  std::uint32_t mask = 0;
  for (int a = 0; a < m; ++a) mask |= VariableId::t(a).bit();
  return mask;
}

std::uint32_t spatial_bits(int n) {
  std::uint32_t mask = 0;
  for (int i = 0; i < n; ++i) mask |= VariableId::x(i).bit();
  return mask;
}

void check_maps(const std::vector<Expression>& maps, int dim, std::uint32_t allowed, const char* what) {
  if (static_cast<int>(maps.size()) != dim)
    throw PreconditionError(std::string(what) + ": expected " + std::to_string(dim) + " components, got " +
                            std::to_string(maps.size()));
  for (const Expression& e : maps)
    if ((e.dependencies() & ~allowed) != 0)
      throw PreconditionError(std::string(what) + ": component depends on the wrong coordinates: " + to_string(e));
}

ExprArray jacobian(const std::vector<Expression>& maps, bool temporal) {
  const int dim = static_cast<int>(maps.size());
  ExprArray J({dim, dim});
  for (int a = 0; a < dim; ++a)
    for (int b = 0; b < dim; ++b)
      J(a, b) = differentiate(maps[static_cast<size_t>(a)], temporal ? VariableId::t(b) : VariableId::x(b));
  return J;
}

Substitution temporal_substitution(const std::vector<Expression>& maps) {
  Substitution sub{};
  for (size_t a = 0; a < maps.size(); ++a) sub[static_cast<size_t>(VariableId::t(static_cast<int>(a)).slot())] = &maps[a];
  return sub;
}

Substitution spatial_substitution(const std::vector<Expression>& maps) {
  Substitution sub{};
  for (size_t i = 0; i < maps.size(); ++i) sub[static_cast<size_t>(VariableId::x(static_cast<int>(i)).slot())] = &maps[i];
  return sub;
}

std::vector<Expression> compose_maps(const std::vector<Expression>& outer, const Substitution& inner) {
  std::vector<Expression> out;
  out.reserve(outer.size());
  for (const Expression& e : outer) out.push_back(substitute(e, inner));
  return out;
}

std::vector<double> evaluate_maps(const std::vector<Expression>& maps, int m, int n, const std::vector<double>& q,
                                  bool temporal) {
  if (q.size() != maps.size()) throw PreconditionError("coordinate vector has the wrong dimension");
  Bindings b(m, n);
  for (size_t k = 0; k < q.size(); ++k)
    b.set(temporal ? VariableId::t(static_cast<int>(k)) : VariableId::x(static_cast<int>(k)), q[k]);
  std::vector<double> out;
  out.reserve(maps.size());
  for (const Expression& e : maps) out.push_back(evaluate(e, b));
  return out;
}

Eigen::MatrixXd to_matrix(const NumArray& a) {
  const int r = a.shape()[0];
  const int c = a.shape()[1];
  Eigen::MatrixXd M(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) M(i, j) = a(i, j);
  return M;
}

NumArray from_matrix(const Eigen::MatrixXd& M) {
  NumArray a({static_cast<int>(M.rows()), static_cast<int>(M.cols())});
  for (int i = 0; i < M.rows(); ++i)
    for (int j = 0; j < M.cols(); ++j) a(i, j) = M(i, j);
  return a;
}

NumArray checked_inverse(const NumArray& J, const char* what) {
  const Eigen::MatrixXd M = to_matrix(J);
  const double det = M.determinant();
  if (!(std::abs(det) > kSingularJacobianTol))
    throw DegenerateError(std::string(what) + " Jacobian is singular (det = " + std::to_string(det) + ")");
  return from_matrix(M.inverse());
}

// Multiplies slot `slot` of `in` by the matrix `M`: out[.. a ..] = M(a, b) in[.. b ..].
NumArray contract_slot(const NumArray& in, int slot, const NumArray& M) {
  NumArray out(in.shape());
  const int ext = in.shape()[static_cast<size_t>(slot)];
  std::vector<int> src;
  for (size_t k = 0; k < out.size(); ++k) {
    src = out.index_of(k);
    const int a = src[static_cast<size_t>(slot)];
    double acc = 0.0;
    for (int b = 0; b < ext; ++b) {
      src[static_cast<size_t>(slot)] = b;
      acc += M(a, b) * in.at(src);
    }
    out.flat()[k] = acc;
  }
  return out;
}

// Old-chart expressions entering the transformation rules.
struct RuleTerms {
  ExprArray vnew;   // (n, m)
  ExprArray dvdt;   // (n, m, m): d v~^i_a / dt^u
  ExprArray dvdx;   // (n, m, n): d v~^i_a / dx^r
};

RuleTerms rule_terms(const CoordinateChange& cc) {
  const int m = cc.m();
  const int n = cc.n();
  RuleTerms r{new_velocity_in_old(cc), ExprArray({n, m, m}), ExprArray({n, m, n})};
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a) {
      for (int u = 0; u < m; ++u) r.dvdt(i, a, u) = differentiate(r.vnew(i, a), VariableId::t(u));
      for (int q = 0; q < n; ++q) r.dvdx(i, a, q) = differentiate(r.vnew(i, a), VariableId::x(q));
    }
  return r;
}

}  // namespace

CoordinateChange::CoordinateChange(int m, int n, std::vector<Expression> t_forward, std::vector<Expression> x_forward,
                                   std::vector<Expression> t_inverse, std::vector<Expression> x_inverse)
    : m_(m),
      n_(n),
      t_fwd_(std::move(t_forward)),
      x_fwd_(std::move(x_forward)),
      t_inv_(std::move(t_inverse)),
      x_inv_(std::move(x_inverse)) {
  if (m < 1 || m > kMaxDim || n < 1 || n > kMaxDim) throw PreconditionError("dimensions must lie in [1, 4]");
  if (t_inv_.empty() || x_inv_.empty()) throw PreconditionError("coordinate change: inverse maps are required");
  check_maps(t_fwd_, m, temporal_bits(m), "t_forward");
  check_maps(x_fwd_, n, spatial_bits(n), "x_forward");
  check_maps(t_inv_, m, temporal_bits(m), "t_inverse");
  check_maps(x_inv_, n, spatial_bits(n), "x_inverse");
  dt_fwd_ = jacobian(t_fwd_, true);
  dx_fwd_ = jacobian(x_fwd_, false);
  dt_inv_ = jacobian(t_inv_, true);
  dx_inv_ = jacobian(x_inv_, false);
}

CoordinateChange CoordinateChange::identity(int m, int n) {
  std::vector<Expression> t, x;
  for (int a = 0; a < m; ++a) t.push_back(var_t(a));
  for (int i = 0; i < n; ++i) x.push_back(var_x(i));
  return CoordinateChange(m, n, t, x, t, x);
}

CoordinateChange CoordinateChange::parse(int m, int n, const std::vector<std::string>& t_forward,
                                         const std::vector<std::string>& x_forward,
                                         const std::vector<std::string>& t_inverse,
                                         const std::vector<std::string>& x_inverse) {
  auto all = [&](const std::vector<std::string>& src) {
    std::vector<Expression> out;
    for (const std::string& s : src) out.push_back(jetkcc::parse(s, m, n));
    return out;
  };
  return CoordinateChange(m, n, all(t_forward), all(x_forward), all(t_inverse), all(x_inverse));
}

CoordinateChange CoordinateChange::inverse() const { return CoordinateChange(m_, n_, t_inv_, x_inv_, t_fwd_, x_fwd_); }

CoordinateChange CoordinateChange::then(const CoordinateChange& next) const {
  if (next.m_ != m_ || next.n_ != n_) throw PreconditionError("composed changes have different dimensions");
  return CoordinateChange(m_, n_, compose_maps(next.t_fwd_, temporal_substitution(t_fwd_)),
                          compose_maps(next.x_fwd_, spatial_substitution(x_fwd_)),
                          compose_maps(t_inv_, temporal_substitution(next.t_inv_)),
                          compose_maps(x_inv_, spatial_substitution(next.x_inv_)));
}

std::vector<double> CoordinateChange::map_t(const std::vector<double>& t) const {
  return evaluate_maps(t_fwd_, m_, n_, t, true);
}
std::vector<double> CoordinateChange::map_x(const std::vector<double>& x) const {
  return evaluate_maps(x_fwd_, m_, n_, x, false);
}
std::vector<double> CoordinateChange::unmap_t(const std::vector<double>& t_new) const {
  return evaluate_maps(t_inv_, m_, n_, t_new, true);
}
std::vector<double> CoordinateChange::unmap_x(const std::vector<double>& x_new) const {
  return evaluate_maps(x_inv_, m_, n_, x_new, false);
}

double CoordinateChange::round_trip_error(const PointSampler& sampler, int count) const {
  double worst = 0.0;
  for (int k = 0; k < count; ++k) {
    const JetPoint p = sampler.point(static_cast<std::uint64_t>(k));
    const std::vector<double> t = unmap_t(map_t(p.t()));
    const std::vector<double> x = unmap_x(map_x(p.x()));
    for (int a = 0; a < m_; ++a) worst = std::max(worst, std::abs(t[static_cast<size_t>(a)] - p.t()[static_cast<size_t>(a)]));
    for (int i = 0; i < n_; ++i) worst = std::max(worst, std::abs(x[static_cast<size_t>(i)] - p.x()[static_cast<size_t>(i)]));
  }
  return worst;
}

void CoordinateChange::validate(const PointSampler& sampler, int count) const {
  for (int k = 0; k < count; ++k) jacobians_at(*this, sampler.point(static_cast<std::uint64_t>(k)));
  const double err = round_trip_error(sampler, count);
  if (!(err <= kRoundTripTol))
    throw PreconditionError("coordinate change: inverse maps do not invert the forward maps (round-trip error " +
                            std::to_string(err) + ")");
}

ChangeJacobians jacobians_at(const CoordinateChange& cc, const JetPoint& p) {
  if (p.m() != cc.m() || p.n() != cc.n()) throw PreconditionError("jet point dimensions do not match the change");
  const Bindings b = p.bindings();
  ChangeJacobians J;
  J.dt = evaluate(cc.dt_forward(), b);
  J.dx = evaluate(cc.dx_forward(), b);
  J.dt_inv = checked_inverse(J.dt, "temporal");
  J.dx_inv = checked_inverse(J.dx, "spatial");
  return J;
}

JetPoint transform_jet_point(const CoordinateChange& cc, const JetPoint& p) {
  const ChangeJacobians J = jacobians_at(cc, p);
  const int m = cc.m();
  const int n = cc.n();
  NumArray v({n, m});
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j)
        for (int b = 0; b < m; ++b) acc += J.dx(i, j) * p.v()(j, b) * J.dt_inv(b, a);
      v(i, a) = acc;
    }
  return JetPoint(cc.map_t(p.t()), cc.map_x(p.x()), std::move(v));
}

DTensorValue transform_dtensor(const DTensorValue& val, const CoordinateChange& cc, const JetPoint& p) {
  val.validate(cc.m(), cc.n());
  const ChangeJacobians J = jacobians_at(cc, p);
  const NumArray dt_inv_t = from_matrix(to_matrix(J.dt_inv).transpose());
  const NumArray dx_inv_t = from_matrix(to_matrix(J.dx_inv).transpose());
  NumArray out = val.values;
  const auto& slots = val.signature.slots();
  for (int s = 0; s < static_cast<int>(slots.size()); ++s) {
    const IndexSlot& slot = slots[static_cast<size_t>(s)];
    const bool temporal = slot.kind == IndexKind::temporal;
    const NumArray& M = slot.variance == Variance::upper ? (temporal ? J.dt : J.dx) : (temporal ? dt_inv_t : dx_inv_t);
    out = contract_slot(out, s, M);
  }
  return DTensorValue{val.signature, std::move(out)};
}

MetricField pushforward_metric(const CoordinateChange& cc, const MetricField& g) {
  const bool temporal = g.kind() == MetricKind::temporal;
  const int dim = g.dim();
  if (dim != (temporal ? cc.m() : cc.n())) throw PreconditionError("metric dimension does not match the change");
  const std::vector<Expression>& inv = temporal ? cc.t_inverse() : cc.x_inverse();
  const Substitution sub = temporal ? temporal_substitution(inv) : spatial_substitution(inv);
  const ExprArray& D = temporal ? cc.dt_inverse() : cc.dx_inverse();
  ExprArray composed({dim, dim});
  for (int a = 0; a < dim; ++a)
    for (int b = 0; b < dim; ++b) composed(a, b) = substitute(g(a, b), sub);
  ExprArray out({dim, dim});
  for (int a = 0; a < dim; ++a)
    for (int b = a; b < dim; ++b) {
      std::vector<Expression> terms;
      for (int c = 0; c < dim; ++c)
        for (int d = 0; d < dim; ++d) {
          const Expression term = composed(c, d) * D(c, a) * D(d, b);
          if (!term.is_zero()) terms.push_back(term);
        }
      out(a, b) = sum(terms);
      out(b, a) = out(a, b);
    }
  return MetricField(g.kind(), std::move(out));
}

PushedSystem pushforward_system(const CoordinateChange& cc, const PdeSystem& F, const MetricField& h) {
  const int m = cc.m();
  const int n = cc.n();
  if (F.m() != m || F.n() != n) throw PreconditionError("system dimensions do not match the change");
  const Substitution tsub = temporal_substitution(cc.t_inverse());
  const Substitution xsub = spatial_substitution(cc.x_inverse());

  // Jacobian factors, all written in the new chart.
  const ExprArray& B = cc.dt_inverse();  // dt^g/dt~^a
  const ExprArray& Y = cc.dx_inverse();  // dx^k/dx~^j
  ExprArray A({n, n});                   // dx~^i/dx^k
  ExprArray C({m, m});                   // dt~^u/dt^g
  ExprArray Hx({n, n, n});               // d2x~^i/dx^k dx^l
  ExprArray Ht({m, m, m});               // d2t^g/dt~^a dt~^b
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      A(i, k) = substitute(cc.dx_forward()(i, k), xsub);
      for (int l = 0; l < n; ++l)
        Hx(i, k, l) = substitute(differentiate(cc.dx_forward()(i, k), VariableId::x(l)), xsub);
    }
  for (int u = 0; u < m; ++u)
    for (int g = 0; g < m; ++g) {
      C(u, g) = substitute(cc.dt_forward()(u, g), tsub);
      for (int b = 0; b < m; ++b) Ht(u, g, b) = differentiate(B(u, g), VariableId::t(b));
    }

  // Old velocities and the partially transformed w^k_a = (dx^k/dx~^s) v~^s_a.
  std::vector<Expression> v_old(static_cast<size_t>(n * m));
  ExprArray w({n, m});
  for (int k = 0; k < n; ++k)
    for (int a = 0; a < m; ++a) {
      std::vector<Expression> wt;
      for (int s = 0; s < n; ++s) wt.push_back(Y(k, s) * var_v(s, a));
      w(k, a) = sum(wt);
    }
  for (int k = 0; k < n; ++k)
    for (int g = 0; g < m; ++g) {
      std::vector<Expression> terms;
      for (int u = 0; u < m; ++u) terms.push_back(w(k, u) * C(u, g));
      v_old[static_cast<size_t>(k * m + g)] = sum(terms);
    }

  Substitution sub = tsub;
  for (int k = 0; k < n; ++k) sub[static_cast<size_t>(VariableId::x(k).slot())] = xsub[static_cast<size_t>(VariableId::x(k).slot())];
  for (int k = 0; k < n; ++k)
    for (int g = 0; g < m; ++g)
      sub[static_cast<size_t>(VariableId::v(k, g).slot())] = &v_old[static_cast<size_t>(k * m + g)];

  ExprArray Fo({n, m, m});
  for (int k = 0; k < n; ++k)
    for (int g = 0; g < m; ++g)
      for (int u = 0; u < m; ++u) Fo(k, g, u) = substitute(F(k, g, u), sub);

  auto component = [&](int i, int a, int b) {
    std::vector<Expression> terms;
    for (int k = 0; k < n; ++k) {
      if (A(i, k).is_zero()) continue;
      for (int g = 0; g < m; ++g)
        for (int u = 0; u < m; ++u) {
          const Expression t = A(i, k) * B(g, a) * B(u, b) * Fo(k, g, u);
          if (!t.is_zero()) terms.push_back(t);
        }
      for (int g = 0; g < m; ++g) {
        const Expression t = A(i, k) * v_old[static_cast<size_t>(k * m + g)] * Ht(g, a, b);
        if (!t.is_zero()) terms.push_back(-t);
      }
    }
    for (int k = 0; k < n; ++k)
      for (int l = 0; l < n; ++l) {
        const Expression t = Hx(i, k, l) * w(k, a) * w(l, b);
        if (!t.is_zero()) terms.push_back(-t);
      }
    return sum(terms);
  };

  if (F.symmetric_storage()) {
    PdeSystem out(m, n);
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < m; ++a)
        for (int b = a; b < m; ++b) out.set(i, a, b, component(i, a, b));
    return {std::move(out), pushforward_metric(cc, h)};
  }
  ExprArray comps({n, m, m});
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) comps(i, a, b) = component(i, a, b);
  return {PdeSystem::as_written(std::move(comps)), pushforward_metric(cc, h)};
}

SectionMap transform_section(const CoordinateChange& cc, const SectionMap& sigma) {
  if (sigma.n() != cc.n()) throw PreconditionError("section dimension does not match the change");
  const Substitution xsub = spatial_substitution(sigma.components());
  const Substitution tsub = temporal_substitution(cc.t_inverse());
  std::vector<Expression> out;
  for (const Expression& e : cc.x_forward()) out.push_back(substitute(substitute(e, xsub), tsub));
  return SectionMap(std::move(out));
}

ExprArray new_velocity_in_old(const CoordinateChange& cc) {
  const int m = cc.m();
  const int n = cc.n();
  const Substitution tsub = temporal_substitution(cc.t_forward());
  ExprArray B({m, m});
  for (int g = 0; g < m; ++g)
    for (int a = 0; a < m; ++a) B(g, a) = substitute(cc.dt_inverse()(g, a), tsub);
  ExprArray out({n, m});
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a) {
      std::vector<Expression> terms;
      for (int j = 0; j < n; ++j)
        for (int g = 0; g < m; ++g) {
          const Expression t = cc.dx_forward()(i, j) * var_v(j, g) * B(g, a);
          if (!t.is_zero()) terms.push_back(t);
        }
      out(i, a) = sum(terms);
    }
  return out;
}

namespace {

// B^u_b d v~^i_a / dt^u at p.
NumArray time_term(const RuleTerms& r, const ChangeJacobians& J, const Bindings& b, int n, int m) {
  const NumArray dvdt = evaluate(r.dvdt, b);
  NumArray out({n, m, m});
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a)
      for (int c = 0; c < m; ++c) {
        double acc = 0.0;
        for (int u = 0; u < m; ++u) acc += J.dt_inv(u, c) * dvdt(i, a, u);
        out(i, a, c) = acc;
      }
  return out;
}

// (dx^r/dx~^s) d v~^i_a / dx^r, shape (n, m, n) indexed by s.
NumArray space_factor(const RuleTerms& r, const ChangeJacobians& J, const Bindings& b, int n, int m) {
  const NumArray dvdx = evaluate(r.dvdx, b);
  NumArray out({n, m, n});
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a)
      for (int s = 0; s < n; ++s) {
        double acc = 0.0;
        for (int q = 0; q < n; ++q) acc += J.dx_inv(q, s) * dvdx(i, a, q);
        out(i, a, s) = acc;
      }
  return out;
}

NumArray space_term(const RuleTerms& r, const ChangeJacobians& J, const Bindings& b, int n, int m) {
  const NumArray f = space_factor(r, J, b, n, m);
  const NumArray vnew = evaluate(r.vnew, b);
  NumArray out({n, m, m});
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a)
      for (int c = 0; c < m; ++c) {
        double acc = 0.0;
        for (int s = 0; s < n; ++s) acc += f(i, a, s) * vnew(s, c);
        out(i, a, c) = acc;
      }
  return out;
}

NumArray abb(const NumArray& F, const ChangeJacobians& J) {
  const NumArray Bt = from_matrix(to_matrix(J.dt_inv).transpose());
  return contract_slot(contract_slot(contract_slot(F, 0, J.dx), 1, Bt), 2, Bt);
}

void require_shape(const ExprArray& a, std::vector<int> shape, const char* what) {
  if (a.shape() != shape) throw PreconditionError(std::string(what) + " has the wrong shape");
}

}  // namespace

NumArray temporal_semispray_rule(const CoordinateChange& cc, const ExprArray& H, const JetPoint& p) {
  const int m = cc.m(), n = cc.n();
  require_shape(H, {n, m, m}, "temporal semispray");
  const ChangeJacobians J = jacobians_at(cc, p);
  const Bindings b = p.bindings();
  NumArray out = abb(evaluate(H, b), J);
  const NumArray tt = time_term(rule_terms(cc), J, b, n, m);
  for (size_t k = 0; k < out.size(); ++k) out.flat()[k] -= 0.5 * tt.flat()[k];
  return out;
}

NumArray spatial_semispray_rule(const CoordinateChange& cc, const ExprArray& G, const JetPoint& p) {
  const int m = cc.m(), n = cc.n();
  require_shape(G, {n, m, m}, "spatial semispray");
  const ChangeJacobians J = jacobians_at(cc, p);
  const Bindings b = p.bindings();
  NumArray out = abb(evaluate(G, b), J);
  const NumArray st = space_term(rule_terms(cc), J, b, n, m);
  for (size_t k = 0; k < out.size(); ++k) out.flat()[k] -= 0.5 * st.flat()[k];
  return out;
}

NumArray temporal_connection_rule(const CoordinateChange& cc, const ExprArray& M, const JetPoint& p) {
  const int m = cc.m(), n = cc.n();
  require_shape(M, {n, m, m}, "temporal connection");
  const ChangeJacobians J = jacobians_at(cc, p);
  const Bindings b = p.bindings();
  NumArray out = abb(evaluate(M, b), J);
  const NumArray tt = time_term(rule_terms(cc), J, b, n, m);
  for (size_t k = 0; k < out.size(); ++k) out.flat()[k] -= tt.flat()[k];
  return out;
}

NumArray spatial_connection_rule(const CoordinateChange& cc, const ExprArray& N, const JetPoint& p) {
  const int m = cc.m(), n = cc.n();
  require_shape(N, {n, m, n}, "spatial connection");
  const ChangeJacobians J = jacobians_at(cc, p);
  const Bindings b = p.bindings();
  const NumArray Bt = from_matrix(to_matrix(J.dt_inv).transpose());
  // N A B (dx/dx~): slot 2 is a lower spatial index.
  const NumArray Yt = from_matrix(to_matrix(J.dx_inv).transpose());
  NumArray out = contract_slot(contract_slot(contract_slot(evaluate(N, b), 0, J.dx), 1, Bt), 2, Yt);
  const NumArray f = space_factor(rule_terms(cc), J, b, n, m);
  for (size_t k = 0; k < out.size(); ++k) out.flat()[k] -= f.flat()[k];
  return out;
}

NumArray system_rule(const CoordinateChange& cc, const PdeSystem& F, const JetPoint& p, double coefficient) {
  const int m = cc.m(), n = cc.n();
  if (F.m() != m || F.n() != n) throw PreconditionError("system dimensions do not match the change");
  const ChangeJacobians J = jacobians_at(cc, p);
  const Bindings b = p.bindings();
  const RuleTerms r = rule_terms(cc);
  NumArray out = abb(evaluate(F.components(), b), J);
  const NumArray tt = time_term(r, J, b, n, m);
  const NumArray st = space_term(r, J, b, n, m);
  for (size_t k = 0; k < out.size(); ++k) out.flat()[k] = coefficient * out.flat()[k] - tt.flat()[k] - st.flat()[k];
  return out;
}

double relative_deviation(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  if (scale <= kVanishTol) return 0.0;
  return std::abs(a - b) / std::max(scale, kDeviationFloor);
}

double max_relative_deviation(const NumArray& a, const NumArray& b) {
  if (a.shape() != b.shape()) throw PreconditionError("compared arrays have different shapes");
  double worst = 0.0;
  for (size_t k = 0; k < a.size(); ++k) worst = std::max(worst, relative_deviation(a.flat()[k], b.flat()[k]));
  return worst;
}

double InvarianceReport::max_deviation() const {
  double worst = 0.0;
  for (const InvarianceEntry& e : entries) worst = std::max(worst, e.max_deviation);
  return worst;
}

InvarianceReport check_invariance(const KccInvariants& original, const KccInvariants& pushed,
                                  const CoordinateChange& cc, const PointSampler& sampler, int count,
                                  std::span<const Invariant> which) {
  InvarianceReport report;
  report.points = count;
  for (Invariant w : which) report.entries.push_back(InvarianceEntry{w});
  for (int k = 0; k < count; ++k) {
    const auto index = static_cast<std::uint64_t>(k);
    const JetPoint p = sampler.point(index);
    const JetPoint q = transform_jet_point(cc, p);
    for (InvarianceEntry& e : report.entries) {
      const DTensorValue moved = transform_dtensor(original.evaluate(e.which, p), cc, p);
      const DTensorValue direct = pushed.evaluate(e.which, q);
      const double dev = max_relative_deviation(moved.values, direct.values);
      for (size_t c = 0; c < moved.values.size(); ++c)
        e.max_abs_difference = std::max(e.max_abs_difference, std::abs(moved.values.flat()[c] - direct.values.flat()[c]));
      if (dev > e.max_deviation) {
        e.max_deviation = dev;
        e.worst_point = index;
      }
    }
  }
  return report;
}

InvarianceReport check_invariance(const PdeSystem& F, const MetricField& h, const CoordinateChange& cc,
                                  const PointSampler& sampler, int count, std::span<const Invariant> which) {
  PushedSystem pushed = pushforward_system(cc, F, h);
  const KccInvariants a(F, h);
  const KccInvariants b(std::move(pushed.F), std::move(pushed.h));
  return check_invariance(a, b, cc, sampler, count, which);
}

}  // namespace jetkcc
