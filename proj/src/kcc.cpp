#include "jetkcc/kcc.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace jetkcc {

namespace {

Expression var_v(int i, int a) { return Expression::variable(VariableId::v(i, a)); }

Bindings time_bindings(int m, int n, const std::vector<double>& t) {
  if (static_cast<int>(t.size()) != m) throw PreconditionError("time point has the wrong dimension");
  Bindings b(m, n);
  for (int a = 0; a < m; ++a) b.set(VariableId::t(a), t[static_cast<std::size_t>(a)]);
  return b;
}

void require_temporal(const MetricField& h, int m) {
  if (h.kind() != MetricKind::temporal) throw PreconditionError("expected a temporal metric");
  if (h.dim() != m) throw PreconditionError("temporal metric dimension does not match the system");
}

HTraces traces_with(const PdeSystem& F, const MetricGeometry& geo) {
  const int m = F.m();
  const int n = F.n();
  HTraces out{std::vector<Expression>(static_cast<std::size_t>(n)), std::vector<Expression>(static_cast<std::size_t>(m))};
  for (int i = 0; i < n; ++i) {
    Expression acc;
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b)
        if (!geo.inverse(a, b).is_zero()) acc = acc + geo.inverse(a, b) * F(i, a, b);
    out.F[static_cast<std::size_t>(i)] = acc;
  }
  for (int g = 0; g < m; ++g) {
    Expression acc;
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b)
        if (!geo.inverse(a, b).is_zero()) acc = acc + geo.inverse(a, b) * geo.christoffel(g, a, b);
    out.H[static_cast<std::size_t>(g)] = acc;
  }
  return out;
}

ExprArray velocity_derivative_of_traces(const HTraces& tr, int m, int n, DerivativeCache& diff) {
  ExprArray d({n, n, m});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int g = 0; g < m; ++g) d(i, j, g) = diff(tr.F[static_cast<std::size_t>(i)], VariableId::v(j, g));
  return d;
}

ExprArray connection_with(const HTraces& tr, const ExprArray& dFv, const MetricField& h, int m, int n) {
  ExprArray N({n, m, n});
  for (int a = 0; a < m; ++a) {
    Expression hterm;
    for (int g = 0; g < m; ++g) hterm = hterm + tr.H[static_cast<std::size_t>(g)] * h(g, a);
    hterm = Expression(0.5) * hterm;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        Expression acc;
        for (int g = 0; g < m; ++g) acc = acc + dFv(i, j, g) * h(g, a);
        acc = Expression(0.5) * acc;
        N(i, a, j) = i == j ? acc + hterm : acc;
      }
    }
  }
  return N;
}

double max_abs(const NumArray& a) {
  double r = 0;
  for (double x : a.flat()) r = std::max(r, std::fabs(x));
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Correspondences

ExprArray temporal_connection_from_semispray(const TemporalSemispray& H) {
  ExprArray M(H.H.shape());
  for (std::size_t k = 0; k < M.size(); ++k) M.flat()[k] = Expression(2.0) * H.H.flat()[k];
  return M;
}

TemporalSemispray temporal_semispray_from_connection(const ExprArray& M) {
  TemporalSemispray H{ExprArray(M.shape())};
  for (std::size_t k = 0; k < M.size(); ++k) H.H.flat()[k] = Expression(0.5) * M.flat()[k];
  return H;
}

SpatialSemispray spatial_semispray_from_F(const PdeSystem& F, const MetricField& h) {
  require_temporal(h, F.m());
  const int m = F.m();
  const int n = F.n();
  const ExprArray Hc = christoffel_sym(h);
  SpatialSemispray G{ExprArray({n, m, m})};
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) {
        Expression hv;
        for (int mu = 0; mu < m; ++mu) hv = hv + Hc(mu, a, b) * var_v(i, mu);
        G.G(i, a, b) = Expression(0.5) * F(i, a, b) + Expression(0.5) * hv;
      }
  return G;
}

ExprArray connection_from_F(const PdeSystem& F, const MetricField& h) {
  require_temporal(h, F.m());
  const MetricGeometry geo(h);
  const HTraces tr = traces_with(F, geo);
  DerivativeCache diff;
  return connection_with(tr, velocity_derivative_of_traces(tr, F.m(), F.n(), diff), h, F.m(), F.n());
}

ExprArray connection_from_semispray(const SpatialSemispray& G, const MetricField& h) {
  const auto& s = G.G.shape();
  const int n = s[0];
  const int m = s[1];
  require_temporal(h, m);
  const ExprArray hi = inverse_metric_sym(h);
  DerivativeCache diff;
  ExprArray N({n, m, n});
  for (int i = 0; i < n; ++i) {
    std::vector<Expression> trace_d(static_cast<std::size_t>(n * m));  // h^mn dG_mn / dv^j_g
    for (int j = 0; j < n; ++j)
      for (int g = 0; g < m; ++g) {
        Expression acc;
        for (int mu = 0; mu < m; ++mu)
          for (int nu = 0; nu < m; ++nu)
            if (!hi(mu, nu).is_zero()) acc = acc + hi(mu, nu) * diff(G.G(i, mu, nu), VariableId::v(j, g));
        trace_d[static_cast<std::size_t>(j * m + g)] = acc;
      }
    for (int a = 0; a < m; ++a)
      for (int j = 0; j < n; ++j) {
        Expression acc;
        for (int g = 0; g < m; ++g) acc = acc + trace_d[static_cast<std::size_t>(j * m + g)] * h(g, a);
        N(i, a, j) = acc;
      }
  }
  return N;
}

SpatialSemispray semispray_from_connection(const ExprArray& N) {
  const auto& s = N.shape();
  if (s.size() != 3 || s[0] != s[2]) throw PreconditionError("connection must have shape (n, m, n)");
  const int n = s[0];
  const int m = s[1];
  SpatialSemispray G{ExprArray({n, m, m})};
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) {
        Expression acc;
        for (int r = 0; r < n; ++r) acc = acc + N(i, a, r) * var_v(r, b);
        G.G(i, a, b) = Expression(0.5) * acc;
      }
  return G;
}

HTraces h_traces(const PdeSystem& F, const MetricField& h) {
  require_temporal(h, F.m());
  return traces_with(F, MetricGeometry(h));
}

// ---------------------------------------------------------------------------
// Invariants

const char* invariant_name(Invariant which) {
  switch (which) {
    case Invariant::eps:
      return "eps";
    case Invariant::P:
      return "P";
    case Invariant::R:
      return "R";
    case Invariant::B:
      return "B";
    case Invariant::D:
      return "D";
  }
  return "?";
}

std::optional<Invariant> invariant_from_name(const std::string& name) {
  for (Invariant w : kAllInvariants)
    if (name == invariant_name(w)) return w;
  return std::nullopt;
}

IndexSignature invariant_signature(Invariant which) {
  switch (which) {
    case Invariant::eps:
      return IndexSignature({spatial_up("i"), temporal_down("alpha"), temporal_down("beta")}, {{0, 1}});
    case Invariant::P:
      return IndexSignature({spatial_up("i"), spatial_down("j")});
    case Invariant::R:
      return IndexSignature({spatial_up("i"), temporal_up("alpha"), spatial_down("j"), spatial_down("k")});
    case Invariant::B:
      return IndexSignature({spatial_up("i"), temporal_up("alpha"), temporal_up("beta"), spatial_down("j"),
                             spatial_down("k"), spatial_down("l")},
                            {{5, 2}});
    case Invariant::D:
      return IndexSignature({spatial_up("i"), temporal_down("alpha"), temporal_down("beta"), spatial_down("j"),
                             temporal_up("gamma"), spatial_down("k"), temporal_up("epsilon"), spatial_down("l"),
                             temporal_up("mu")},
                            {{0, 1}, {3, 4}, {5, 6}, {7, 8}});
  }
  throw PreconditionError("unknown invariant");
}

KccInvariants::KccInvariants(PdeSystem F, MetricField h)
    : F_(std::move(F)), h_(std::move(h)), geo_((require_temporal(h_, F_.m()), h_)) {
  traces_ = traces_with(F_, geo_);
  dFv_ = velocity_derivative_of_traces(traces_, m(), n(), diff_);
  N_ = connection_with(traces_, dFv_, h_, m(), n());
}

const ExprArray& KccInvariants::expressions(Invariant which) const {
  std::lock_guard lock(mu_);
  return build_locked(which);
}

const ExprArray& KccInvariants::build_locked(Invariant which) const {
  Slot& slot = slots_[static_cast<int>(which)];
  if (!slot.expr) {
    switch (which) {
      case Invariant::eps:
        slot.expr = build_eps();
        break;
      case Invariant::P:
        slot.expr = build_P();
        break;
      case Invariant::R:
        slot.expr = build_R();
        break;
      case Invariant::B:
        slot.expr = build_B();
        break;
      case Invariant::D:
        slot.expr = build_D();
        break;
    }
  }
  return *slot.expr;
}

DTensorValue KccInvariants::evaluate(Invariant which, const JetPoint& p) const {
  if (p.m() != m() || p.n() != n()) throw PreconditionError("jet point dimensions do not match the system");
  const Bindings b = p.bindings();
  h_.evaluate(b);  // rejects singular h
  const CompiledArray* compiled;
  {
    std::lock_guard lock(mu_);
    const ExprArray& e = build_locked(which);
    Slot& slot = slots_[static_cast<int>(which)];
    if (!slot.compiled) slot.compiled.emplace(e);
    compiled = &*slot.compiled;
  }
  return DTensorValue{invariant_signature(which), compiled->evaluate(b)};
}

ExprArray KccInvariants::build_eps() const {
  const int m = this->m();
  const int n = this->n();
  const ExprArray& Hc = geo_.christoffel;
  ExprArray eps({n, m, m});
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) {
        Expression acc = -F_(i, a, b);
        for (int r = 0; r < n; ++r) acc = acc + N_(i, a, r) * var_v(r, b);
        for (int mu = 0; mu < m; ++mu) acc = acc - Hc(mu, a, b) * var_v(i, mu);
        eps(i, a, b) = acc;
      }
  return eps;
}

ExprArray KccInvariants::build_P() const {
  const int m = this->m();
  const int n = this->n();
  const ExprArray& hi = geo_.inverse;
  const auto& Ftr = traces_.F;
  const auto& Htr = traces_.H;
  const Expression half(0.5);
  const Expression quarter(0.25);

  // W_mu = (h^ge / 2) d h_mg / dt^e
  std::vector<Expression> W(static_cast<std::size_t>(m));
  for (int mu = 0; mu < m; ++mu) {
    Expression acc;
    for (int g = 0; g < m; ++g)
      for (int e = 0; e < m; ++e)
        if (!hi(g, e).is_zero()) acc = acc + hi(g, e) * diff_(h_(mu, g), VariableId::t(e));
    W[static_cast<std::size_t>(mu)] = half * acc;
  }

  Expression scalar;
  for (int g = 0; g < m; ++g) scalar = scalar + half * diff_(Htr[static_cast<std::size_t>(g)], VariableId::t(g));
  for (int mu = 0; mu < m; ++mu) scalar = scalar + W[static_cast<std::size_t>(mu)] * Htr[static_cast<std::size_t>(mu)];
  for (int g = 0; g < m; ++g)
    for (int mu = 0; mu < m; ++mu)
      scalar = scalar - quarter * h_(g, mu) * Htr[static_cast<std::size_t>(g)] * Htr[static_cast<std::size_t>(mu)];

  ExprArray P({n, n});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      Expression acc = -diff_(Ftr[static_cast<std::size_t>(i)], VariableId::x(j));
      for (int g = 0; g < m; ++g) {
        const Expression& dv = dFv_(i, j, g);
        acc = acc + half * diff_(dv, VariableId::t(g));
        for (int r = 0; r < n; ++r) acc = acc + half * diff_(dv, VariableId::x(r)) * var_v(r, g);
      }
      for (int mu = 0; mu < m; ++mu)
        for (int r = 0; r < n; ++r)
          for (int g = 0; g < m; ++g) acc = acc - half * diff_(dFv_(i, j, mu), VariableId::v(r, g)) * F_(r, g, mu);
      for (int g = 0; g < m; ++g)
        for (int mu = 0; mu < m; ++mu) {
          if (h_(g, mu).is_zero()) continue;
          for (int r = 0; r < n; ++r) acc = acc + quarter * h_(g, mu) * dFv_(i, r, g) * dFv_(r, j, mu);
        }
      for (int mu = 0; mu < m; ++mu) acc = acc + W[static_cast<std::size_t>(mu)] * dFv_(i, j, mu);
      P(i, j) = i == j ? acc + scalar : acc;
    }
  }
  return P;
}

ExprArray KccInvariants::build_R() const {
  const int m = this->m();
  const int n = this->n();
  const ExprArray& P = build_locked(Invariant::P);
  const Expression third(1.0 / 3.0);
  ExprArray R({n, m, n, n});
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a)
      for (int j = 0; j < n; ++j)
        for (int k = j + 1; k < n; ++k) {
          const Expression e = third * (diff_(P(i, j), VariableId::v(k, a)) - diff_(P(i, k), VariableId::v(j, a)));
          R(i, a, j, k) = e;
          R(i, a, k, j) = -e;
        }
  return R;
}

ExprArray KccInvariants::build_B() const {
  const int m = this->m();
  const int n = this->n();
  const ExprArray& R = build_locked(Invariant::R);
  ExprArray B({n, m, m, n, n, n});
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a)
      for (int j = 0; j < n; ++j)
        for (int k = j + 1; k < n; ++k)
          for (int b = 0; b < m; ++b)
            for (int l = 0; l < n; ++l) {
              const Expression e = diff_(R(i, a, j, k), VariableId::v(l, b));
              B(i, a, b, j, k, l) = e;
              B(i, a, b, k, j, l) = -e;
            }
  return B;
}

ExprArray KccInvariants::build_D() const {
  const int m = this->m();
  const int n = this->n();
  const int q = n * m;  // pair index p = j * m + g
  ExprArray D({n, m, m, n, m, n, m, n, m});
  auto pair_var = [m](int p) { return VariableId::v(p / m, p % m); };
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b)
        for (int p1 = 0; p1 < q; ++p1) {
          const Expression d1 = diff_(F_(i, a, b), pair_var(p1));
          for (int p2 = p1; p2 < q; ++p2) {
            const Expression d2 = diff_(d1, pair_var(p2));
            for (int p3 = p2; p3 < q; ++p3) {
              const Expression d3 = diff_(d2, pair_var(p3));
              std::array<int, 3> ps{p1, p2, p3};
              do {
                D(i, a, b, ps[0] / m, ps[0] % m, ps[1] / m, ps[1] % m, ps[2] / m, ps[2] % m) = d3;
              } while (std::next_permutation(ps.begin(), ps.end()));
            }
          }
        }
  return D;
}

// ---------------------------------------------------------------------------
// Sections

SectionMap::SectionMap(std::vector<Expression> components) : x_(std::move(components)) {
  if (x_.empty() || static_cast<int>(x_.size()) > kMaxDim) throw PreconditionError("section has invalid dimension");
  for (const auto& e : x_) {
    if ((e.dependencies() & ~temporal_mask()) != 0) {
      throw PreconditionError("section and variation components may depend only on t variables");
    }
  }
}

Prolongation::Prolongation(const SectionMap& sigma, int m) : m_(m), n_(sigma.n()), x_(sigma.components()) {
  v_.reserve(static_cast<std::size_t>(n_ * m_));
  for (int i = 0; i < n_; ++i)
    for (int a = 0; a < m_; ++a) v_.push_back(differentiate(x_[static_cast<std::size_t>(i)], VariableId::t(a)));
  sub_.fill(nullptr);
  for (int i = 0; i < n_; ++i) {
    sub_[static_cast<std::size_t>(VariableId::x(i).slot())] = &x_[static_cast<std::size_t>(i)];
    for (int a = 0; a < m_; ++a)
      sub_[static_cast<std::size_t>(VariableId::v(i, a).slot())] = &v_[static_cast<std::size_t>(i * m_ + a)];
  }
}

Expression Prolongation::compose(const Expression& e) const { return substitute(e, sub_); }

JetPoint Prolongation::point(const std::vector<double>& t) const {
  const Bindings b = time_bindings(m_, n_, t);
  JetPoint p(m_, n_);
  p.t() = t;
  for (int i = 0; i < n_; ++i) {
    p.x()[static_cast<std::size_t>(i)] = jetkcc::evaluate(x_[static_cast<std::size_t>(i)], b);
    for (int a = 0; a < m_; ++a) p.v()(i, a) = jetkcc::evaluate(v_[static_cast<std::size_t>(i * m_ + a)], b);
  }
  return p;
}

namespace {

void require_section(const SectionMap& s, int n, const char* what) {
  if (s.n() != n) throw PreconditionError(std::string(what) + " dimension does not match the system");
}

}  // namespace

NumArray sode_residual(const PdeSystem& F, const SectionMap& sigma, const std::vector<double>& t) {
  const int m = F.m();
  const int n = F.n();
  require_section(sigma, n, "section");
  const Prolongation pr(sigma, m);
  const Bindings tb = time_bindings(m, n, t);
  const Bindings pb = pr.point(t).bindings();
  NumArray out({n, m, m});
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a) {
      const Expression da = differentiate(sigma[i], VariableId::t(a));
      for (int b = 0; b < m; ++b)
        out(i, a, b) = evaluate(differentiate(da, VariableId::t(b)), tb) + evaluate(F(i, a, b), pb);
    }
  return out;
}

NumArray covariant_derivative_section(const ExprArray& T, const KccInvariants& inv, const SectionMap& sigma,
                                      const std::vector<double>& t) {
  const int m = inv.m();
  const int n = inv.n();
  require_section(sigma, n, "section");
  if (T.shape() != std::vector<int>{n, m}) throw PreconditionError("T must have shape (n, m)");
  const Prolongation pr(sigma, m);
  const Bindings tb = time_bindings(m, n, t);
  const Bindings pb = pr.point(t).bindings();
  const NumArray Tv = evaluate(T, pb);
  const NumArray Nv = evaluate(inv.connection(), pb);
  const NumArray Hv = evaluate(inv.temporal_geometry().christoffel, tb);
  NumArray out({n, m, m});
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a) {
      const Expression along = pr.compose(T(i, a));
      for (int b = 0; b < m; ++b) {
        double acc = evaluate(differentiate(along, VariableId::t(b)), tb);
        for (int r = 0; r < n; ++r) acc += Nv(i, a, r) * Tv(r, b);
        for (int mu = 0; mu < m; ++mu) acc -= Hv(mu, a, b) * Tv(i, mu);
        out(i, a, b) = acc;
      }
    }
  return out;
}

NumArray covariant_derivative_variation(const VariationField& xi, const KccInvariants& inv, const SectionMap& sigma,
                                        const std::vector<double>& t) {
  const int m = inv.m();
  const int n = inv.n();
  require_section(sigma, n, "section");
  require_section(xi, n, "variation");
  const Prolongation pr(sigma, m);
  const Bindings tb = time_bindings(m, n, t);
  const NumArray Nv = evaluate(inv.connection(), pr.point(t).bindings());
  NumArray out({n, m});
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a) {
      double acc = evaluate(differentiate(xi[i], VariableId::t(a)), tb);
      for (int r = 0; r < n; ++r) acc += Nv(i, a, r) * evaluate(xi[r], tb);
      out(i, a) = acc;
    }
  return out;
}

NumArray variational_residual(const PdeSystem& F, const SectionMap& sigma, const VariationField& xi,
                              const std::vector<double>& t) {
  const int m = F.m();
  const int n = F.n();
  require_section(sigma, n, "section");
  require_section(xi, n, "variation");
  const Prolongation pr(sigma, m);
  const Bindings tb = time_bindings(m, n, t);
  const Bindings pb = pr.point(t).bindings();
  std::vector<double> xv(static_cast<std::size_t>(n));
  NumArray dxi({n, m});
  for (int r = 0; r < n; ++r) {
    xv[static_cast<std::size_t>(r)] = evaluate(xi[r], tb);
    for (int mu = 0; mu < m; ++mu) dxi(r, mu) = evaluate(differentiate(xi[r], VariableId::t(mu)), tb);
  }
  DerivativeCache diff;
  NumArray out({n, m, m});
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) {
        double acc = evaluate(diff(diff(xi[i], VariableId::t(a)), VariableId::t(b)), tb);
        for (int k = 0; k < n; ++k) acc += evaluate(diff(F(i, a, b), VariableId::x(k)), pb) * xv[static_cast<std::size_t>(k)];
        for (int r = 0; r < n; ++r)
          for (int mu = 0; mu < m; ++mu) acc += evaluate(diff(F(i, a, b), VariableId::v(r, mu)), pb) * dxi(r, mu);
        out(i, a, b) = acc;
      }
  return out;
}

std::vector<double> h_trace_variational_residual(const PdeSystem& F, const MetricField& h, const SectionMap& sigma,
                                                 const VariationField& xi, const std::vector<double>& t) {
  require_temporal(h, F.m());
  const NumArray full = variational_residual(F, sigma, xi, t);
  const Bindings tb = time_bindings(F.m(), F.n(), t);
  h.evaluate(tb);  // rejects singular h
  const NumArray hi = evaluate(inverse_metric_sym(h), tb);
  std::vector<double> out(static_cast<std::size_t>(F.n()), 0.0);
  for (int i = 0; i < F.n(); ++i)
    for (int a = 0; a < F.m(); ++a)
      for (int b = 0; b < F.m(); ++b) out[static_cast<std::size_t>(i)] += hi(a, b) * full(i, a, b);
  return out;
}

std::vector<double> jacobi_identity_residual(const KccInvariants& inv, const SectionMap& sigma,
                                             const VariationField& xi, const std::vector<double>& t) {
  const int m = inv.m();
  const int n = inv.n();
  require_section(sigma, n, "section");
  require_section(xi, n, "variation");
  const PdeSystem& F = inv.system();

  const double sode = max_abs(sode_residual(F, sigma, t));
  if (!(sode <= kSolutionTol)) {
    std::ostringstream msg;
    msg << "section is not a solution of the system at t: max |d2x/dt dt + F| = " << sode << " > " << kSolutionTol;
    throw PreconditionError(msg.str());
  }

  const ExprArray& N = inv.connection();
  const ExprArray& Hc = inv.temporal_geometry().christoffel;
  const ExprArray& hi = inv.temporal_geometry().inverse;
  const ExprArray& P = inv.expressions(Invariant::P);
  DerivativeCache diff;

  // Y(i, a) = nabla_a xi^i as a field on the jet space (xi depends on t only).
  ExprArray Y({n, m});
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a) {
      Expression acc = diff(xi[i], VariableId::t(a));
      for (int r = 0; r < n; ++r) acc = acc + N(i, a, r) * xi[r];
      Y(i, a) = acc;
    }

  // Total derivative along solutions: d/dt^b = d_t^b + v^r_b d_x^r - F^(r)_(g)b d_v^r_g.
  auto total = [&](const Expression& e, int b) {
    Expression acc = diff(e, VariableId::t(b));
    for (int r = 0; r < n; ++r) {
      acc = acc + diff(e, VariableId::x(r)) * var_v(r, b);
      for (int g = 0; g < m; ++g) acc = acc - diff(e, VariableId::v(r, g)) * F(r, g, b);
    }
    return acc;
  };

  ExprArray res({n});
  for (int i = 0; i < n; ++i) {
    Expression acc;
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) {
        if (hi(a, b).is_zero()) continue;
        Expression nab = total(Y(i, a), b);
        for (int r = 0; r < n; ++r) nab = nab + N(i, a, r) * Y(r, b);
        for (int mu = 0; mu < m; ++mu) nab = nab - Hc(mu, a, b) * Y(i, mu);
        acc = acc + hi(a, b) * nab;
      }
    for (int r = 0; r < n; ++r) acc = acc - P(i, r) * xi[r];
    res(i) = acc;
  }

  const Prolongation pr(sigma, m);
  const NumArray values = evaluate(res, pr.point(t).bindings());
  return {values.flat().begin(), values.flat().end()};
}

}  // namespace jetkcc
