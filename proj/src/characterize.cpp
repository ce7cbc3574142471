#include "jetkcc/characterize.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "jetkcc/kcc.hpp"
#include "jetkcc/sampling.hpp"

namespace jetkcc {

namespace {

using std::size_t;

Expression var_v(int i, int a) { return Expression::variable(VariableId::v(i, a)); }

void require_base_only(const Expression& e, const char* what) {
  if ((e.dependencies() & velocity_mask()) != 0)
    throw PreconditionError(std::string(what) + " must not depend on velocities: " + to_string(e));
}

Eigen::MatrixXd numeric_matrix(const NumArray& a) {
  const int d = a.shape()[0];
  Eigen::MatrixXd M(d, d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) M(r, c) = a(r, c);
  return M;
}

Bindings base_bindings(int m, int n, const std::vector<double>& t, const std::vector<double>& x) {
  if (static_cast<int>(t.size()) != m || static_cast<int>(x.size()) != n)
    throw PreconditionError("base point has the wrong dimensions");
  Bindings b(m, n);
  for (int a = 0; a < m; ++a) b.set(VariableId::t(a), t[static_cast<size_t>(a)]);
  for (int i = 0; i < n; ++i) b.set(VariableId::x(i), x[static_cast<size_t>(i)]);
  return b;
}

// Matrix of (**) at a numeric h; unknown/equation order from `unknowns`.
NumArray star_star_matrix(const Eigen::MatrixXd& h, const std::vector<std::pair<int, int>>& unknowns) {
  const int m = static_cast<int>(h.rows());
  const Eigen::MatrixXd hinv = h.inverse();
  const int k = static_cast<int>(unknowns.size());
  auto index = [&](int nu, int alpha) {
    for (int u = 0; u < k; ++u)
      if (unknowns[static_cast<size_t>(u)] == std::make_pair(nu, alpha)) return u;
    throw PreconditionError("internal: unknown S index");
  };
  NumArray A({k, k});
  for (int row = 0; row < k; ++row) {
    const auto [nu, alpha] = unknowns[static_cast<size_t>(row)];
    // 2 S^nu_alpha - sum_{e != nu} [h^ee S^nu_e - h^nn S^e_nu] h_ea = 0
    A(row, index(nu, alpha)) += 2.0;
    for (int e = 0; e < m; ++e) {
      if (e == nu) continue;
      A(row, index(nu, e)) -= hinv(e, e) * h(e, alpha);
      A(row, index(e, nu)) += hinv(nu, nu) * h(e, alpha);
    }
  }
  return A;
}

std::vector<std::pair<int, int>> star_star_unknowns(int m) {
  std::vector<std::pair<int, int>> u;
  for (int nu = 0; nu < m; ++nu)
    for (int alpha = 0; alpha < m; ++alpha)
      if (alpha != nu) u.emplace_back(nu, alpha);
  return u;
}

}  // namespace

GammaField::GammaField(ExprArray components) : G_(std::move(components)) {
  const auto& s = G_.shape();
  if (s.size() != 3 || s[0] != s[1] || s[1] != s[2] || s[0] < 1 || s[0] > kMaxDim)
    throw PreconditionError("Gamma must have shape (n, n, n)");
  const int n = s[0];
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < n; ++p)
      for (int q = 0; q < n; ++q) {
        require_base_only(G_(i, p, q), "Gamma");
        if (!structurally_equal(G_(i, p, q), G_(i, q, p)))
          throw PreconditionError("Gamma must be symmetric in its lower indices");
      }
}

GammaField GammaField::zero(int n) { return GammaField(ExprArray({n, n, n})); }

GammaField GammaField::christoffel(const MetricField& phi) {
  if (phi.kind() != MetricKind::spatial) throw PreconditionError("expected a spatial metric");
  return GammaField(christoffel_sym(phi));
}

SField::SField(int m, int n) : S_({n, m, m, n, n}) {
  if (m < 1 || m > kMaxDim || n < 1 || n > kMaxDim) throw PreconditionError("dimensions must lie in [1, 4]");
}

void SField::set(int i, int nu, int alpha, int p, int q, Expression e) {
  if (nu == alpha) throw PreconditionError("S is defined only for alpha != nu");
  if (p == q) throw PreconditionError("S is defined only for p != q");
  require_base_only(e, "S");
  S_(i, nu, alpha, q, p) = -e;
  S_(i, nu, alpha, p, q) = std::move(e);
}

CharacterizedSystem build_characterized_system(const GammaField& Gamma, const SField& S, const MetricField& h) {
  const int n = Gamma.n();
  const int m = S.m();
  if (S.n() != n) throw PreconditionError("Gamma and S have different spatial dimensions");
  if (h.kind() != MetricKind::temporal || h.dim() != m) throw PreconditionError("temporal metric dimension mismatch");
  const ExprArray H = christoffel_sym(h);

  CharacterizedSystem out{PdeSystem(m, n), 0.0, {}};
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a)
      for (int b = a; b < m; ++b) {
        std::vector<Expression> terms;
        for (int p = 0; p < n; ++p)
          for (int q = 0; q < n; ++q)
            if (!Gamma(i, p, q).is_zero()) terms.push_back(Gamma(i, p, q) * var_v(p, a) * var_v(q, b));
        for (int u = 0; u < m; ++u)
          if (!H(u, a, b).is_zero()) terms.push_back(-(H(u, a, b) * var_v(i, u)));
        if (a == b)
          for (int nu = 0; nu < m; ++nu) {
            if (nu == a) continue;
            for (int p = 0; p < n; ++p)
              for (int q = 0; q < n; ++q)
                if (p != q && !S(i, nu, a, p, q).is_zero())
                  terms.push_back(Expression(2.0) * S(i, nu, a, p, q) * var_v(p, a) * var_v(q, nu));
          }
        out.system.set(i, a, b, sum(terms));
      }

  if (m >= 2) {
    const PointSampler sampler(m, n, 0);
    for (int k = 0; k < 16; ++k)
      out.star_star_residual =
          std::max(out.star_star_residual, star_star_residual(S, h, sampler.point(static_cast<std::uint64_t>(k)).bindings()));
    if (out.star_star_residual > kStarStarTol)
      out.warnings.push_back("S does not satisfy (**): residual " + std::to_string(out.star_star_residual));
  }
  if (m < 3) out.warnings.push_back("m < 3: outside the dimension assumed by the characterization theorem");
  return out;
}

double StarStarNullSpace::residual(std::span<const double> s) const {
  const int k = static_cast<int>(unknowns.size());
  if (static_cast<int>(s.size()) != k) throw PreconditionError("S vector has the wrong length");
  double worst = 0.0;
  for (int r = 0; r < k; ++r) {
    double acc = 0.0;
    for (int c = 0; c < k; ++c) acc += matrix(r, c) * s[static_cast<size_t>(c)];
    worst = std::max(worst, std::abs(acc));
  }
  return worst;
}

StarStarNullSpace star_star_nullspace(const MetricField& h, const std::vector<double>& t, int m) {
  if (m < 2) throw PreconditionError("(**) needs m >= 2");
  if (h.kind() != MetricKind::temporal || h.dim() != m) throw PreconditionError("temporal metric dimension mismatch");
  if (static_cast<int>(t.size()) != m) throw PreconditionError("time point has the wrong dimension");
  Bindings b(m, 1);
  for (int a = 0; a < m; ++a) b.set(VariableId::t(a), t[static_cast<size_t>(a)]);
  const Eigen::MatrixXd hv = numeric_matrix(h.evaluate(b));

  StarStarNullSpace out;
  out.m = m;
  out.unknowns = star_star_unknowns(m);
  out.matrix = star_star_matrix(hv, out.unknowns);
  out.below_theorem_dimension = m < 3;
  const int k = static_cast<int>(out.unknowns.size());
  Eigen::MatrixXd A(k, k);
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < k; ++c) A(r, c) = out.matrix(r, c);
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd sv = svd.singularValues();
  out.singular_values.assign(sv.data(), sv.data() + sv.size());
  const double cutoff = kRankCutoff * (sv.size() > 0 ? sv(0) : 0.0);
  for (int c = 0; c < k; ++c)
    if (sv(c) <= cutoff) {
      const Eigen::VectorXd col = svd.matrixV().col(c);
      out.basis.emplace_back(col.data(), col.data() + col.size());
    }
  return out;
}

double star_star_residual(const SField& S, const MetricField& h, const Bindings& b) {
  const int m = S.m();
  const int n = S.n();
  if (m < 2) return 0.0;
  const Eigen::MatrixXd hv = numeric_matrix(h.evaluate(b));
  const auto unknowns = star_star_unknowns(m);
  const NumArray A = star_star_matrix(hv, unknowns);
  const NumArray Sv = evaluate(S.components(), b);
  const int k = static_cast<int>(unknowns.size());
  double worst = 0.0;
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < n; ++p)
      for (int q = 0; q < n; ++q) {
        if (p == q) continue;
        for (int r = 0; r < k; ++r) {
          double acc = 0.0;
          for (int c = 0; c < k; ++c) {
            const auto [nu, alpha] = unknowns[static_cast<size_t>(c)];
            acc += A(r, c) * Sv(i, nu, alpha, p, q);
          }
          worst = std::max(worst, std::abs(acc));
        }
      }
  return worst;
}

QuadraticDecomposition polarize(const PdeSystem& F, const std::vector<double>& t, const std::vector<double>& x) {
  const int m = F.m();
  const int n = F.n();
  const int q = n * m;
  const Bindings base = base_bindings(m, n, t, x);
  const CompiledArray compiled(F.components());
  auto at = [&](const std::vector<std::pair<int, double>>& v) {
    Bindings b = base;
    for (int k = 0; k < q; ++k) b.set(VariableId::v(k / m, k % m), 0.0);
    for (const auto& [k, s] : v) b.set(VariableId::v(k / m, k % m), b.get(VariableId::v(k / m, k % m)) + s);
    return compiled.evaluate(b);
  };

  QuadraticDecomposition out{NumArray({n, m, m, q, q}), NumArray({n, m, m, q}), at({})};
  std::vector<NumArray> plus, minus;
  for (int k = 0; k < q; ++k) {
    plus.push_back(at({{k, 1.0}}));
    minus.push_back(at({{k, -1.0}}));
  }
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) {
        const double c0 = out.constant(i, a, b);
        for (int k = 0; k < q; ++k) {
          out.linear(i, a, b, k) = 0.5 * (plus[static_cast<size_t>(k)](i, a, b) - minus[static_cast<size_t>(k)](i, a, b));
          out.quadratic(i, a, b, k, k) =
              0.5 * (plus[static_cast<size_t>(k)](i, a, b) + minus[static_cast<size_t>(k)](i, a, b)) - c0;
        }
      }
  for (int k = 0; k < q; ++k)
    for (int l = k + 1; l < q; ++l) {
      const NumArray both = at({{k, 1.0}, {l, 1.0}});
      for (int i = 0; i < n; ++i)
        for (int a = 0; a < m; ++a)
          for (int b = 0; b < m; ++b) {
            // F(e_k + e_l) = Q_kk + Q_ll + 2 Q_kl + L_k + L_l + C
            const double value = 0.5 * (both(i, a, b) - plus[static_cast<size_t>(k)](i, a, b) -
                                        plus[static_cast<size_t>(l)](i, a, b) + out.constant(i, a, b));
            out.quadratic(i, a, b, k, l) = value;
            out.quadratic(i, a, b, l, k) = value;
          }
    }
  return out;
}

ExtractedStructure extract_structure(const PdeSystem& F, const MetricField& h, const std::vector<double>& t,
                                     const std::vector<double>& x, const ExtractOptions& options) {
  const int m = F.m();
  const int n = F.n();
  const int q = n * m;
  if (h.kind() != MetricKind::temporal || h.dim() != m) throw PreconditionError("temporal metric dimension mismatch");
  const Bindings base = base_bindings(m, n, t, x);
  h.evaluate(base);

  ExtractedStructure out;
  ExtractionDiagnostics& d = out.diagnostics;
  d.below_theorem_dimension = m < 3;

  // Probe points share the base (t, x).
  const PointSampler sampler(m, n, options.seed);
  std::vector<JetPoint> probes;
  for (int k = 0; k < options.probes; ++k) {
    JetPoint p = sampler.point(static_cast<std::uint64_t>(k));
    p.t() = t;
    p.x() = x;
    probes.push_back(std::move(p));
  }

  const KccInvariants inv(F, h);
  const ExprArray& D = inv.expressions(Invariant::D);
  const bool structurally_zero = std::all_of(D.flat().begin(), D.flat().end(), [](const Expression& e) { return e.is_zero(); });
  if (!structurally_zero)
    for (const JetPoint& p : probes) {
      const DTensorValue val = inv.evaluate(Invariant::D, p);
      for (double v : val.values.flat()) d.fifth_invariant = std::max(d.fifth_invariant, std::abs(v));
    }
  if (d.fifth_invariant > kFifthInvariantTol)
    throw ExtractionError(ExtractionError::Reason::not_quadratic,
                          "the fifth invariant does not vanish (max " + std::to_string(d.fifth_invariant) +
                              "): F is not quadratic in the velocities",
                          d);
  for (const JetPoint& p : probes) {
    const DTensorValue val = inv.evaluate(Invariant::eps, p);
    for (double v : val.values.flat()) d.first_invariant = std::max(d.first_invariant, std::abs(v));
  }
  if (options.check_first_invariant && d.first_invariant > kFirstInvariantTol)
    throw ExtractionError(ExtractionError::Reason::first_invariant,
                          "the first invariant does not vanish (max " + std::to_string(d.first_invariant) + ")", d);

  out.parts = polarize(F, t, x);
  const QuadraticDecomposition& P = out.parts;
  double scale = 1.0;
  for (double v : P.quadratic.flat()) scale = std::max(scale, std::abs(v));

  // Symmetry conditions in (a, b).
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) {
        d.symmetry_residual = std::max(d.symmetry_residual, std::abs(P.constant(i, a, b) - P.constant(i, b, a)));
        for (int k = 0; k < q; ++k) {
          d.symmetry_residual = std::max(d.symmetry_residual, std::abs(P.linear(i, a, b, k) - P.linear(i, b, a, k)));
          for (int l = 0; l < q; ++l)
            d.symmetry_residual =
                std::max(d.symmetry_residual, std::abs(P.quadratic(i, a, b, k, l) - P.quadratic(i, b, a, k, l)));
        }
      }

  // Gamma from the (a, a) diagonal pairs of F_aa; S from the mixed pairs.
  out.Gamma = NumArray({n, n, n});
  out.S = NumArray({n, m, m, n, n});
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < n; ++p)
      for (int r = 0; r < n; ++r) {
        out.Gamma(i, p, r) = P.quadratic(i, 0, 0, p * m, r * m);
        for (int a = 1; a < m; ++a)
          d.gamma_spread =
              std::max(d.gamma_spread, std::abs(P.quadratic(i, a, a, p * m + a, r * m + a) - out.Gamma(i, p, r)));
        for (int a = 0; a < m; ++a)
          for (int nu = 0; nu < m; ++nu)
            if (nu != a && p != r) out.S(i, nu, a, p, r) = P.quadratic(i, a, a, p * m + a, r * m + nu);
      }
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a)
      for (int nu = 0; nu < m; ++nu) {
        if (nu == a) continue;
        for (int p = 0; p < n; ++p) {
          // S^nu_(a p p) must vanish and S must be antisymmetric in (p, q).
          d.symmetry_residual = std::max(d.symmetry_residual, std::abs(P.quadratic(i, a, a, p * m + a, p * m + nu)));
          for (int r = 0; r < n; ++r)
            if (p != r)
              d.symmetry_residual = std::max(d.symmetry_residual, std::abs(out.S(i, nu, a, p, r) + out.S(i, nu, a, r, p)));
        }
      }
  if (d.symmetry_residual > kStructureTol * scale || d.gamma_spread > kStructureTol * scale)
    throw ExtractionError(ExtractionError::Reason::symmetry,
                          "symmetry conditions fail (residual " + std::to_string(std::max(d.symmetry_residual, d.gamma_spread)) +
                              ")",
                          d);

  // U = -H delta and V = 0.
  const NumArray H = evaluate(christoffel_sym(h), base);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) {
        d.constant_residual = std::max(d.constant_residual, std::abs(P.constant(i, a, b)));
        for (int k = 0; k < q; ++k) {
          const int r = k / m, u = k % m;
          const double expected = r == i ? -H(u, a, b) : 0.0;
          d.linear_residual = std::max(d.linear_residual, std::abs(P.linear(i, a, b, k) - expected));
        }
      }
  if (d.linear_residual > kStructureTol * scale)
    throw ExtractionError(ExtractionError::Reason::linear_part,
                          "linear part differs from -H delta (residual " + std::to_string(d.linear_residual) + ")", d);
  if (d.constant_residual > kStructureTol * scale)
    throw ExtractionError(ExtractionError::Reason::constant_part,
                          "constant part does not vanish (residual " + std::to_string(d.constant_residual) + ")", d);

  // Rebuild from the extracted values and compare at the probe velocities.
  const CompiledArray compiled(F.components());
  for (const JetPoint& p : probes) {
    const NumArray given = compiled.evaluate(p.bindings());
    const NumArray& v = p.v();
    double fscale = 1e-12;
    for (double g : given.flat()) fscale = std::max(fscale, std::abs(g));
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) {
          double f = 0.0;
          for (int p1 = 0; p1 < n; ++p1)
            for (int p2 = 0; p2 < n; ++p2) f += out.Gamma(i, p1, p2) * v(p1, a) * v(p2, b);
          for (int u = 0; u < m; ++u) f -= H(u, a, b) * v(i, u);
          if (a == b)
            for (int nu = 0; nu < m; ++nu)
              if (nu != a)
                for (int p1 = 0; p1 < n; ++p1)
                  for (int p2 = 0; p2 < n; ++p2)
                    if (p1 != p2) f += 2.0 * out.S(i, nu, a, p1, p2) * v(p1, a) * v(p2, nu);
          d.reconstruction_residual = std::max(d.reconstruction_residual, std::abs(f - given(i, a, b)) / fscale);
        }
  }
  if (d.reconstruction_residual > kStructureTol)
    throw ExtractionError(ExtractionError::Reason::reconstruction,
                          "rebuilt system differs from F (relative " + std::to_string(d.reconstruction_residual) + ")",
                          d);
  return out;
}

}  // namespace jetkcc
