#pragma once

// Semisprays and nonlinear connections attached to a second-order system,
// the five multi-time h-KCC invariants, covariant derivatives along a
// section and the variational/Jacobi residuals.

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "jetkcc/jetgeom.hpp"

namespace jetkcc {

/// H(i, a, b) = H^(i)_(a)b.
struct TemporalSemispray {
  ExprArray H;
};
/// G(i, a, b) = G^(i)_(a)b.
struct SpatialSemispray {
  ExprArray G;
};
/// M(i, a, b) = M^(i)_(a)b and N(i, a, j) = N^(i)_(a)j.
struct NonlinearConnection {
  ExprArray M;
  ExprArray N;
};

/// Theorem 1 correspondence: M = 2H and back.
ExprArray temporal_connection_from_semispray(const TemporalSemispray& H);
TemporalSemispray temporal_semispray_from_connection(const ExprArray& M);

/// G = F/2 + H^m_ab x^i_m / 2.
SpatialSemispray spatial_semispray_from_F(const PdeSystem& F, const MetricField& h);
/// N^(i)_(a)j = (h^mn / 2) dF^(i)_(m)n/dx^j_g h_ga + (h^mn / 2) H^g_mn h_ga delta^i_j.
ExprArray connection_from_F(const PdeSystem& F, const MetricField& h);
/// N^(i)_(a)j = h^mn dG^(i)_(m)n/dx^j_g h_ga.
ExprArray connection_from_semispray(const SpatialSemispray& G, const MetricField& h);
/// G^(i)_(a)b = N^(i)_(a)r x^r_b / 2.
SpatialSemispray semispray_from_connection(const ExprArray& N);

/// h-traces F^i = h^ab F^(i)_(a)b and H^g = h^mn H^g_mn.
struct HTraces {
  std::vector<Expression> F;
  std::vector<Expression> H;
};
HTraces h_traces(const PdeSystem& F, const MetricField& h);

enum class Invariant { eps, P, R, B, D };
const char* invariant_name(Invariant which);
std::optional<Invariant> invariant_from_name(const std::string& name);
inline constexpr Invariant kAllInvariants[] = {Invariant::eps, Invariant::P, Invariant::R, Invariant::B,
                                               Invariant::D};

/// Index layouts of the evaluated invariants:
///   eps(i, a, b)                     = eps^(i)_(a)b
///   P(i, j)                          = P^i_j
///   R(i, a, j, k)                    = R^ia_jk
///   B(i, a, b, j, k, l)              = B^ia(b)_jk(l)
///   D(i, a, b, j, g, k, e, l, m)     = d3 F^(i)_(a)b / dx^j_g dx^k_e dx^l_m
IndexSignature invariant_signature(Invariant which);

/// The five invariants of a system, built symbolically on first use and
/// cached. Safe to share between threads.
class KccInvariants {
 public:
  KccInvariants(PdeSystem F, MetricField h);
  KccInvariants(const KccInvariants&) = delete;
  KccInvariants& operator=(const KccInvariants&) = delete;

  int m() const { return F_.m(); }
  int n() const { return F_.n(); }
  const PdeSystem& system() const { return F_; }
  const MetricField& metric() const { return h_; }
  const MetricGeometry& temporal_geometry() const { return geo_; }
  const HTraces& traces() const { return traces_; }

  /// N^(i)_(a)j, shape (n, m, n).
  const ExprArray& connection() const { return N_; }
  /// dF^i/dx^j_g, shape (n, n, m).
  const ExprArray& trace_velocity_derivative() const { return dFv_; }

  const ExprArray& expressions(Invariant which) const;
  DTensorValue evaluate(Invariant which, const JetPoint& p) const;

 private:
  struct Slot {
    std::optional<ExprArray> expr;
    std::optional<CompiledArray> compiled;
  };
  const ExprArray& build_locked(Invariant which) const;
  ExprArray build_eps() const;
  ExprArray build_P() const;
  ExprArray build_R() const;
  ExprArray build_B() const;
  ExprArray build_D() const;

  PdeSystem F_;
  MetricField h_;
  MetricGeometry geo_;
  HTraces traces_;
  ExprArray dFv_;
  ExprArray N_;

  mutable std::mutex mu_;
  mutable Slot slots_[5];
  mutable DerivativeCache diff_;
};

/// A map x^i(t), or a variation xi^i(t); components depend on t only.
class SectionMap {
 public:
  explicit SectionMap(std::vector<Expression> components);
  int n() const { return static_cast<int>(x_.size()); }
  const Expression& operator[](int i) const { return x_[static_cast<std::size_t>(i)]; }
  const std::vector<Expression>& components() const { return x_; }

 private:
  std::vector<Expression> x_;
};
using VariationField = SectionMap;

/// Substitution (x, v) -> (sigma(t), d sigma/dt) for an m-dimensional domain.
class Prolongation {
 public:
  Prolongation(const SectionMap& sigma, int m);
  /// E(t, x, v) composed with the prolonged section; depends on t only.
  Expression compose(const Expression& e) const;
  /// The jet point over t.
  JetPoint point(const std::vector<double>& t) const;

 private:
  int m_;
  int n_;
  std::vector<Expression> x_;
  std::vector<Expression> v_;  // v_[i * m + a]
  Substitution sub_{};
};

/// d2 sigma^i/dt^a dt^b + F^(i)_(a)b along the prolongation, shape (n, m, m).
NumArray sode_residual(const PdeSystem& F, const SectionMap& sigma, const std::vector<double>& t);

/// nabla T^(i)_(a) / dt^b along sigma, shape (n, m, m). `T` has shape (n, m)
/// and may depend on (t, x, v); d/dt^b is the total derivative along the
/// prolongation.
NumArray covariant_derivative_section(const ExprArray& T, const KccInvariants& inv, const SectionMap& sigma,
                                      const std::vector<double>& t);

/// nabla xi^i / dt^a along sigma, shape (n, m).
NumArray covariant_derivative_variation(const VariationField& xi, const KccInvariants& inv, const SectionMap& sigma,
                                        const std::vector<double>& t);

/// Left-hand side of the variational equations, shape (n, m, m).
NumArray variational_residual(const PdeSystem& F, const SectionMap& sigma, const VariationField& xi,
                              const std::vector<double>& t);
/// Left-hand side of the h-trace variational equations, length n.
std::vector<double> h_trace_variational_residual(const PdeSystem& F, const MetricField& h, const SectionMap& sigma,
                                                 const VariationField& xi, const std::vector<double>& t);

/// Solution tolerance required by jacobi_identity_residual.
inline constexpr double kSolutionTol = 1e-8;

/// h^ab nabla_b [nabla_a xi^i] - P^i_r xi^r along sigma, length n. Second
/// derivatives of the velocities are replaced by -F. Throws
/// PreconditionError when sigma is not a solution to within kSolutionTol.
std::vector<double> jacobi_identity_residual(const KccInvariants& inv, const SectionMap& sigma,
                                             const VariationField& xi, const std::vector<double>& t);

}  // namespace jetkcc
