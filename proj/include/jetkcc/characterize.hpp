#pragma once

// Systems whose first and fifth invariants vanish: construction from
// (Gamma, S, h), the homogeneous constraints on S, and pointwise extraction
// of (Gamma, S) from a given system.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "jetkcc/jetgeom.hpp"

namespace jetkcc {

/// Gamma^i_pq(t, x), shape (n, n, n), symmetric in (p, q).
class GammaField {
 public:
  explicit GammaField(ExprArray components);
  static GammaField zero(int n);
  /// Christoffel symbols of a spatial metric.
  static GammaField christoffel(const MetricField& phi);

  int n() const { return G_.shape()[0]; }
  const Expression& operator()(int i, int p, int q) const { return G_(i, p, q); }
  const ExprArray& components() const { return G_; }

 private:
  ExprArray G_;
};

/// S^(i nu)_(alpha p q)(t, x), stored as S(i, nu, alpha, p, q), shape
/// (n, m, m, n, n). Entries with nu == alpha or p == q are zero and
/// S(i, nu, alpha, p, q) = -S(i, nu, alpha, q, p).
class SField {
 public:
  SField(int m, int n);

  int m() const { return S_.shape()[1]; }
  int n() const { return S_.shape()[0]; }
  /// Sets the (p, q) entry and its negated (q, p) mirror.
  void set(int i, int nu, int alpha, int p, int q, Expression e);
  const Expression& operator()(int i, int nu, int alpha, int p, int q) const { return S_(i, nu, alpha, p, q); }
  const ExprArray& components() const { return S_; }

 private:
  ExprArray S_;
};

/// Residual above which build_characterized_system warns.
inline constexpr double kStarStarTol = 1e-9;

struct CharacterizedSystem {
  PdeSystem system;
  /// Largest residual of (**) over sampled times.
  double star_star_residual = 0.0;
  std::vector<std::string> warnings;
};

/// F^(i)_(a)b = Gamma^i_pq x^p_a x^q_b - H^u_ab x^i_u
///              + 2 delta_ab sum_{nu != a} sum_{p != q} S^(i nu)_(a p q) x^p_a x^q_nu.
CharacterizedSystem build_characterized_system(const GammaField& Gamma, const SField& S, const MetricField& h);

/// The linear system (**) for the unknowns S^nu_alpha (alpha != nu) at fixed
/// (i, p, q), and its numeric null space.
struct StarStarNullSpace {
  int m = 0;
  /// Unknown k is S^nu_alpha with (nu, alpha) = unknowns[k]; equation k is
  /// the one indexed by the same (nu, alpha).
  std::vector<std::pair<int, int>> unknowns;
  NumArray matrix;
  std::vector<double> singular_values;
  /// Orthonormal basis vectors of the null space.
  std::vector<std::vector<double>> basis;
  /// Set for m = 2, outside the theorem's m >= 3 hypothesis.
  bool below_theorem_dimension = false;

  int dimension() const { return static_cast<int>(basis.size()); }
  /// max |A s|.
  double residual(std::span<const double> s) const;
};

/// Relative singular-value cutoff of the null-space computation.
inline constexpr double kRankCutoff = 1e-10;

/// Reads h^ee and h^nn in (**) as diagonal entries of the inverse metric.
/// Throws DegenerateError for singular h at t.
StarStarNullSpace star_star_nullspace(const MetricField& h, const std::vector<double>& t, int m);

/// Largest (**) residual of S over all (i, p, q) at the point `b`.
double star_star_residual(const SField& S, const MetricField& h, const Bindings& b);

/// F(t, x, v) = Q(v, v) + L(v) + C at a fixed (t, x), recovered by polarization.
/// Velocity slot k = p * m + u stands for x^p_u.
struct QuadraticDecomposition {
  NumArray quadratic;  // (n, m, m, n*m, n*m), symmetric in the last two slots
  NumArray linear;     // (n, m, m, n*m)
  NumArray constant;   // (n, m, m)
};
QuadraticDecomposition polarize(const PdeSystem& F, const std::vector<double>& t, const std::vector<double>& x);

struct ExtractionDiagnostics {
  double fifth_invariant = 0.0;        // max |D| at probe points
  double first_invariant = 0.0;        // max |eps| at probe points
  double symmetry_residual = 0.0;      // (a, b) symmetry and S antisymmetry
  double gamma_spread = 0.0;           // Gamma read from different F_aa
  double linear_residual = 0.0;        // max |U + H delta|
  double constant_residual = 0.0;      // max |V|
  double reconstruction_residual = 0.0;  // rebuilt vs given F, relative
  bool below_theorem_dimension = false;
};

struct ExtractedStructure {
  NumArray Gamma;  // (n, n, n)
  NumArray S;      // (n, m, m, n, n), same layout as SField
  QuadraticDecomposition parts;
  ExtractionDiagnostics diagnostics;
};

class ExtractionError : public PreconditionError {
 public:
  enum class Reason { not_quadratic, first_invariant, symmetry, linear_part, constant_part, reconstruction };
  ExtractionError(Reason reason, const std::string& message, ExtractionDiagnostics diagnostics)
      : PreconditionError(message), reason_(reason), diagnostics_(diagnostics) {}
  Reason reason() const { return reason_; }
  const ExtractionDiagnostics& diagnostics() const { return diagnostics_; }

 private:
  Reason reason_;
  ExtractionDiagnostics diagnostics_;
};

inline constexpr double kFifthInvariantTol = 1e-10;
inline constexpr double kFirstInvariantTol = 1e-8;
inline constexpr double kStructureTol = 1e-8;

struct ExtractOptions {
  /// Probe points: the base (t, x) with sampled velocities.
  int probes = 8;
  std::uint64_t seed = 0;
  /// Checking the first invariant can be switched off to extract from
  /// systems of the characterized form that only satisfy (**).
  bool check_first_invariant = true;
};

/// Reads Gamma and S at the base point (t, x). Throws ExtractionError when a
/// hypothesis or a consistency check fails.
ExtractedStructure extract_structure(const PdeSystem& F, const MetricField& h, const std::vector<double>& t,
                                     const std::vector<double>& x, const ExtractOptions& options = {});

}  // namespace jetkcc
