#pragma once

// Changes of jet coordinates t~ = t~(t), x~ = x~(x) and the induced action on
// jet points, metrics, second-order systems and d-tensors.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "jetkcc/jetgeom.hpp"
#include "jetkcc/kcc.hpp"
#include "jetkcc/sampling.hpp"

namespace jetkcc {

/// Threshold below which a coordinate Jacobian counts as singular.
inline constexpr double kSingularJacobianTol = 1e-10;
/// Round-trip tolerance for user-supplied inverse maps.
inline constexpr double kRoundTripTol = 1e-8;

/// Forward maps t~^a(t), x~^i(x) and their inverses t^a(t~), x^i(x~). Inverse
/// maps are written in the same variable names (`t1`, `x1`, ...), which then
/// stand for the new coordinates.
class CoordinateChange {
 public:
  CoordinateChange(int m, int n, std::vector<Expression> t_forward, std::vector<Expression> x_forward,
                   std::vector<Expression> t_inverse, std::vector<Expression> x_inverse);

  static CoordinateChange identity(int m, int n);
  static CoordinateChange parse(int m, int n, const std::vector<std::string>& t_forward,
                                const std::vector<std::string>& x_forward, const std::vector<std::string>& t_inverse,
                                const std::vector<std::string>& x_inverse);

  int m() const { return m_; }
  int n() const { return n_; }
  const std::vector<Expression>& t_forward() const { return t_fwd_; }
  const std::vector<Expression>& x_forward() const { return x_fwd_; }
  const std::vector<Expression>& t_inverse() const { return t_inv_; }
  const std::vector<Expression>& x_inverse() const { return x_inv_; }

  /// dt~^a/dt^b in old coordinates, shape (m, m).
  const ExprArray& dt_forward() const { return dt_fwd_; }
  /// dx~^i/dx^j in old coordinates, shape (n, n).
  const ExprArray& dx_forward() const { return dx_fwd_; }
  /// dt^a/dt~^b in new coordinates, shape (m, m).
  const ExprArray& dt_inverse() const { return dt_inv_; }
  /// dx^i/dx~^j in new coordinates, shape (n, n).
  const ExprArray& dx_inverse() const { return dx_inv_; }

  /// Swaps forward and inverse maps.
  CoordinateChange inverse() const;
  /// This change followed by `next`.
  CoordinateChange then(const CoordinateChange& next) const;

  std::vector<double> map_t(const std::vector<double>& t) const;
  std::vector<double> map_x(const std::vector<double>& x) const;
  std::vector<double> unmap_t(const std::vector<double>& t_new) const;
  std::vector<double> unmap_x(const std::vector<double>& x_new) const;

  /// Largest |inverse(forward(q)) - q| over `count` sampled points.
  double round_trip_error(const PointSampler& sampler, int count) const;
  /// Throws PreconditionError if the round trip exceeds kRoundTripTol and
  /// DegenerateError if a Jacobian is singular at a sampled point.
  void validate(const PointSampler& sampler, int count) const;

 private:
  int m_;
  int n_;
  std::vector<Expression> t_fwd_, x_fwd_, t_inv_, x_inv_;
  ExprArray dt_fwd_, dx_fwd_, dt_inv_, dx_inv_;
};

/// Numeric Jacobians at a point of the old chart.
struct ChangeJacobians {
  NumArray dt;      // dt~^a/dt^b
  NumArray dt_inv;  // dt^a/dt~^b, the matrix inverse of dt
  NumArray dx;      // dx~^i/dx^j
  NumArray dx_inv;  // dx^i/dx~^j, the matrix inverse of dx
};
/// Throws DegenerateError if |det| <= kSingularJacobianTol.
ChangeJacobians jacobians_at(const CoordinateChange& cc, const JetPoint& p);

/// v~^i_a = (dx~^i/dx^j)(dt^b/dt~^a) v^j_b.
JetPoint transform_jet_point(const CoordinateChange& cc, const JetPoint& p);

/// One Jacobian factor per slot: upper slots take the forward Jacobian, lower
/// slots the inverse. `p` is in the old chart.
DTensorValue transform_dtensor(const DTensorValue& val, const CoordinateChange& cc, const JetPoint& p);

/// The system and temporal metric written in the new chart.
struct PushedSystem {
  PdeSystem F;
  MetricField h;
};

/// F~^i_ab = (dx~^i/dx^k)(dt^g/dt~^a)(dt^n/dt~^b) F^k_gn
///           - (d2x~^i/dx^k dx^l) w^k_a w^l_b - (dx~^i/dx^k) x^k_g d2t^g/dt~^a dt~^b,
/// with w^k_a = (dx^k/dx~^s) x~^s_a, built symbolically in the new chart.
PushedSystem pushforward_system(const CoordinateChange& cc, const PdeSystem& F, const MetricField& h);
/// h~_ab = h_gn (dt^g/dt~^a)(dt^n/dt~^b) or the spatial analogue.
MetricField pushforward_metric(const CoordinateChange& cc, const MetricField& g);
/// x~(sigma(t(t~))).
SectionMap transform_section(const CoordinateChange& cc, const SectionMap& sigma);

/// The new velocities as functions of the old jet coordinates, shape (n, m).
ExprArray new_velocity_in_old(const CoordinateChange& cc);

// Right-hand sides of the defining transformation rules, evaluated at the old
// point p; the results are components in the new chart at cc(p).

/// 2H~ = 2H A B B - B d(v~)/dt.
NumArray temporal_semispray_rule(const CoordinateChange& cc, const ExprArray& H, const JetPoint& p);
/// 2G~ = 2G A B B - (dx/dx~) d(v~)/dx v~.
NumArray spatial_semispray_rule(const CoordinateChange& cc, const ExprArray& G, const JetPoint& p);
/// M~ = M A B B - B d(v~)/dt.
NumArray temporal_connection_rule(const CoordinateChange& cc, const ExprArray& M, const JetPoint& p);
/// N~ = N A B (dx/dx~) - (dx/dx~) d(v~)/dx.
NumArray spatial_connection_rule(const CoordinateChange& cc, const ExprArray& N, const JetPoint& p);
/// F~ = c F A B B - B d(v~)/dt - (dx/dx~) d(v~)/dx v~ with F-coefficient c.
NumArray system_rule(const CoordinateChange& cc, const PdeSystem& F, const JetPoint& p, double coefficient = 1.0);

/// Components whose two values are both at most this size count as agreeing
/// zeros in invariance checks.
inline constexpr double kVanishTol = 1e-9;
/// Absolute floor of the relative deviation denominator.
inline constexpr double kDeviationFloor = 1e-12;

/// |a - b| / max(|a|, |b|, 1e-12), or 0 when both are within kVanishTol.
double relative_deviation(double a, double b);
/// Largest relative_deviation over matching components.
double max_relative_deviation(const NumArray& a, const NumArray& b);

struct InvarianceEntry {
  Invariant which;
  double max_deviation = 0.0;
  double max_abs_difference = 0.0;
  std::uint64_t worst_point = 0;
};

struct InvarianceReport {
  std::vector<InvarianceEntry> entries;
  int points = 0;
  double max_deviation() const;
};

/// Evaluates each selected invariant at sampled old points, transforms it,
/// and compares with the invariant of the pushed-forward system at cc(p).
InvarianceReport check_invariance(const KccInvariants& original, const KccInvariants& pushed,
                                  const CoordinateChange& cc, const PointSampler& sampler, int count,
                                  std::span<const Invariant> which);
InvarianceReport check_invariance(const PdeSystem& F, const MetricField& h, const CoordinateChange& cc,
                                  const PointSampler& sampler, int count, std::span<const Invariant> which);

}  // namespace jetkcc
