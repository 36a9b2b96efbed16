#pragma once

#include <numbers>

#include "plslam/pose.h"
#include "plslam/types.h"

namespace plslam {

/// Plücker line (n, d): n is the normal of the plane through the origin and
/// the line, d the direction. Homogeneous: (k n, k d) is the same line.
struct PluckerLine {
  Vec3 n = Vec3::Zero();
  Vec3 d = Vec3::Zero();

  /// |n.d| / (|n||d|); zero for a valid line.
  double KleinResidual() const;
  /// Distance from the origin to the line, |n| / |d|.
  double OriginDistance() const { return n.norm() / d.norm(); }
  /// True when (n, d) describes the same line as `other` up to positive or
  /// negative scale, within `cos_tolerance` on both component directions.
  bool SameLine(const PluckerLine& other, double cos_tolerance = 1e-9) const;
  /// Point on the line closest to the origin.
  Vec3 ClosestPointToOrigin() const { return d.cross(n) / d.squaredNorm(); }
  /// Distance of point p from the line.
  double DistanceToPoint(const Vec3& p) const;
};

/// Minimal 4-DoF line: U = EulerZYXToRotation(psi), W = [[cos phi, -sin phi],
/// [sin phi, cos phi]] with cos(phi) ∝ |n|, sin(phi) ∝ |d|.
struct OrthonormalLine {
  Vec3 psi = Vec3::Zero();
  double phi = 0.0;

  Mat3 U() const { return EulerZYXToRotation(psi); }
};

/// Local increment of an OrthonormalLine.
struct LineUpdate {
  Vec3 delta_psi = Vec3::Zero();
  double delta_phi = 0.0;

  LineUpdate operator-() const { return {-delta_psi, -delta_phi}; }
};

PluckerLine PluckerFromTwoPoints(const Vec3& p, const Vec3& q, double eps_point = 1e-9);

/// QR-style decomposition [n d] = U * [[|n|,0],[0,|d|],[0,0]].
/// Throws kZeroLine when d vanishes and kNearOriginLine when |n|/|d| < eps.
OrthonormalLine PluckerToOrthonormal(const PluckerLine& line, double eps = 1e-9);

/// Returns the unit representative |n|^2 + |d|^2 = 1. At phi = 0 the result
/// has d = 0, i.e. the line at infinity.
PluckerLine OrthonormalToPlucker(const OrthonormalLine& line);

inline bool IsAtInfinity(const OrthonormalLine& line) { return line.phi <= 0.0; }

/// Rigid motion of a line: every point x of `line` maps to R x + t.
PluckerLine TransformLine(const PluckerLine& line, const CameraPose& motion);

/// Retraction U' = U Exp(delta_psi), phi' = phi + delta_phi. A phi leaving
/// [0, pi/2] is folded back by negating two columns of U', so the update passes
/// smoothly through the line at infinity and through the origin.
OrthonormalLine ApplyUpdate(const OrthonormalLine& line, const LineUpdate& update);

// Templated pieces shared with the residual functors. `u` is the line's U
// matrix already perturbed.
template <typename T>
void PluckerFromFrame(const Eigen::Matrix<T, 3, 3>& u, const T& phi,
                      Eigen::Matrix<T, 3, 1>* n, Eigen::Matrix<T, 3, 1>* d) {
  using std::cos;
  using std::sin;
  *n = cos(phi) * u.col(0);
  *d = sin(phi) * u.col(1);
}

}  // namespace plslam
