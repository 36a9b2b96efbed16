#include "plslam/line_geometry.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "plslam/error.h"

namespace plslam {

double PluckerLine::KleinResidual() const {
  const double scale = n.norm() * d.norm();
  if (scale == 0.0) return 0.0;
  return std::abs(n.dot(d)) / scale;
}

bool PluckerLine::SameLine(const PluckerLine& other, double cos_tolerance) const {
  // Compare the stacked 6-vectors: equal up to scale iff |cos| ~ 1.
  Eigen::Matrix<double, 6, 1> a, b;
  a << n, d;
  b << other.n, other.d;
  const double denom = a.norm() * b.norm();
  if (denom == 0.0) return false;
  return std::abs(a.dot(b)) / denom >= 1.0 - cos_tolerance;
}

double PluckerLine::DistanceToPoint(const Vec3& p) const {
  // n' = p x d - n is zero iff p lies on the line; |n'| / |d| is the distance.
  return (p.cross(d) - n).norm() / d.norm();
}

PluckerLine PluckerFromTwoPoints(const Vec3& p, const Vec3& q, double eps_point) {
  if ((q - p).norm() <= eps_point) {
    throw Error(ErrorCode::kCoincidentPoints, "points defining the line coincide");
  }
  return {p.cross(q), q - p};
}

OrthonormalLine PluckerToOrthonormal(const PluckerLine& line, double eps) {
  const double n_norm = line.n.norm();
  const double d_norm = line.d.norm();
  if (d_norm == 0.0 || !std::isfinite(n_norm) || !std::isfinite(d_norm)) {
    throw Error(ErrorCode::kZeroLine, "line direction vanishes");
  }
  if (n_norm < eps * d_norm) {
    throw Error(ErrorCode::kNearOriginLine, "line passes through the origin");
  }
  Mat3 u;
  u.col(0) = line.n / n_norm;
  // Gram-Schmidt absorbs round-off in the Klein constraint.
  Vec3 dir = line.d / d_norm;
  dir -= u.col(0).dot(dir) * u.col(0);
  u.col(1) = dir.normalized();
  u.col(2) = u.col(0).cross(u.col(1));

  OrthonormalLine out;
  out.psi = RotationToEulerZYX(u);
  out.phi = std::atan2(d_norm, n_norm);
  return out;
}

PluckerLine OrthonormalToPlucker(const OrthonormalLine& line) {
  PluckerLine out;
  PluckerFromFrame<double>(line.U(), line.phi, &out.n, &out.d);
  return out;
}

PluckerLine TransformLine(const PluckerLine& line, const CameraPose& motion) {
  const Vec3 rd = motion.rotation * line.d;
  return {motion.rotation * line.n + motion.translation.cross(rd), rd};
}

OrthonormalLine ApplyUpdate(const OrthonormalLine& line, const LineUpdate& update) {
  constexpr double kPi = std::numbers::pi;
  Mat3 u = line.U();
  bool rotated = !update.delta_psi.isZero(0.0);
  if (rotated) u = u * ExpSO3<double>(update.delta_psi);

  // Fold phi back into [0, pi/2] by flipping frame columns; (n, d) is unchanged.
  double phi = std::remainder(line.phi + update.delta_phi, 2.0 * kPi);
  if (phi < 0.0) {
    phi = -phi;
    u.col(1) = -u.col(1);
    u.col(2) = -u.col(2);
    rotated = true;
  }
  if (phi > kPi / 2.0) {
    phi = kPi - phi;
    u.col(0) = -u.col(0);
    u.col(2) = -u.col(2);
    rotated = true;
  }

  OrthonormalLine out;
  out.psi = rotated ? RotationToEulerZYX(u) : line.psi;
  out.phi = phi;
  return out;
}

}  // namespace plslam
