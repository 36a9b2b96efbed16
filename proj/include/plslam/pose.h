#pragma once

#include <cmath>

#include <Eigen/Core>
#include <ceres/rotation.h>

#include "plslam/types.h"

namespace plslam {

template <typename T>
Eigen::Matrix<T, 3, 3> Skew(const Eigen::Matrix<T, 3, 1>& v) {
  Eigen::Matrix<T, 3, 3> m;
  m << T(0), -v.z(), v.y(),
       v.z(), T(0), -v.x(),
       -v.y(), v.x(), T(0);
  return m;
}

// SO(3) exponential map; safe for automatic differentiation at zero.
template <typename T>
Eigen::Matrix<T, 3, 3> ExpSO3(const Eigen::Matrix<T, 3, 1>& omega) {
  Eigen::Matrix<T, 3, 3> r;
  ceres::AngleAxisToRotationMatrix(omega.data(), r.data());
  return r;
}

template <typename T>
Eigen::Matrix<T, 3, 1> LogSO3(const Eigen::Matrix<T, 3, 3>& r) {
  Eigen::Matrix<T, 3, 1> omega;
  ceres::RotationMatrixToAngleAxis(r.data(), omega.data());
  return omega;
}

// Geodesic angle of a rotation matrix, in [0, pi].
double RotationAngle(const Mat3& r);

// Intrinsic Z-Y-X Euler angles: R = Rz(psi[0]) * Ry(psi[1]) * Rx(psi[2]).
Mat3 EulerZYXToRotation(const Vec3& psi);
Vec3 RotationToEulerZYX(const Mat3& r);

Mat3 RotationZ(double angle);

// Projects a nearly orthogonal matrix onto SO(3).
Mat3 Orthonormalize(const Mat3& r);

// Rigid transform mapping camera coordinates to world coordinates
// (R^w_c, t^w_c). Also used as a generic rigid motion x' = R x + t.
struct CameraPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static CameraPose Identity() { return {}; }

  Vec3 center() const { return translation; }
  Vec3 Apply(const Vec3& x) const { return rotation * x + translation; }
  CameraPose Inverse() const;

  // Tangent layout is (delta_t, delta_theta): t + delta_t, R * Exp(delta_theta).
  CameraPose Retract(const Eigen::Matrix<double, 6, 1>& delta) const;

  bool IsValid(double tolerance = 1e-9) const;
};

// (a * b).Apply(x) == a.Apply(b.Apply(x)).
CameraPose operator*(const CameraPose& a, const CameraPose& b);

// Euclidean distance between the two camera centers.
double Baseline(const CameraPose& a, const CameraPose& b);

}  // namespace plslam
