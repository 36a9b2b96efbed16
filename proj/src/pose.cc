#include "plslam/pose.h"

#include <algorithm>

#include <Eigen/Geometry>
#include <Eigen/SVD>

namespace plslam {

double RotationAngle(const Mat3& r) {
  // atan2 form stays accurate near 0 and pi, unlike acos((tr - 1) / 2).
  const Vec3 axis_scaled(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return std::atan2(0.5 * axis_scaled.norm(), 0.5 * (r.trace() - 1.0));
}

Mat3 RotationZ(double angle) {
  return Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
}

Mat3 EulerZYXToRotation(const Vec3& psi) {
  return (Eigen::AngleAxisd(psi[0], Vec3::UnitZ()) *
          Eigen::AngleAxisd(psi[1], Vec3::UnitY()) *
          Eigen::AngleAxisd(psi[2], Vec3::UnitX()))
      .toRotationMatrix();
}

Vec3 RotationToEulerZYX(const Mat3& r) {
  const double cos_pitch = std::hypot(r(0, 0), r(1, 0));
  const double pitch = std::atan2(-r(2, 0), cos_pitch);
  if (cos_pitch > 1e-12) {
    return {std::atan2(r(1, 0), r(0, 0)), pitch, std::atan2(r(2, 1), r(2, 2))};
  }
  // Gimbal lock: only yaw - roll (or yaw + roll) is defined; put it all in roll.
  return {0.0, pitch, std::atan2(-r(1, 2), r(1, 1))};
}

Mat3 Orthonormalize(const Mat3& r) {
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 result = svd.matrixU() * svd.matrixV().transpose();
  if (result.determinant() < 0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    result = u * svd.matrixV().transpose();
  }
  return result;
}

CameraPose CameraPose::Inverse() const {
  CameraPose inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

CameraPose CameraPose::Retract(const Eigen::Matrix<double, 6, 1>& delta) const {
  CameraPose out;
  out.translation = translation + delta.head<3>();
  out.rotation = rotation * ExpSO3<double>(delta.tail<3>());
  return out;
}

bool CameraPose::IsValid(double tolerance) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho < tolerance && std::abs(rotation.determinant() - 1.0) < tolerance;
}

CameraPose operator*(const CameraPose& a, const CameraPose& b) {
  CameraPose out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

double Baseline(const CameraPose& a, const CameraPose& b) {
  return (a.translation - b.translation).norm();
}

}  // namespace plslam
