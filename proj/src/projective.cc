#include "plslam/projective.h"

#include <cmath>
#include <limits>

#include "plslam/error.h"

namespace plslam {

bool CameraIntrinsics::InImage(const Vec2& normalized) const {
  const Vec2 lo = NormalizedMin();
  const Vec2 hi = NormalizedMax();
  return normalized.x() >= lo.x() && normalized.x() <= hi.x() && normalized.y() >= lo.y() &&
         normalized.y() <= hi.y();
}

double CameraIntrinsics::PixelLength(const Vec2& a, const Vec2& b) const {
  const Vec2 delta = b - a;
  return std::hypot(fx * delta.x(), fy * delta.y());
}

Mat3 CameraIntrinsics::LineProjectionMatrix() const {
  Mat3 k;
  k << fy, 0.0, 0.0,
       0.0, fx, 0.0,
       -fy * cx, -fx * cy, fx * fy;
  return k;
}

LineObservation LineObservation::FromPoints(const Vec2& s, const Vec2& e, FeatureId id,
                                            FrameId frame) {
  LineObservation obs;
  obs.s = s.homogeneous();
  obs.e = e.homogeneous();
  obs.feature_id = id;
  obs.frame_id = frame;
  return obs;
}

Vec3 ComputeEpipole(const CameraPose& pose_i, const CameraPose& pose_j, double eps_baseline) {
  const Vec3 delta = pose_i.translation - pose_j.translation;
  if (delta.norm() < eps_baseline) {
    throw Error(ErrorCode::kZeroBaseline, "camera centers coincide");
  }
  return pose_j.rotation.transpose() * delta;
}

PlaneVector PlaneFromObservation(const LineObservation& obs, const CameraPose& pose) {
  const Vec3 normal_cam = obs.s.cross(obs.e);
  if (normal_cam.norm() < 1e-12 * obs.s.norm() * obs.e.norm()) {
    throw Error(ErrorCode::kDegenerateSegment, "segment endpoints coincide");
  }
  const Vec3 normal_world = pose.rotation * normal_cam;
  PlaneVector plane;
  plane.pi << normal_world, -normal_world.dot(pose.center());
  return plane;
}

PluckerLine WorldLineToCamera(const PluckerLine& line_world, const CameraPose& pose) {
  return TransformLine(line_world, pose.Inverse());
}

PluckerLine TriangulateLine(const LineObservation& obs_i, const CameraPose& pose_i,
                            const LineObservation& obs_j, const CameraPose& pose_j,
                            const TriangulationOptions& options) {
  if (Baseline(pose_i, pose_j) < options.eps_baseline) {
    throw Error(ErrorCode::kZeroBaseline, "no parallax between the two views");
  }
  const Vec4 pi0 = PlaneFromObservation(obs_i, pose_i).pi;
  const Vec4 pi1 = PlaneFromObservation(obs_j, pose_j).pi;

  const Eigen::Matrix4d dual = pi0 * pi1.transpose() - pi1 * pi0.transpose();
  PluckerLine line;
  line.d = Vec3(dual(2, 1), dual(0, 2), dual(1, 0));
  line.n = dual.block<3, 1>(0, 3);

  const double ratio = line.d.norm() / (pi0.head<3>().norm() * pi1.head<3>().norm());
  if (!(ratio >= options.eps_parallel_planes)) {
    throw Error(ErrorCode::kDegenerateTriangulation,
                "back-projected planes coincide with the epipolar plane");
  }

  const Vec3 n_cam_i = WorldLineToCamera(line, pose_i).n;
  const Vec3 n_cam_j = WorldLineToCamera(line, pose_j).n;
  const double d_norm = line.d.norm();
  if (n_cam_i.norm() < 1e-9 * d_norm || n_cam_j.norm() < 1e-9 * d_norm) {
    throw Error(ErrorCode::kNearOriginLine, "triangulated line passes through a camera center");
  }
  // Canonical orientation: camera-i normal points along s_i x e_i.
  const double sign = n_cam_i.dot(obs_i.line()) < 0.0 ? -1.0 : 1.0;
  const double scale = sign / std::sqrt(line.n.squaredNorm() + line.d.squaredNorm());
  line.n *= scale;
  line.d *= scale;
  return line;
}

Vec3 ProjectLine(const PluckerLine& line_world, const CameraPose& pose,
                 const CameraIntrinsics& intrinsics) {
  const PluckerLine cam = WorldLineToCamera(line_world, pose);
  const double scale = cam.n.norm() + cam.d.norm();
  if (!(cam.n.norm() >= 1e-12 * scale) || scale == 0.0) {
    throw Error(ErrorCode::kUnobservableLine, "line passes through the camera center");
  }
  return intrinsics.LineProjectionMatrix() * cam.n;
}

double PointLineDistance(const Vec3& p, const Vec3& l) {
  return p.dot(l) / l.head<2>().norm();
}

double TriangulatePointDepth(const Vec2& uv_i, const CameraPose& pose_i, const Vec2& uv_j,
                             const CameraPose& pose_j) {
  const Vec3 b_i = pose_i.rotation * uv_i.homogeneous();
  const Vec3 b_j = pose_j.rotation * uv_j.homogeneous();
  Eigen::Matrix<double, 3, 2> a;
  a << b_i, -b_j;
  const Eigen::Matrix2d ata = a.transpose() * a;
  const double det = ata.determinant();
  if (std::abs(det) < 1e-12 * ata.trace() * ata.trace()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  const Eigen::Vector2d alpha = ata.inverse() * (a.transpose() * (pose_j.center() - pose_i.center()));
  return alpha[0];
}

}  // namespace plslam
