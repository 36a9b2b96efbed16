#pragma once

#include "plslam/line_geometry.h"
#include "plslam/pose.h"
#include "plslam/types.h"

namespace plslam {

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  // Image size in pixels; bounds the visible normalized-plane domain.
  int width = 0;
  int height = 0;

  bool IsValid() const { return fx > 0.0 && fy > 0.0; }

  // Normalized image plane rectangle covered by the sensor.
  Vec2 NormalizedMin() const { return {-cx / fx, -cy / fy}; }
  Vec2 NormalizedMax() const { return {(width - cx) / fx, (height - cy) / fy}; }
  bool InImage(const Vec2& normalized) const;

  // Segment length in pixels for endpoints given in normalized coordinates.
  double PixelLength(const Vec2& a, const Vec2& b) const;

  // Line-projection matrix acting on camera-frame Plücker normals.
  Mat3 LineProjectionMatrix() const;
};

/// One detected 2D segment; endpoints on the normalized image plane (z = 1).
struct LineObservation {
  Vec3 s = Vec3::UnitZ();
  Vec3 e = Vec3::UnitZ();
  FeatureId feature_id = kInvalidFeature;
  FrameId frame_id = 0;

  Vec2 s2() const { return s.head<2>(); }
  Vec2 e2() const { return e.head<2>(); }
  Vec2 midpoint() const { return 0.5 * (s2() + e2()); }
  double length() const { return (e2() - s2()).norm(); }
  // Homogeneous image line through both endpoints.
  Vec3 line() const { return s.cross(e); }

  static LineObservation FromPoints(const Vec2& s, const Vec2& e, FeatureId id = kInvalidFeature,
                                    FrameId frame = 0);
};

struct PointObservation {
  Vec2 uv = Vec2::Zero();  // normalized image coordinates
  FeatureId feature_id = kInvalidFeature;
  FrameId frame_id = 0;
};

/// Homogeneous plane pi = (pi_x, pi_y, pi_z, pi_w).
struct PlaneVector {
  Vec4 pi = Vec4::Zero();

  Vec3 normal() const { return pi.head<3>(); }
};

struct TriangulationOptions {
  double eps_baseline = 1e-6;         // m
  double eps_parallel_planes = 1e-6;  // |d| / (|pi0_xyz| |pi1_xyz|)
};

/// Epipole of camera i expressed in camera j coordinates,
/// R_j^T (t_i - t_j). Throws kZeroBaseline when the centers coincide.
Vec3 ComputeEpipole(const CameraPose& pose_i, const CameraPose& pose_j,
                    double eps_baseline = 1e-6);

/// World-frame plane through the camera center and the observed segment.
PlaneVector PlaneFromObservation(const LineObservation& obs, const CameraPose& pose);

/// Intersects the two back-projected planes with the dual Plücker matrix.
/// The result is in world coordinates and signed so that its camera-i
/// normal agrees with s_i x e_i.
PluckerLine TriangulateLine(const LineObservation& obs_i, const CameraPose& pose_i,
                            const LineObservation& obs_j, const CameraPose& pose_j,
                            const TriangulationOptions& options = {});

/// Expresses a world line in the camera frame of `pose` (world-from-camera).
PluckerLine WorldLineToCamera(const PluckerLine& line_world, const CameraPose& pose);

/// Image line l = K_line n^c. Throws kUnobservableLine if the line passes
/// through the camera center.
Vec3 ProjectLine(const PluckerLine& line_world, const CameraPose& pose,
                 const CameraIntrinsics& intrinsics);

/// Signed distance p^T l / sqrt(l1^2 + l2^2).
double PointLineDistance(const Vec3& p, const Vec3& l);

/// Midpoint triangulation of two bearing rays; returns the depth of the point
/// along the first ray (in camera-i z units). NaN when the rays are parallel.
double TriangulatePointDepth(const Vec2& uv_i, const CameraPose& pose_i, const Vec2& uv_j,
                             const CameraPose& pose_j);

}  // namespace plslam
