#pragma once

#include <numbers>
#include <span>
#include <vector>

#include "plslam/pose.h"
#include "plslam/projective.h"
#include "plslam/types.h"

namespace plslam {

inline constexpr double kDegToRad = std::numbers::pi / 180.0;

struct DegeneracyConfig {
  // A segment is degenerate when its direction points at the epipole within
  // angle_threshold, or its infinite extension passes within dist_threshold
  // (normalized image units) of a finite epipole.
  double angle_threshold = 3.0 * kDegToRad;
  double dist_threshold = 0.02;
  // Relative rotation below which a frame pair counts as pure translation.
  double rot_threshold = 0.5 * kDegToRad;
  double eps_baseline = 1e-6;
  // Baseline directions closer than this are merged into one parallel group.
  double group_angle = 6.0 * kDegToRad;
  // Grouping also requires the image line to stay in place across the window
  // once rotation is removed (normalized image units). Under pure translation
  // a motion-parallel line projects to a fixed image line.
  double stationary_threshold = 0.005;
};

struct DegeneracyVerdict {
  FeatureId feature_id = kInvalidFeature;
  bool degenerate = false;
  double epipole_distance = 0.0;  // normalized image units; +inf for an epipole at infinity
  double alignment_angle = 0.0;   // rad, in [0, pi/2]
  // The finite epipole projects strictly inside the segment. A line parallel
  // to the motion ends short of its vanishing point, so such a segment
  // belongs to a line crossing the motion axis instead.
  bool straddles_epipole = false;
  // See ImageLineDrift; zero when not measured.
  double image_drift = 0.0;
  // World-frame motion direction the verdict was computed against, sign
  // canonicalized; zero when no baseline exists.
  Vec3 baseline_dir = Vec3::Zero();
};

struct ParallelGroup {
  std::vector<FeatureId> member_ids;  // sorted, unique
  Vec3 baseline_dir = Vec3::Zero();
};

bool IsPureTranslation(const CameraPose& pose_i, const CameraPose& pose_j,
                       double rot_threshold = 0.5 * kDegToRad, double eps_baseline = 1e-6);

/// `epipole` is homogeneous in the observing camera's normalized image plane;
/// a zero third component denotes an epipole at infinity.
DegeneracyVerdict ClassifyObservation(const LineObservation& obs, const Vec3& epipole,
                                      const DegeneracyConfig& config = {});

/// Classifies `obs_j`, seen from pose_j, against the motion between pose_i and
/// pose_j. Under pure translation the epipole is taken at infinity along
/// `dominant_baseline` (world frame) when that is non-zero.
DegeneracyVerdict ClassifyPair(const LineObservation& obs_j, const CameraPose& pose_i,
                               const CameraPose& pose_j, const Vec3& dominant_baseline,
                               const DegeneracyConfig& config = {});

/// Largest distance from the endpoints of `obs_j` to the image line of `obs_i`
/// carried into camera j by the relative rotation alone.
double ImageLineDrift(const LineObservation& obs_i, const CameraPose& pose_i,
                      const LineObservation& obs_j, const CameraPose& pose_j);

/// Principal direction of consecutive camera displacements (unit, sign
/// canonicalized). Zero if the cameras do not move.
Vec3 DominantBaseline(std::span<const CameraPose> poses);

/// Flips v so that its largest-magnitude component is positive.
Vec3 CanonicalDirection(const Vec3& v);

/// Pairs degenerate lines whose vanishing direction matches the baseline:
/// one group per baseline direction, singletons dropped. Verdicts that
/// straddle the epipole or drift beyond stationary_threshold are not grouped.
std::vector<ParallelGroup> GroupParallel(std::span<const DegeneracyVerdict> verdicts,
                                         const DegeneracyConfig& config = {});

}  // namespace plslam
