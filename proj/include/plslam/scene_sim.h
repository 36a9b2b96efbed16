#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "plslam/pose.h"
#include "plslam/projective.h"
#include "plslam/tracking.h"

namespace YAML {
class Node;
}

namespace plslam {

// Rectangle origin + a * u_axis + b * v_axis, a in [0, u_extent], b in [0, v_extent].
struct SurfaceSpec {
  Vec3 origin = Vec3::Zero();
  Vec3 u_axis = Vec3::UnitX();
  Vec3 v_axis = Vec3::UnitZ();
  double u_extent = 1.0;
  double v_extent = 1.0;

  Vec3 normal() const { return u_axis.cross(v_axis).normalized(); }
  double area() const { return u_extent * v_extent; }
};

// Moves the camera by `translation` (world) and turns it by `yaw_deg` about
// world z, spread evenly over `frames` steps.
struct TrajectoryLeg {
  int frames = 1;
  Vec3 translation = Vec3::Zero();
  double yaw_deg = 0.0;
};

struct TrajectorySpec {
  Vec3 start = Vec3::Zero();
  Vec3 forward = Vec3::UnitY();  // optical axis at frame 0
  Vec3 up = Vec3::UnitZ();
  std::vector<TrajectoryLeg> legs;
};

struct NoiseSpec {
  double endpoint_sigma = 0.0;  // normalized image units
  double point_sigma = 0.0;     // normalized image units
  double split_p = 0.0;
  double cut_p = 0.0;
  double flow_sigma = 0.0;        // normalized image units
  double prior_sigma_t = 0.0;     // m
  double prior_sigma_r_deg = 0.0;
};

struct SceneConfig {
  std::string name = "custom";
  std::uint64_t seed = 1;
  int line_count = 60;
  int point_count = 60;
  // Fraction of lines parallel to a translation leg; the rest follow world
  // axes weighted by direction_mix (x, y, z).
  double parallel_fraction = 0.5;
  Vec3 direction_mix = Vec3::Ones();
  double min_line_length = 0.6;
  double max_line_length = 2.0;
  double min_line_separation = 0.15;
  double frame_rate = 20.0;
  CameraIntrinsics intrinsics{458.654, 457.296, 367.215, 248.375, 752, 480};
  TrajectorySpec trajectory;
  std::vector<SurfaceSpec> surfaces;
  NoiseSpec noise;

  int num_frames() const;
  /// Throws kInvalidConfig.
  void Validate() const;
};

/// "machine-hall-x", "vicon-turns", "corridor". Throws kInvalidConfig.
SceneConfig PresetScene(std::string_view name);
std::vector<std::string> PresetNames();

/// A mapping with optional `preset:` base and overrides for any field.
SceneConfig ParseSceneConfig(const YAML::Node& node);
SceneConfig LoadSceneConfig(const std::filesystem::path& path);

struct GroundTruthLine {
  FeatureId id = kInvalidFeature;
  Vec3 p0 = Vec3::Zero();
  Vec3 p1 = Vec3::Zero();
  Vec3 direction = Vec3::UnitX();  // unit, p0 -> p1
  int surface = -1;
  bool parallel_to_motion = false;

  PluckerLine plucker() const { return PluckerFromTwoPoints(p0, p1); }
};

struct GroundTruthPoint {
  FeatureId id = kInvalidFeature;
  Vec3 position = Vec3::Zero();
};

struct GroundTruth {
  SceneConfig config;
  std::vector<GroundTruthLine> lines;
  std::vector<GroundTruthPoint> points;
  std::vector<CameraPose> poses;  // camera-to-world, one per frame
  std::vector<double> timestamps;
  std::vector<Vec3> leg_directions;  // unit world directions of translating legs
};

/// Throws kInvalidConfig.
GroundTruth GenerateScene(const SceneConfig& config);

struct RenderedFrame {
  FrameId frame_id = 0;
  std::vector<LineObservation> lines;
  std::vector<FeatureId> line_truth;  // ground-truth line id per entry of `lines`
  std::vector<PointObservation> points;  // feature_id = ground-truth point id
};

/// Deterministic in (gt.config.seed, frame_id, noise).
RenderedFrame RenderFrame(const GroundTruth& gt, FrameId frame_id, const NoiseSpec& noise);

/// Flow from frame i to frame j: a query point takes the depth of the nearest
/// visible ground-truth line (or point) in frame i along its own ray and is
/// reprojected into frame j. Undefined away from structure or behind camera j.
FlowField ExactFlow(const GroundTruth& gt, FrameId frame_i, FrameId frame_j,
                    double flow_sigma = 0.0);

/// Ground-truth pose perturbed by the prior noise of `noise`.
CameraPose NoisyPosePrior(const GroundTruth& gt, FrameId frame_id, const NoiseSpec& noise);

}  // namespace plslam
