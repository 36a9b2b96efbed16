#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "plslam/line_geometry.h"
#include "plslam/optimizer.h"
#include "plslam/pose.h"

namespace plslam {

enum class Alignment { kNone, kRigid, kYaw };

/// "none", "rigid" or "yaw". Throws kInvalidConfig.
Alignment ParseAlignment(std::string_view name);
std::string_view AlignmentName(Alignment alignment);

struct AteResult {
  double rmse = 0.0;
  double max_error = 0.0;
};

/// Absolute translational error after aligning `estimate` onto
/// `groundtruth` (least-squares rigid or yaw-plus-translation fit, no scale).
/// Throws kLengthMismatch.
AteResult ComputeAte(std::span<const Vec3> estimate, std::span<const Vec3> groundtruth,
                     Alignment alignment = Alignment::kRigid);

/// Applies the same alignment ComputeAte would use to every position.
std::vector<Vec3> AlignTrajectory(std::span<const Vec3> estimate,
                                  std::span<const Vec3> groundtruth, Alignment alignment);

struct TrajectorySample {
  FrameId frame = 0;
  double timestamp = 0.0;
  CameraPose pose;
};

struct DistanceErrorSample {
  double distance = 0.0;  // sub-trajectory length (m)
  double error = 0.0;     // end-point translational drift (m)
};

inline constexpr std::array<double, 5> kDefaultFractions{0.1, 0.2, 0.3, 0.4, 0.5};

/// Relative errors over sub-trajectories whose travelled length reaches each
/// of the given fractions of the total path length, anchored at their first
/// pose. Throws kLengthMismatch.
std::vector<DistanceErrorSample> RelativeErrors(std::span<const TrajectorySample> estimate,
                                                std::span<const TrajectorySample> groundtruth,
                                                std::span<const double> fractions = kDefaultFractions);

struct LineReport {
  FeatureId id = kInvalidFeature;
  FeatureId truth_id = kInvalidFeature;
  PluckerLine plucker;             // world frame, unit norm
  Vec3 truth_direction = Vec3::Zero();
  bool degenerate = false;
  int observations = 0;
  double direction_error = 0.0;    // rad, in [0, pi/2]
};

/// Angle between two undirected directions, in [0, pi/2].
double DirectionError(const Vec3& a, const Vec3& b);

struct Timings {
  double total_seconds = 0.0;
  double tracking_seconds = 0.0;
  double solve_seconds = 0.0;
  double max_solve_seconds = 0.0;
};

struct MetricsRecord {
  std::string scene;
  std::uint64_t seed = 0;
  std::map<std::string, bool> toggles;

  std::vector<TrajectorySample> estimate;
  std::vector<TrajectorySample> groundtruth;
  Alignment alignment = Alignment::kRigid;
  AteResult ate;
  std::vector<DistanceErrorSample> distance_errors;

  std::vector<LineReport> lines;
  double mean_degenerate_error = 0.0;
  double mean_nondegenerate_error = 0.0;
  int num_degenerate = 0;
  int num_nondegenerate = 0;

  double retention_ratio = 0.0;
  int num_tracks = 0;

  int windows_solved = 0;
  std::array<double, kNumResidualKinds> final_cost_by_kind{};  // summed over windows
  BlockCounts block_counts{};                                  // summed over windows
  std::map<std::string, int> terminations;

  Timings timings;  // reported separately; never part of the deterministic outputs
};

/// Writes metrics.json, trajectory.csv, groundtruth.csv, lines.csv,
/// error_vs_distance.csv and timings.json into `dir` (created if missing).
/// Throws kIoFailure.
void EmitReports(const MetricsRecord& record, const std::filesystem::path& dir);

/// Reads a trajectory written by EmitReports. Throws kIoFailure.
std::vector<TrajectorySample> ReadTrajectoryCsv(const std::filesystem::path& path);

}  // namespace plslam
