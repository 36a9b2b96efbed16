#pragma once

#include <map>
#include <vector>

#include "plslam/degeneracy.h"
#include "plslam/optimizer.h"

namespace plslam {

struct EstimatorConfig {
  ProblemConfig problem;
  SolverConfig solver;
  DegeneracyConfig degeneracy;
  TriangulationOptions triangulation;
  bool detect_degeneracy = true;
  // Keep line information from frames leaving the window as a line prior.
  bool marginalize_lines = true;

  int max_points = 150;
  double min_point_parallax_deg = 1.0;
  double min_depth = 0.1;  // m
  double max_depth = 50.0;  // m
  // Depth used to seed a line whose two-view triangulation is unusable.
  double fallback_depth = 3.0;

  // Standard deviations weighting the absolute pose priors.
  double prior_sigma_t = 0.02;
  double prior_sigma_r_deg = 0.3;
};

struct FrameInput {
  FrameId id = 0;
  CameraPose prior;
  std::vector<LineObservation> lines;   // feature_id = track id
  std::vector<PointObservation> points;
};

struct LineEstimate {
  FeatureId id = kInvalidFeature;
  OrthonormalLine line;
  bool degenerate = false;
  int observations = 0;
  bool fallback_init = false;
};

/// Sliding-window point and line bundle adjustment. Frames are consumed in
/// order; each call re-solves the window after the newest frame is added.
class SlidingWindowEstimator {
 public:
  explicit SlidingWindowEstimator(EstimatorConfig config);

  void AddFrame(const FrameInput& frame);
  /// Flushes the remaining window into the final results.
  void Finish();

  const std::map<FrameId, CameraPose>& final_poses() const { return final_poses_; }
  const std::map<FeatureId, LineEstimate>& final_lines() const { return final_lines_; }
  const std::vector<SolveReport>& reports() const { return reports_; }
  const WindowState& state() const { return state_; }
  const WindowObservations& window_observations() const { return window_obs_; }
  const std::vector<ParallelGroup>& groups() const { return groups_; }
  const std::map<FeatureId, bool>& degenerate() const { return degenerate_; }

 private:
  void InitializePoints();
  void InitializeLines();
  void ClassifyLines();
  void SeedGroupedLines();
  void PrunePoints();
  void PruneLines();
  LineMarginalization LineMarginalizationOptions() const;
  void RecordLine(FeatureId id, const OrthonormalLine& line);

  EstimatorConfig config_;
  WindowState state_;
  WindowObservations window_obs_;
  std::vector<ParallelGroup> groups_;
  std::map<FeatureId, bool> degenerate_;
  std::map<FeatureId, int> line_observations_;
  std::map<FeatureId, bool> fallback_init_;

  std::map<FrameId, CameraPose> final_poses_;
  std::map<FeatureId, LineEstimate> final_lines_;
  std::vector<SolveReport> reports_;
};

}  // namespace plslam
