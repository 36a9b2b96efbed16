#pragma once

#include <cstdint>
#include <filesystem>

#include "plslam/estimator.h"
#include "plslam/evaluation.h"
#include "plslam/linearize.h"
#include "plslam/scene_sim.h"

namespace YAML {
class Node;
}

namespace plslam {

struct ExperimentConfig {
  SceneConfig scene = PresetScene("machine-hall-x");

  // Pipeline toggles.
  bool structural = true;
  bool merging = true;
  bool degeneracy = true;
  bool use_lines = true;
  bool use_points = true;

  // Window and front-end parameters.
  int window_size = 10;
  int max_points = 150;
  double min_line_pixels = 50.0;
  int min_tracked_frames = 5;
  double solver_time_s = 0.1;
  int max_iterations = 10;

  Alignment alignment = Alignment::kRigid;
  ExecutionPolicy policy = ExecutionPolicy::kParallel;
  std::filesystem::path output_dir = "out";

  /// Throws kInvalidConfig.
  void Validate() const;
};

/// Keys: scene (mapping, see ParseSceneConfig) or scene_file (path, resolved
/// against `base_dir`), seed, pipeline, parameters, alignment, output_dir.
ExperimentConfig ParseExperimentConfig(const YAML::Node& node,
                                       const std::filesystem::path& base_dir = ".");
ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path);

/// Estimator settings derived from the experiment parameters and the scene
/// noise levels.
EstimatorConfig MakeEstimatorConfig(const ExperimentConfig& config);

/// Generates the scene, tracks, estimates and evaluates. Throws
/// kInvalidConfig, or kPipelineFailure naming the failing stage.
MetricsRecord RunExperiment(const ExperimentConfig& config);

}  // namespace plslam
