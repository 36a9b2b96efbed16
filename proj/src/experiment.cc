#include "plslam/experiment.h"

#include <chrono>
#include <map>
#include <set>

#include <yaml-cpp/yaml.h>

#include "plslam/error.h"
#include "plslam/estimator.h"
#include "plslam/tracking.h"

namespace plslam {

namespace {

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

template <typename F>
auto Stage(const char* stage, FrameId frame, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInvalidConfig) throw;
    throw Error(ErrorCode::kPipelineFailure,
                std::string("stage '") + stage + "' at frame " + std::to_string(frame) + ": " +
                    e.what());
  }
}

void CheckKeys(const YAML::Node& node, const std::set<std::string>& allowed,
               const std::string& where) {
  if (!node.IsMap()) throw Error(ErrorCode::kInvalidConfig, where + " must be a mapping");
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    if (!allowed.contains(key)) {
      throw Error(ErrorCode::kInvalidConfig, "unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void Read(const YAML::Node& node, const char* key, T* out) {
  if (node[key]) *out = node[key].as<T>();
}

}  // namespace

EstimatorConfig MakeEstimatorConfig(const ExperimentConfig& c) {
  EstimatorConfig e;
  e.problem.window_size = c.window_size;
  e.problem.min_tracked_frames = c.min_tracked_frames;
  e.problem.use_lines = c.use_lines;
  e.problem.use_points = c.use_points;
  e.problem.structural = c.structural;
  const double sigma = c.scene.noise.endpoint_sigma;
  e.problem.line_sigma = std::max(sigma, 1e-3);
  e.problem.point_sigma = std::max(c.scene.noise.point_sigma, 1e-3);
  e.solver.max_iterations = c.max_iterations;
  e.solver.max_time_seconds = c.solver_time_s;
  e.solver.policy = c.policy;
  e.detect_degeneracy = c.degeneracy;
  // Noise floor of the drift between two observations of a fixed image line.
  e.degeneracy.stationary_threshold =
      std::max(1e-6, 6.0 * sigma + 3.0 * c.scene.noise.prior_sigma_r_deg * kDegToRad);
  e.max_points = c.max_points;
  e.prior_sigma_t = std::max(c.scene.noise.prior_sigma_t, 1e-3);
  e.prior_sigma_r_deg = std::max(c.scene.noise.prior_sigma_r_deg, 0.05);
  return e;
}

void ExperimentConfig::Validate() const {
  scene.Validate();
  if (window_size < 2) throw Error(ErrorCode::kInvalidConfig, "window_size must be >= 2");
  if (max_points < 0) throw Error(ErrorCode::kInvalidConfig, "max_points must be >= 0");
  if (min_line_pixels < 0.0) throw Error(ErrorCode::kInvalidConfig, "min_line_pixels must be >= 0");
  if (min_tracked_frames < 2) {
    throw Error(ErrorCode::kInvalidConfig, "min_tracked_frames must be >= 2");
  }
  if (max_iterations < 0) throw Error(ErrorCode::kInvalidConfig, "max_iterations must be >= 0");
  if (!use_lines && !use_points) {
    throw Error(ErrorCode::kInvalidConfig, "at least one of lines and points must be enabled");
  }
}

ExperimentConfig ParseExperimentConfig(const YAML::Node& node,
                                       const std::filesystem::path& base_dir) {
  try {
    CheckKeys(node,
              {"scene", "scene_file", "seed", "pipeline", "parameters", "alignment", "output_dir"},
              "experiment");
    ExperimentConfig c;
    if (node["scene"] && node["scene_file"]) {
      throw Error(ErrorCode::kInvalidConfig, "give either scene or scene_file, not both");
    }
    if (node["scene"]) c.scene = ParseSceneConfig(node["scene"]);
    if (node["scene_file"]) {
      std::filesystem::path p = node["scene_file"].as<std::string>();
      if (p.is_relative()) p = base_dir / p;
      c.scene = LoadSceneConfig(p);
    }
    Read(node, "seed", &c.scene.seed);
    if (const YAML::Node p = node["pipeline"]) {
      CheckKeys(p, {"structural", "merging", "degeneracy", "lines", "points"}, "pipeline");
      Read(p, "structural", &c.structural);
      Read(p, "merging", &c.merging);
      Read(p, "degeneracy", &c.degeneracy);
      Read(p, "lines", &c.use_lines);
      Read(p, "points", &c.use_points);
    }
    if (const YAML::Node p = node["parameters"]) {
      CheckKeys(p,
                {"window_size", "max_points", "min_line_pixels", "min_tracked_frames",
                 "solver_time_s", "max_iterations"},
                "parameters");
      Read(p, "window_size", &c.window_size);
      Read(p, "max_points", &c.max_points);
      Read(p, "min_line_pixels", &c.min_line_pixels);
      Read(p, "min_tracked_frames", &c.min_tracked_frames);
      Read(p, "solver_time_s", &c.solver_time_s);
      Read(p, "max_iterations", &c.max_iterations);
    }
    if (node["alignment"]) c.alignment = ParseAlignment(node["alignment"].as<std::string>());
    if (node["output_dir"]) c.output_dir = node["output_dir"].as<std::string>();
    c.Validate();
    return c;
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("malformed experiment config: ") + e.what());
  }
}

ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path) {
  YAML::Node node;
  try {
    node = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::kInvalidConfig, "cannot read " + path.string() + ": " + e.what());
  }
  return ParseExperimentConfig(node, path.parent_path());
}

MetricsRecord RunExperiment(const ExperimentConfig& config) {
  config.Validate();
  const auto start = Clock::now();

  MetricsRecord record;
  record.scene = config.scene.name;
  record.seed = config.scene.seed;
  record.alignment = config.alignment;
  record.toggles = {{"structural", config.structural},
                    {"merging", config.merging},
                    {"degeneracy", config.degeneracy},
                    {"lines", config.use_lines},
                    {"points", config.use_points}};

  const GroundTruth gt = Stage("scene", 0, [&] { return GenerateScene(config.scene); });

  TrackingConfig tracking;
  tracking.intrinsics = config.scene.intrinsics;
  tracking.min_pixel_length = config.min_line_pixels;
  tracking.merging = config.merging;
  LineTracker tracker(tracking);
  SlidingWindowEstimator estimator(MakeEstimatorConfig(config));

  // Votes from each track to the ground-truth lines its observations came from.
  std::map<FeatureId, std::map<FeatureId, int>> votes;
  const NoiseSpec& noise = config.scene.noise;

  for (FrameId k = 0; k < static_cast<FrameId>(gt.poses.size()); ++k) {
    const RenderedFrame frame = Stage("render", k, [&] { return RenderFrame(gt, k, noise); });

    FrameInput input;
    input.id = k;
    input.prior = NoisyPosePrior(gt, k, noise);
    if (config.use_lines) {
      const auto t0 = Clock::now();
      const FlowField flow = k > 0 ? ExactFlow(gt, k - 1, k, noise.flow_sigma) : FlowField();
      const std::vector<TrackUpdate> updates =
          Stage("tracking", k, [&] { return tracker.Process(k, frame.lines, flow); });
      record.timings.tracking_seconds += Seconds(t0);
      for (const TrackUpdate& u : updates) {
        input.lines.push_back(u.observation);
        if (u.source_detection >= 0) {
          ++votes[u.observation.feature_id][frame.line_truth[u.source_detection]];
        }
      }
    }
    if (config.use_points) input.points = frame.points;

    Stage("estimation", k, [&] {
      estimator.AddFrame(input);
      return 0;
    });
  }
  estimator.Finish();

  // Trajectory and ATE.
  std::vector<Vec3> est_positions;
  std::vector<Vec3> gt_positions;
  for (const auto& [frame, pose] : estimator.final_poses()) {
    record.estimate.push_back({frame, gt.timestamps[frame], pose});
    record.groundtruth.push_back({frame, gt.timestamps[frame], gt.poses[frame]});
    est_positions.push_back(pose.translation);
    gt_positions.push_back(gt.poses[frame].translation);
  }
  record.ate = Stage("evaluation", 0,
                     [&] { return ComputeAte(est_positions, gt_positions, config.alignment); });
  record.distance_errors = RelativeErrors(record.estimate, record.groundtruth);

  // Line map against ground truth.
  double sum_deg = 0.0;
  double sum_nondeg = 0.0;
  for (const auto& [id, est] : estimator.final_lines()) {
    const auto vit = votes.find(id);
    if (vit == votes.end() || vit->second.empty()) continue;
    FeatureId truth = vit->second.begin()->first;
    for (const auto& [candidate, count] : vit->second) {
      if (count > vit->second.at(truth)) truth = candidate;
    }
    const GroundTruthLine& gl = gt.lines[truth];
    LineReport report;
    report.id = id;
    report.truth_id = truth;
    report.plucker = OrthonormalToPlucker(est.line);
    report.truth_direction = gl.direction;
    report.degenerate = est.degenerate;
    report.observations = est.observations;
    report.direction_error = DirectionError(est.line.U().col(1), gl.direction);
    if (gl.parallel_to_motion) {
      sum_deg += report.direction_error;
      ++record.num_degenerate;
    } else {
      sum_nondeg += report.direction_error;
      ++record.num_nondegenerate;
    }
    record.lines.push_back(report);
  }
  if (record.num_degenerate > 0) record.mean_degenerate_error = sum_deg / record.num_degenerate;
  if (record.num_nondegenerate > 0) {
    record.mean_nondegenerate_error = sum_nondeg / record.num_nondegenerate;
  }

  record.num_tracks = static_cast<int>(tracker.tracks().size());
  record.retention_ratio = tracker.tracks().empty()
                               ? 0.0
                               : RetentionRatio(tracker.tracks(), config.min_tracked_frames);

  for (const SolveReport& r : estimator.reports()) {
    ++record.windows_solved;
    for (int k = 0; k < kNumResidualKinds; ++k) {
      record.final_cost_by_kind[k] += r.final_cost_by_kind[k];
      record.block_counts[k] += r.block_counts[k];
    }
    ++record.terminations[std::string(TerminationReasonName(r.termination))];
    record.timings.solve_seconds += r.elapsed_seconds;
    record.timings.max_solve_seconds = std::max(record.timings.max_solve_seconds, r.elapsed_seconds);
  }
  record.timings.total_seconds = Seconds(start);
  return record;
}

}  // namespace plslam
