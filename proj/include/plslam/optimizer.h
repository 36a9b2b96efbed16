#pragma once

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "plslam/degeneracy.h"
#include "plslam/linearize.h"
#include "plslam/residuals.h"

namespace plslam {

// Measurements available inside the current window.
struct WindowObservations {
  std::vector<LineObservation> lines;
  std::vector<PointObservation> points;
};

struct ProblemConfig {
  int window_size = 10;
  int min_tracked_frames = 5;
  // Fixed pose; the oldest frame when unset.
  std::optional<FrameId> gauge_frame;

  double line_sigma = 1e-3;   // normalized image units
  double point_sigma = 1e-3;  // normalized image units
  double huber_delta = 2.0;   // on whitened reprojection residuals
  double structural_weight = 10.0;
  // Groups larger than this are paired as a star around their
  // longest-tracked member instead of all pairs.
  int star_threshold = 12;

  bool use_lines = true;
  bool use_points = true;
  bool structural = true;
};

using BlockCounts = std::array<int, kNumResidualKinds>;

struct WindowProblem {
  WindowState state;
  std::vector<ResidualBlock> blocks;
  FrameId gauge = 0;
  int window_size = 10;
  BlockCounts block_counts{};

  int GaugeIndex() const { return state.FrameIndex(gauge); }
};

/// Throws kEmptyWindow, kUnanchoredGauge, kInvalidConfig.
WindowProblem BuildProblem(const WindowObservations& window_obs, const WindowState& initial_state,
                           std::span<const ParallelGroup> parallel_groups,
                           const ProblemConfig& config);

enum class TerminationReason {
  kGradientTolerance,
  kFunctionTolerance,
  kMaxIterations,
  kTimeBudget,
  kNumericalFailure,
  kNoParameters,
};

std::string_view TerminationReasonName(TerminationReason reason);

struct SolverConfig {
  int max_iterations = 10;
  double max_time_seconds = 0.1;  // <= 0 disables the budget
  double gradient_tolerance = 1e-10;
  double function_tolerance = 1e-6;
  double initial_damping = 1e-4;
  double damping_increase = 10.0;
  double damping_decrease = 0.1;
  ExecutionPolicy policy = ExecutionPolicy::kParallel;
};

struct SolveReport {
  int iterations = 0;
  int accepted_steps = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  std::array<double, kNumResidualKinds> initial_cost_by_kind{};
  std::array<double, kNumResidualKinds> final_cost_by_kind{};
  BlockCounts block_counts{};
  int num_parameters = 0;  // tangent dimension, gauge excluded
  TerminationReason termination = TerminationReason::kMaxIterations;
  double elapsed_seconds = 0.0;
};

struct SolveResult {
  WindowState state;
  SolveReport report;
};

/// Levenberg-Marquardt on the manifold. Points and lines that are not part of
/// a structural pair are eliminated by Schur complement before a dense
/// Cholesky solve. Never throws for numerical trouble: the last accepted
/// state is returned with termination kNumericalFailure.
SolveResult Solve(const WindowProblem& problem, const SolverConfig& config);

struct ShiftResult {
  std::optional<FrameState> dropped;
  std::vector<FeatureId> removed_lines;
  std::vector<FeatureId> removed_points;
};

struct LineMarginalization {
  bool enabled = false;
  double line_sigma = 1e-3;
  double huber_delta = 2.0;
  // Only lines with at least this many window observations have been
  // optimized and contribute information.
  int min_tracked_frames = 5;
};

/// Appends `new_frame`. If the window is already full the oldest frame is
/// dropped first: its prior information is added to the next frame's prior,
/// points it hosts move to their next observation, and landmarks left
/// without observations are removed. With `lines.enabled`, the dropped
/// frame's line observations are folded into a Gaussian prior on each
/// surviving line, linearized at its current estimate with the dropped pose
/// held fixed.
ShiftResult MarginalizeShift(WindowState* state, WindowObservations* window_obs,
                             const FrameState& new_frame, int window_size,
                             const LineMarginalization& lines = {});

}  // namespace plslam
