#pragma once

#include <array>
#include <span>
#include <vector>

#include "plslam/residuals.h"

namespace plslam {

enum class ExecutionPolicy { kSerial, kParallel };

// Evaluates every residual block against a read-only snapshot of the state.
// Each block writes only its own output slot, so both variants produce
// bitwise-identical results; the serial one is the reference.
void EvaluateBlocksSerial(std::span<const ResidualBlock> blocks, const WindowState& state,
                          bool with_jacobian, std::vector<BlockEvaluation>* out);
void EvaluateBlocksParallel(std::span<const ResidualBlock> blocks, const WindowState& state,
                            bool with_jacobian, std::vector<BlockEvaluation>* out);
void EvaluateBlocks(ExecutionPolicy policy, std::span<const ResidualBlock> blocks,
                    const WindowState& state, bool with_jacobian,
                    std::vector<BlockEvaluation>* out);

struct CostBreakdown {
  bool valid = true;
  double total = 0.0;
  std::array<double, kNumResidualKinds> per_kind{};
};

/// 0.5 * sum rho(|r|^2), summed in block order.
CostBreakdown AccumulateCost(std::span<const ResidualBlock> blocks,
                             std::span<const BlockEvaluation> evaluations);

/// Number of worker threads OpenMP would use for the parallel kernels.
int ParallelThreads();

}  // namespace plslam
