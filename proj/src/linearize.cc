#include "plslam/linearize.h"

#include <omp.h>

namespace plslam {

void EvaluateBlocksSerial(std::span<const ResidualBlock> blocks, const WindowState& state,
                          bool with_jacobian, std::vector<BlockEvaluation>* out) {
  out->resize(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    (*out)[i] = EvaluateBlock(blocks[i], state, with_jacobian);
  }
}

void EvaluateBlocksParallel(std::span<const ResidualBlock> blocks, const WindowState& state,
                            bool with_jacobian, std::vector<BlockEvaluation>* out) {
  out->resize(blocks.size());
  const auto n = static_cast<std::ptrdiff_t>(blocks.size());
  BlockEvaluation* slots = out->data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    slots[i] = EvaluateBlock(blocks[i], state, with_jacobian);
  }
}

void EvaluateBlocks(ExecutionPolicy policy, std::span<const ResidualBlock> blocks,
                    const WindowState& state, bool with_jacobian,
                    std::vector<BlockEvaluation>* out) {
  if (policy == ExecutionPolicy::kParallel) {
    EvaluateBlocksParallel(blocks, state, with_jacobian, out);
  } else {
    EvaluateBlocksSerial(blocks, state, with_jacobian, out);
  }
}

CostBreakdown AccumulateCost(std::span<const ResidualBlock> blocks,
                             std::span<const BlockEvaluation> evaluations) {
  CostBreakdown cost;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const BlockEvaluation& ev = evaluations[i];
    if (!ev.valid) {
      cost.valid = false;
      continue;
    }
    const double term = 0.5 * blocks[i].loss.Rho(ev.residual.squaredNorm());
    cost.total += term;
    cost.per_kind[static_cast<int>(blocks[i].kind)] += term;
  }
  return cost;
}

int ParallelThreads() { return omp_get_max_threads(); }

}  // namespace plslam
