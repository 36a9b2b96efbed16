// Serial reference vs OpenMP residual/Jacobian evaluation on a full window
// built from the machine-hall-x scene.

#include <benchmark/benchmark.h>

#include "plslam/estimator.h"
#include "plslam/linearize.h"
#include "plslam/scene_sim.h"

namespace {

struct Fixture {
  plslam::WindowProblem problem;
};

const Fixture& GetFixture() {
  static const Fixture fixture = [] {
    plslam::SceneConfig scene = plslam::PresetScene("machine-hall-x");
    scene.line_count = 150;
    scene.point_count = 150;
    const plslam::GroundTruth gt = plslam::GenerateScene(scene);

    plslam::EstimatorConfig cfg;
    cfg.solver.max_iterations = 0;
    plslam::SlidingWindowEstimator estimator(cfg);
    for (plslam::FrameId k = 0; k < 10; ++k) {
      const plslam::RenderedFrame frame = plslam::RenderFrame(gt, k, scene.noise);
      plslam::FrameInput input;
      input.id = k;
      input.prior = gt.poses[k];
      for (std::size_t i = 0; i < frame.lines.size(); ++i) {
        plslam::LineObservation obs = frame.lines[i];
        obs.feature_id = frame.line_truth[i];
        input.lines.push_back(obs);
      }
      input.points = frame.points;
      estimator.AddFrame(input);
    }
    Fixture f;
    f.problem = plslam::BuildProblem(estimator.window_observations(), estimator.state(),
                                     estimator.groups(), cfg.problem);
    return f;
  }();
  return fixture;
}

void BM_Evaluate(benchmark::State& state, plslam::ExecutionPolicy policy) {
  const Fixture& f = GetFixture();
  std::vector<plslam::BlockEvaluation> out;
  for (auto _ : state) {
    plslam::EvaluateBlocks(policy, f.problem.blocks, f.problem.state, true, &out);
    benchmark::DoNotOptimize(out.data());
  }
  state.counters["blocks"] = static_cast<double>(f.problem.blocks.size());
  state.counters["threads"] = policy == plslam::ExecutionPolicy::kParallel
                                  ? plslam::ParallelThreads()
                                  : 1;
}

void BM_Solve(benchmark::State& state, plslam::ExecutionPolicy policy) {
  const Fixture& f = GetFixture();
  plslam::SolverConfig cfg;
  cfg.policy = policy;
  cfg.max_time_seconds = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(plslam::Solve(f.problem, cfg).report.final_cost);
  }
}

BENCHMARK_CAPTURE(BM_Evaluate, serial, plslam::ExecutionPolicy::kSerial);
BENCHMARK_CAPTURE(BM_Evaluate, openmp, plslam::ExecutionPolicy::kParallel);
BENCHMARK_CAPTURE(BM_Solve, serial, plslam::ExecutionPolicy::kSerial)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Solve, openmp, plslam::ExecutionPolicy::kParallel)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
