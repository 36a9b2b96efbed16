#include "plslam/optimizer.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "plslam/error.h"

namespace plslam {

namespace {

// ---------------------------------------------------------------------------
// Problem construction.

std::map<FeatureId, int> CountLineObservations(const WindowObservations& obs,
                                               const WindowState& state) {
  std::map<FeatureId, int> counts;
  for (const LineObservation& o : obs.lines) {
    if (state.FrameIndex(o.frame_id) >= 0) ++counts[o.feature_id];
  }
  return counts;
}

void AddStructuralBlocks(const std::vector<FeatureId>& members,
                         const std::map<FeatureId, int>& counts, const ProblemConfig& config,
                         std::vector<ResidualBlock>* blocks) {
  auto add = [&](FeatureId a, FeatureId b) {
    ResidualBlock block;
    block.kind = ResidualKind::kStructural;
    block.landmarks = {std::min(a, b), std::max(a, b)};
    block.weight = config.structural_weight;
    blocks->push_back(block);
  };
  if (static_cast<int>(members.size()) <= config.star_threshold) {
    for (std::size_t i = 0; i < members.size(); ++i) {
      for (std::size_t j = i + 1; j < members.size(); ++j) add(members[i], members[j]);
    }
    return;
  }
  FeatureId center = members.front();
  for (FeatureId id : members) {
    if (counts.at(id) > counts.at(center)) center = id;
  }
  for (FeatureId id : members) {
    if (id != center) add(center, id);
  }
}

// ---------------------------------------------------------------------------
// Parameter layout and normal equations.

struct ParamSlot {
  ParamRef ref;
  int dim = 0;
  bool eliminated = false;
  int offset = 0;  // into the reduced system, or index of the eliminated block
};

struct Layout {
  std::map<std::pair<int, std::int64_t>, int> slot_of;
  std::vector<ParamSlot> slots;
  int reduced_dim = 0;
  int num_eliminated = 0;
  int total_dim = 0;

  int Find(const ParamRef& ref) const {
    const auto it = slot_of.find({static_cast<int>(ref.type), ref.key});
    return it == slot_of.end() ? -1 : it->second;
  }
};

// Parameters touched by a block, in Jacobian column order.
int BlockParams(const ResidualBlock& block, std::array<ParamRef, 3>* params) {
  switch (block.kind) {
    case ResidualKind::kLineReprojection:
      (*params)[0] = {ParamType::kPose, block.frames[0]};
      (*params)[1] = {ParamType::kLine, block.landmarks[0]};
      return 2;
    case ResidualKind::kPointReprojection:
      (*params)[0] = {ParamType::kPose, block.frames[0]};
      (*params)[1] = {ParamType::kPose, block.frames[1]};
      (*params)[2] = {ParamType::kPoint, block.landmarks[0]};
      return 3;
    case ResidualKind::kStructural:
      (*params)[0] = {ParamType::kLine, block.landmarks[0]};
      (*params)[1] = {ParamType::kLine, block.landmarks[1]};
      return 2;
    case ResidualKind::kPosePrior:
      (*params)[0] = {ParamType::kPose, block.frames[0]};
      return 1;
    case ResidualKind::kLinePrior:
      (*params)[0] = {ParamType::kLine, block.landmarks[0]};
      return 1;
  }
  return 0;
}

Layout BuildLayout(const WindowProblem& problem) {
  const int gauge = problem.GaugeIndex();
  std::set<int> poses;
  std::set<FeatureId> paired_lines, free_lines, points;
  for (const ResidualBlock& block : problem.blocks) {
    std::array<ParamRef, 3> params;
    const int n = BlockParams(block, &params);
    for (int k = 0; k < n; ++k) {
      const ParamRef& p = params[k];
      if (p.type == ParamType::kPose) {
        if (p.key != gauge) poses.insert(static_cast<int>(p.key));
      } else if (p.type == ParamType::kLine) {
        (block.kind == ResidualKind::kStructural ? paired_lines : free_lines).insert(p.key);
      } else {
        points.insert(p.key);
      }
    }
  }
  for (FeatureId id : paired_lines) free_lines.erase(id);

  Layout layout;
  auto add = [&](ParamRef ref, bool eliminated) {
    ParamSlot slot{ref, ref.TangentDim(), eliminated, 0};
    if (eliminated) {
      slot.offset = layout.num_eliminated++;
    } else {
      slot.offset = layout.reduced_dim;
      layout.reduced_dim += slot.dim;
    }
    layout.total_dim += slot.dim;
    layout.slot_of[{static_cast<int>(ref.type), ref.key}] = static_cast<int>(layout.slots.size());
    layout.slots.push_back(slot);
  };
  for (int f : poses) add({ParamType::kPose, f}, false);
  for (FeatureId id : paired_lines) add({ParamType::kLine, id}, false);
  for (FeatureId id : free_lines) add({ParamType::kLine, id}, true);
  for (FeatureId id : points) add({ParamType::kPoint, id}, true);
  return layout;
}

using Coupling = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 6, 4>;
using SmallMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 4, 4>;
using SmallVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 4, 1>;

struct EliminatedBlock {
  SmallMatrix c;
  SmallVector g;
  std::map<int, Coupling> coupling;  // reduced slot -> W (dim_r x dim_e)
};

struct NormalEquations {
  Eigen::MatrixXd a;
  Eigen::VectorXd ga;
  std::vector<EliminatedBlock> elim;
};

void Assemble(const Layout& layout, std::span<const ResidualBlock> blocks,
              std::span<const BlockEvaluation> evals, NormalEquations* ne) {
  ne->a.setZero(layout.reduced_dim, layout.reduced_dim);
  ne->ga.setZero(layout.reduced_dim);
  ne->elim.assign(layout.num_eliminated, {});
  for (const ParamSlot& slot : layout.slots) {
    if (!slot.eliminated) continue;
    EliminatedBlock& e = ne->elim[slot.offset];
    e.c.setZero(slot.dim, slot.dim);
    e.g.setZero(slot.dim);
  }

  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const BlockEvaluation& ev = evals[b];
    const double sqrt_w = std::sqrt(blocks[b].loss.RhoDerivative(ev.residual.squaredNorm()));
    const auto r = (sqrt_w * ev.residual).eval();
    const auto j = (sqrt_w * ev.jacobian).eval();

    int slot_ids[3];
    int cols[3];
    int col = 0;
    for (int k = 0; k < ev.num_params; ++k) {
      slot_ids[k] = layout.Find(ev.params[k]);
      cols[k] = col;
      col += ev.params[k].TangentDim();
    }

    for (int p = 0; p < ev.num_params; ++p) {
      if (slot_ids[p] < 0) continue;
      const ParamSlot& sp = layout.slots[slot_ids[p]];
      const auto jp = j.middleCols(cols[p], sp.dim);
      if (sp.eliminated) {
        EliminatedBlock& e = ne->elim[sp.offset];
        e.g.noalias() += jp.transpose() * r;
      } else {
        ne->ga.segment(sp.offset, sp.dim).noalias() += jp.transpose() * r;
      }
      for (int q = 0; q < ev.num_params; ++q) {
        if (slot_ids[q] < 0) continue;
        const ParamSlot& sq = layout.slots[slot_ids[q]];
        const auto jq = j.middleCols(cols[q], sq.dim);
        if (!sp.eliminated && !sq.eliminated) {
          ne->a.block(sp.offset, sq.offset, sp.dim, sq.dim).noalias() += jp.transpose() * jq;
        } else if (!sp.eliminated && sq.eliminated) {
          Coupling& w = ne->elim[sq.offset].coupling[slot_ids[p]];
          if (w.size() == 0) w.setZero(sp.dim, sq.dim);
          w.noalias() += jp.transpose() * jq;
        } else if (sp.eliminated && sq.eliminated && slot_ids[p] == slot_ids[q]) {
          ne->elim[sp.offset].c.noalias() += jp.transpose() * jq;
        }
      }
    }
  }
}

double MaxGradient(const NormalEquations& ne) {
  double g = ne.ga.size() > 0 ? ne.ga.cwiseAbs().maxCoeff() : 0.0;
  for (const EliminatedBlock& e : ne.elim) g = std::max(g, e.g.cwiseAbs().maxCoeff());
  return g;
}

double Damping(double diagonal, double mu) { return mu * std::clamp(diagonal, 1e-6, 1e32); }

// Solves the damped system; the step is laid out slot by slot in `dx`.
bool SolveStep(const Layout& layout, const NormalEquations& ne, double mu, Eigen::VectorXd* dx) {
  Eigen::MatrixXd s = ne.a;
  Eigen::VectorXd rhs = -ne.ga;
  for (int i = 0; i < layout.reduced_dim; ++i) s(i, i) += Damping(ne.a(i, i), mu);

  std::vector<SmallMatrix> c_inv(ne.elim.size());
  for (std::size_t k = 0; k < ne.elim.size(); ++k) {
    const EliminatedBlock& e = ne.elim[k];
    SmallMatrix c = e.c;
    for (int i = 0; i < c.rows(); ++i) c(i, i) += Damping(e.c(i, i), mu);
    Eigen::LLT<SmallMatrix> llt(c);
    if (llt.info() != Eigen::Success) return false;
    c_inv[k] = llt.solve(SmallMatrix::Identity(c.rows(), c.cols()));
    for (const auto& [slot_a, w_a] : e.coupling) {
      const ParamSlot& sa = layout.slots[slot_a];
      const Coupling t_a = w_a * c_inv[k];
      rhs.segment(sa.offset, sa.dim).noalias() += t_a * e.g;
      for (const auto& [slot_b, w_b] : e.coupling) {
        const ParamSlot& sb = layout.slots[slot_b];
        s.block(sa.offset, sb.offset, sa.dim, sb.dim).noalias() -= t_a * w_b.transpose();
      }
    }
  }

  Eigen::VectorXd x;
  if (layout.reduced_dim > 0) {
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success) return false;
    x = llt.solve(rhs);
    if (!x.allFinite()) return false;
  }

  dx->resize(layout.total_dim);
  int cursor = 0;
  for (const ParamSlot& slot : layout.slots) {
    if (!slot.eliminated) {
      dx->segment(cursor, slot.dim) = x.segment(slot.offset, slot.dim);
    } else {
      const EliminatedBlock& e = ne.elim[slot.offset];
      SmallVector b = -e.g;
      for (const auto& [slot_a, w_a] : e.coupling) {
        const ParamSlot& sa = layout.slots[slot_a];
        b.noalias() -= w_a.transpose() * x.segment(sa.offset, sa.dim);
      }
      dx->segment(cursor, slot.dim) = c_inv[slot.offset] * b;
    }
    cursor += slot.dim;
  }
  return dx->allFinite();
}

bool ApplyStep(const Layout& layout, const Eigen::VectorXd& dx, WindowState* state) {
  int cursor = 0;
  for (const ParamSlot& slot : layout.slots) {
    if (!RetractParameter(*state, slot.ref, dx.data() + cursor)) return false;
    cursor += slot.dim;
  }
  return true;
}

}  // namespace

WindowProblem BuildProblem(const WindowObservations& window_obs, const WindowState& initial_state,
                           std::span<const ParallelGroup> parallel_groups,
                           const ProblemConfig& config) {
  if (initial_state.frames.empty()) throw Error(ErrorCode::kEmptyWindow, "window has no frames");
  if (config.window_size < 1 || config.min_tracked_frames < 1 || config.line_sigma <= 0.0 ||
      config.point_sigma <= 0.0) {
    throw Error(ErrorCode::kInvalidConfig, "invalid problem configuration");
  }
  if (static_cast<int>(initial_state.frames.size()) > config.window_size) {
    throw Error(ErrorCode::kInvalidConfig, "window holds more frames than its configured size");
  }

  WindowProblem problem;
  problem.state = initial_state;
  problem.window_size = config.window_size;
  problem.gauge = config.gauge_frame.value_or(initial_state.frames.front().id);
  const int gauge_index = initial_state.FrameIndex(problem.gauge);
  if (gauge_index < 0) {
    throw Error(ErrorCode::kUnanchoredGauge, "gauge frame is not part of the window");
  }

  const RobustLoss huber{LossKind::kHuber, config.huber_delta};
  const std::map<FeatureId, int> counts = CountLineObservations(window_obs, initial_state);
  std::set<FeatureId> active_lines;

  if (config.use_lines) {
    for (const LineObservation& o : window_obs.lines) {
      const int frame = initial_state.FrameIndex(o.frame_id);
      if (frame < 0 || !initial_state.lines.contains(o.feature_id)) continue;
      if (counts.at(o.feature_id) < config.min_tracked_frames) continue;
      ResidualBlock block;
      block.kind = ResidualKind::kLineReprojection;
      block.frames = {frame, -1};
      block.landmarks = {o.feature_id, kInvalidFeature};
      block.weight = 1.0 / config.line_sigma;
      block.loss = huber;
      block.s = o.s;
      block.e = o.e;
      problem.blocks.push_back(block);
      active_lines.insert(o.feature_id);
    }
  }

  if (config.use_points) {
    for (const PointObservation& o : window_obs.points) {
      const auto it = initial_state.points.find(o.feature_id);
      if (it == initial_state.points.end()) continue;
      const int host = initial_state.FrameIndex(it->second.host_frame);
      const int target = initial_state.FrameIndex(o.frame_id);
      if (host < 0 || target < 0 || host == target) continue;
      ResidualBlock block;
      block.kind = ResidualKind::kPointReprojection;
      block.frames = {host, target};
      block.landmarks = {o.feature_id, kInvalidFeature};
      block.weight = 1.0 / config.point_sigma;
      block.loss = huber;
      block.target_uv = o.uv;
      problem.blocks.push_back(block);
    }
  }

  if (config.use_lines && config.structural) {
    for (const ParallelGroup& group : parallel_groups) {
      std::vector<FeatureId> members;
      for (FeatureId id : group.member_ids) {
        if (active_lines.contains(id)) members.push_back(id);
      }
      std::sort(members.begin(), members.end());
      members.erase(std::unique(members.begin(), members.end()), members.end());
      if (members.size() >= 2) AddStructuralBlocks(members, counts, config, &problem.blocks);
    }
  }

  for (FeatureId id : active_lines) {
    if (!initial_state.line_priors.contains(id)) continue;
    ResidualBlock block;
    block.kind = ResidualKind::kLinePrior;
    block.landmarks = {id, kInvalidFeature};
    problem.blocks.push_back(block);
  }

  for (int f = 0; f < static_cast<int>(initial_state.frames.size()); ++f) {
    if (f == gauge_index) continue;
    ResidualBlock block;
    block.kind = ResidualKind::kPosePrior;
    block.frames = {f, -1};
    problem.blocks.push_back(block);
  }

  for (const ResidualBlock& block : problem.blocks) {
    ++problem.block_counts[static_cast<int>(block.kind)];
  }
  return problem;
}

std::string_view TerminationReasonName(TerminationReason reason) {
  switch (reason) {
    case TerminationReason::kGradientTolerance: return "gradient_tolerance";
    case TerminationReason::kFunctionTolerance: return "function_tolerance";
    case TerminationReason::kMaxIterations: return "max_iterations";
    case TerminationReason::kTimeBudget: return "time_budget";
    case TerminationReason::kNumericalFailure: return "numerical_failure";
    case TerminationReason::kNoParameters: return "no_parameters";
  }
  return "unknown";
}

SolveResult Solve(const WindowProblem& problem, const SolverConfig& config) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };

  SolveResult result{problem.state, {}};
  SolveReport& report = result.report;
  report.block_counts = problem.block_counts;

  const Layout layout = BuildLayout(problem);
  report.num_parameters = layout.total_dim;

  std::vector<BlockEvaluation> evals;
  EvaluateBlocks(config.policy, problem.blocks, result.state, true, &evals);
  CostBreakdown cost = AccumulateCost(problem.blocks, evals);
  report.initial_cost = report.final_cost = cost.total;
  report.initial_cost_by_kind = report.final_cost_by_kind = cost.per_kind;

  if (!cost.valid || !std::isfinite(cost.total)) {
    report.termination = TerminationReason::kNumericalFailure;
    report.elapsed_seconds = elapsed();
    return result;
  }
  if (layout.total_dim == 0) {
    report.termination = TerminationReason::kNoParameters;
    report.elapsed_seconds = elapsed();
    return result;
  }

  NormalEquations ne;
  Assemble(layout, problem.blocks, evals, &ne);
  double mu = config.initial_damping;
  Eigen::VectorXd dx;
  std::vector<BlockEvaluation> trial_evals;

  for (;;) {
    if (MaxGradient(ne) < config.gradient_tolerance) {
      report.termination = TerminationReason::kGradientTolerance;
      break;
    }
    if (report.iterations >= config.max_iterations) {
      report.termination = TerminationReason::kMaxIterations;
      break;
    }
    if (config.max_time_seconds > 0.0 && elapsed() >= config.max_time_seconds) {
      report.termination = TerminationReason::kTimeBudget;
      break;
    }
    if (!(mu < 1e32)) {
      report.termination = TerminationReason::kNumericalFailure;
      break;
    }
    ++report.iterations;

    if (!SolveStep(layout, ne, mu, &dx)) {
      mu *= config.damping_increase;
      continue;
    }
    WindowState trial = result.state;
    bool accepted = false;
    CostBreakdown trial_cost;
    if (ApplyStep(layout, dx, &trial)) {
      EvaluateBlocks(config.policy, problem.blocks, trial, false, &trial_evals);
      trial_cost = AccumulateCost(problem.blocks, trial_evals);
      accepted = trial_cost.valid && std::isfinite(trial_cost.total) &&
                 trial_cost.total <= cost.total;
    }
    if (!accepted) {
      mu *= config.damping_increase;
      continue;
    }

    const double decrease = (cost.total - trial_cost.total) / std::max(cost.total, 1e-300);
    result.state = std::move(trial);
    cost = trial_cost;
    ++report.accepted_steps;
    mu = std::max(mu * config.damping_decrease, 1e-16);
    if (decrease < config.function_tolerance) {
      report.termination = TerminationReason::kFunctionTolerance;
      break;
    }
    EvaluateBlocks(config.policy, problem.blocks, result.state, true, &evals);
    Assemble(layout, problem.blocks, evals, &ne);
  }

  report.final_cost = cost.total;
  report.final_cost_by_kind = cost.per_kind;
  report.elapsed_seconds = elapsed();
  return result;
}

namespace {

void FoldLineInformation(const FrameState& dropped, const WindowObservations& window_obs,
                         const LineMarginalization& options, WindowState* state) {
  std::map<FeatureId, int> counts;
  for (const LineObservation& o : window_obs.lines) ++counts[o.feature_id];
  const RobustLoss huber{LossKind::kHuber, options.huber_delta};
  const double weight = 1.0 / options.line_sigma;

  std::map<FeatureId, Eigen::Matrix4d> gained;
  for (const LineObservation& o : window_obs.lines) {
    if (o.frame_id != dropped.id || counts[o.feature_id] < options.min_tracked_frames) continue;
    const auto it = state->lines.find(o.feature_id);
    if (it == state->lines.end()) continue;
    const double zeros[6] = {0, 0, 0, 0, 0, 0};
    const Eigen::Vector2d r =
        weight * LineReprojectionT<double>(dropped.pose, it->second, o.s, o.e, zeros, zeros);
    const Eigen::Matrix<double, 2, 4> j =
        std::sqrt(huber.RhoDerivative(r.squaredNorm())) *
        LineObservationJacobian(o, it->second, dropped.pose, weight);
    if (!j.allFinite()) continue;
    auto [g, inserted] = gained.try_emplace(o.feature_id, Eigen::Matrix4d::Zero());
    g->second += j.transpose() * j;
  }

  for (const auto& [id, info_gain] : gained) {
    const OrthonormalLine& current = state->lines.at(id);
    Eigen::Matrix4d information = info_gain;
    LinePrior& prior = state->line_priors[id];
    if (!prior.sqrt_information.isZero(0.0)) {
      // Old information is carried over unchanged to the new linearization point.
      information += prior.sqrt_information.transpose() * prior.sqrt_information;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(information);
    if (eig.info() != Eigen::Success) continue;
    const Eigen::Vector4d values = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    prior.mean = current;
    prior.sqrt_information = values.asDiagonal() * eig.eigenvectors().transpose();
  }
}

}  // namespace

ShiftResult MarginalizeShift(WindowState* state, WindowObservations* window_obs,
                             const FrameState& new_frame, int window_size,
                             const LineMarginalization& lines) {
  ShiftResult result;
  if (static_cast<int>(state->frames.size()) >= window_size && !state->frames.empty()) {
    const FrameState dropped = state->frames.front();
    const CameraPose dropped_pose = dropped.pose;
    state->frames.erase(state->frames.begin());
    result.dropped = dropped;

    if (!state->frames.empty()) {
      FrameState& next = state->frames.front();
      const Eigen::Matrix<double, 6, 6> information =
          dropped.prior_sqrt_information.transpose() * dropped.prior_sqrt_information +
          next.prior_sqrt_information.transpose() * next.prior_sqrt_information;
      Eigen::LLT<Eigen::Matrix<double, 6, 6>> llt(information);
      if (llt.info() == Eigen::Success) next.prior_sqrt_information = llt.matrixU();
    }

    if (lines.enabled) FoldLineInformation(dropped, *window_obs, lines, state);
    std::erase_if(window_obs->lines,
                  [&](const LineObservation& o) { return o.frame_id == dropped.id; });
    std::erase_if(window_obs->points,
                  [&](const PointObservation& o) { return o.frame_id == dropped.id; });

    std::set<FeatureId> observed_lines, observed_points;
    for (const LineObservation& o : window_obs->lines) observed_lines.insert(o.feature_id);
    for (const PointObservation& o : window_obs->points) observed_points.insert(o.feature_id);

    for (auto it = state->lines.begin(); it != state->lines.end();) {
      if (!observed_lines.contains(it->first)) {
        result.removed_lines.push_back(it->first);
        state->line_priors.erase(it->first);
        it = state->lines.erase(it);
      } else {
        ++it;
      }
    }

    for (auto it = state->points.begin(); it != state->points.end();) {
      PointLandmark& point = it->second;
      bool keep = observed_points.contains(it->first);
      if (keep && point.host_frame == dropped.id) {
        // Move the anchor to the earliest remaining observation.
        const PointObservation* first = nullptr;
        int first_index = 0;
        for (const PointObservation& o : window_obs->points) {
          if (o.feature_id != it->first) continue;
          const int idx = state->FrameIndex(o.frame_id);
          if (idx >= 0 && (first == nullptr || idx < first_index)) {
            first = &o;
            first_index = idx;
          }
        }
        keep = first != nullptr;
        if (keep) {
          const Vec3 world = dropped_pose.Apply(point.host_uv.homogeneous() / point.inverse_depth);
          const Vec3 cam = state->frames[first_index].pose.Inverse().Apply(world);
          keep = cam.z() > 1e-6;
          if (keep) {
            point.host_frame = first->frame_id;
            point.host_uv = first->uv;
            point.inverse_depth = 1.0 / cam.z();
          }
        }
      }
      if (!keep) {
        result.removed_points.push_back(it->first);
        it = state->points.erase(it);
      } else {
        ++it;
      }
    }
  }
  state->frames.push_back(new_frame);
  return result;
}

}  // namespace plslam
