#include "plslam/estimator.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "plslam/error.h"

namespace plslam {

namespace {

// Depth (camera z) at which the viewing ray of `uv` passes closest to `line`.
double RayLineDepth(const CameraPose& pose, const Vec2& uv, const PluckerLine& line) {
  const Vec3 ray = pose.rotation * uv.homogeneous();
  const Vec3 u = line.d.normalized();
  const Vec3 w = pose.translation - line.ClosestPointToOrigin();
  const double b = ray.dot(u);
  const double denom = ray.squaredNorm() - b * b;
  if (denom < 1e-12) return std::numeric_limits<double>::quiet_NaN();
  // Minimize |c + a ray - (p0 + s u)| over (a, s).
  return (b * w.dot(u) - w.dot(ray)) / denom;
}

double RayAngle(const Vec2& uv_i, const CameraPose& pose_i, const Vec2& uv_j,
                const CameraPose& pose_j) {
  const Vec3 a = pose_i.rotation * uv_i.homogeneous();
  const Vec3 b = pose_j.rotation * uv_j.homogeneous();
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

}  // namespace

SlidingWindowEstimator::SlidingWindowEstimator(EstimatorConfig config)
    : config_(std::move(config)) {
  if (config_.problem.window_size < 2 || config_.prior_sigma_t <= 0.0 ||
      config_.prior_sigma_r_deg <= 0.0 || config_.max_points < 0) {
    throw Error(ErrorCode::kInvalidConfig, "invalid estimator configuration");
  }
}

void SlidingWindowEstimator::RecordLine(FeatureId id, const OrthonormalLine& line) {
  LineEstimate est;
  est.id = id;
  est.line = line;
  est.degenerate = degenerate_.contains(id) && degenerate_.at(id);
  est.observations = line_observations_.contains(id) ? line_observations_.at(id) : 0;
  est.fallback_init = fallback_init_.contains(id) && fallback_init_.at(id);
  final_lines_[id] = est;
}

void SlidingWindowEstimator::AddFrame(const FrameInput& frame) {
  if (!state_.frames.empty() && frame.id <= state_.frames.back().id) {
    throw Error(ErrorCode::kInvalidConfig, "frames must arrive with increasing ids");
  }
  FrameState fs;
  fs.id = frame.id;
  fs.pose = frame.prior;
  fs.prior = frame.prior;
  fs.prior_sqrt_information.setZero();
  fs.prior_sqrt_information.diagonal().head<3>().setConstant(1.0 / config_.prior_sigma_t);
  fs.prior_sqrt_information.diagonal().tail<3>().setConstant(
      1.0 / (config_.prior_sigma_r_deg * kDegToRad));

  const auto lines_before = state_.lines;
  const ShiftResult shift =
      MarginalizeShift(&state_, &window_obs_, fs, config_.problem.window_size, LineMarginalizationOptions());
  if (shift.dropped) final_poses_[shift.dropped->id] = shift.dropped->pose;
  for (FeatureId id : shift.removed_lines) RecordLine(id, lines_before.at(id));

  for (LineObservation obs : frame.lines) {
    obs.frame_id = frame.id;
    window_obs_.lines.push_back(obs);
    ++line_observations_[obs.feature_id];
  }
  for (PointObservation obs : frame.points) {
    obs.frame_id = frame.id;
    window_obs_.points.push_back(obs);
  }

  if (state_.frames.size() < 2) return;

  if (config_.problem.use_points) InitializePoints();
  if (config_.problem.use_lines) InitializeLines();
  groups_.clear();
  if (config_.problem.use_lines && config_.detect_degeneracy) {
    ClassifyLines();
    SeedGroupedLines();
  }

  const WindowProblem problem = BuildProblem(window_obs_, state_, groups_, config_.problem);
  SolveResult result = Solve(problem, config_.solver);
  state_ = std::move(result.state);
  reports_.push_back(result.report);
  PrunePoints();
  PruneLines();
}

void SlidingWindowEstimator::Finish() {
  for (const FrameState& f : state_.frames) final_poses_[f.id] = f.pose;
  for (const auto& [id, line] : state_.lines) RecordLine(id, line);
}

void SlidingWindowEstimator::InitializePoints() {
  std::map<FeatureId, std::vector<const PointObservation*>> by_id;
  for (const PointObservation& o : window_obs_.points) by_id[o.feature_id].push_back(&o);

  const double min_parallax = config_.min_point_parallax_deg * kDegToRad;
  for (const auto& [id, obs] : by_id) {
    if (static_cast<int>(state_.points.size()) >= config_.max_points) break;
    if (state_.points.contains(id) || obs.size() < 2) continue;
    const PointObservation* host = obs.front();
    const int host_index = state_.FrameIndex(host->frame_id);
    // Partner with the widest viewing-ray angle.
    const PointObservation* best = nullptr;
    double best_angle = 0.0;
    for (std::size_t k = 1; k < obs.size(); ++k) {
      const int idx = state_.FrameIndex(obs[k]->frame_id);
      const double angle = RayAngle(host->uv, state_.frames[host_index].pose, obs[k]->uv,
                                    state_.frames[idx].pose);
      if (angle > best_angle) {
        best_angle = angle;
        best = obs[k];
      }
    }
    if (best == nullptr || best_angle < min_parallax) continue;
    const double depth =
        TriangulatePointDepth(host->uv, state_.frames[host_index].pose, best->uv,
                              state_.frames[state_.FrameIndex(best->frame_id)].pose);
    if (!(depth > config_.min_depth && depth < config_.max_depth)) continue;
    state_.points[id] = PointLandmark{host->frame_id, host->uv, 1.0 / depth};
  }
}

void SlidingWindowEstimator::InitializeLines() {
  std::map<FeatureId, std::vector<const LineObservation*>> by_id;
  for (const LineObservation& o : window_obs_.lines) by_id[o.feature_id].push_back(&o);

  for (const auto& [id, obs] : by_id) {
    // Fallback seeds are retried until a two-view triangulation succeeds.
    const bool retry = fallback_init_.contains(id) && fallback_init_.at(id);
    if (state_.lines.contains(id) && !retry) continue;
    if (static_cast<int>(obs.size()) < config_.problem.min_tracked_frames) continue;
    const LineObservation& first = *obs.front();
    const LineObservation& last = *obs.back();
    const CameraPose& pose_i = state_.frames[state_.FrameIndex(first.frame_id)].pose;
    const CameraPose& pose_j = state_.frames[state_.FrameIndex(last.frame_id)].pose;

    auto depth_ok = [&](const PluckerLine& l) {
      for (const auto& [o, pose] : {std::pair{&first, &pose_i}, std::pair{&last, &pose_j}}) {
        for (const Vec2& uv : {o->s2(), o->e2()}) {
          const double z = RayLineDepth(*pose, uv, l);
          if (!(z > config_.min_depth && z <= config_.max_depth)) return false;
        }
      }
      return true;
    };

    std::optional<OrthonormalLine> line;
    bool fallback = false;
    try {
      const PluckerLine l = TriangulateLine(first, pose_i, last, pose_j, config_.triangulation);
      if (depth_ok(l)) line = PluckerToOrthonormal(l);
    } catch (const Error&) {
    }
    if (retry) {
      if (line) {
        state_.lines[id] = *line;
        state_.line_priors.erase(id);
        fallback_init_[id] = false;
      }
      continue;
    }
    if (!line) {
      // Back-project the first observation onto a fronto-parallel plane.
      const double z = config_.fallback_depth;
      try {
        line = PluckerToOrthonormal(
            PluckerFromTwoPoints(pose_i.Apply(first.s * z), pose_i.Apply(first.e * z)));
        fallback = true;
      } catch (const Error&) {
        continue;
      }
    }
    state_.lines[id] = *line;
    fallback_init_[id] = fallback;
  }
}

void SlidingWindowEstimator::ClassifyLines() {
  std::vector<CameraPose> poses;
  for (const FrameState& f : state_.frames) poses.push_back(f.pose);
  const Vec3 dominant = DominantBaseline(poses);

  std::map<FeatureId, std::pair<const LineObservation*, const LineObservation*>> span;
  for (const LineObservation& o : window_obs_.lines) {
    if (!state_.lines.contains(o.feature_id)) continue;
    auto [it, inserted] = span.try_emplace(o.feature_id, &o, &o);
    if (!inserted) it->second.second = &o;
  }

  std::vector<DegeneracyVerdict> verdicts;
  for (const auto& [id, ends] : span) {
    const auto& [first, last] = ends;
    if (first == last) continue;
    const CameraPose& pose_i = state_.frames[state_.FrameIndex(first->frame_id)].pose;
    const CameraPose& pose_j = state_.frames[state_.FrameIndex(last->frame_id)].pose;
    DegeneracyVerdict v = ClassifyPair(*last, pose_i, pose_j, dominant, config_.degeneracy);
    v.feature_id = id;
    v.image_drift = ImageLineDrift(*first, pose_i, *last, pose_j);
    degenerate_[id] = v.degenerate;
    verdicts.push_back(v);
  }
  groups_ = GroupParallel(verdicts, config_.degeneracy);
}

// A grouped line far from its group direction is re-seeded along the
// baseline inside its latest observation plane, at the depth its current
// estimate gives along the segment midpoint. At 90 degrees from the baseline
// the parallel residual has no gradient that would rotate the line back.
void SlidingWindowEstimator::SeedGroupedLines() {
  const double cos_limit = std::cos(config_.degeneracy.group_angle);
  std::map<FeatureId, const LineObservation*> latest;
  for (const LineObservation& o : window_obs_.lines) latest[o.feature_id] = &o;

  for (const ParallelGroup& g : groups_) {
    const Vec3 b = g.baseline_dir.normalized();
    for (FeatureId id : g.member_ids) {
      const PluckerLine current = OrthonormalToPlucker(state_.lines.at(id));
      if (std::abs(current.d.normalized().dot(b)) >= cos_limit) continue;
      const LineObservation& obs = *latest.at(id);
      const CameraPose& pose = state_.frames[state_.FrameIndex(obs.frame_id)].pose;

      const Vec3 normal = (pose.rotation * obs.line()).normalized();
      const Vec3 dir = b - b.dot(normal) * normal;
      if (dir.norm() < 1e-6) continue;
      double depth = RayLineDepth(pose, obs.midpoint(), current);
      if (!(depth > config_.min_depth && depth < config_.max_depth)) depth = config_.fallback_depth;
      const Vec3 p = pose.Apply(Vec3(obs.midpoint().homogeneous()) * depth);
      try {
        state_.lines[id] = PluckerToOrthonormal(PluckerFromTwoPoints(p, p + dir.normalized()));
      } catch (const Error&) {
        continue;
      }
      state_.line_priors.erase(id);
    }
  }
}

void SlidingWindowEstimator::PrunePoints() {
  for (auto it = state_.points.begin(); it != state_.points.end();) {
    const double lambda = it->second.inverse_depth;
    if (!(lambda >= 1.0 / config_.max_depth && lambda <= 1.0 / config_.min_depth)) {
      it = state_.points.erase(it);
    } else {
      ++it;
    }
  }
}

LineMarginalization SlidingWindowEstimator::LineMarginalizationOptions() const {
  LineMarginalization m;
  m.enabled = config_.marginalize_lines && config_.problem.use_lines;
  m.line_sigma = config_.problem.line_sigma;
  m.huber_delta = config_.problem.huber_delta;
  m.min_tracked_frames = config_.problem.min_tracked_frames;
  return m;
}

void SlidingWindowEstimator::PruneLines() {
  for (auto it = state_.lines.begin(); it != state_.lines.end();) {
    const PluckerLine world = OrthonormalToPlucker(it->second);
    bool valid = world.d.norm() > 0.0;
    for (const FrameState& f : state_.frames) {
      if (!valid) break;
      const PluckerLine cam = WorldLineToCamera(world, f.pose);
      const double distance = cam.n.norm() / cam.d.norm();
      valid = distance >= config_.min_depth && distance <= config_.max_depth;
    }
    if (!valid) state_.line_priors.erase(it->first);
    it = valid ? std::next(it) : state_.lines.erase(it);
  }
}

}  // namespace plslam
