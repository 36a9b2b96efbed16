#include "plslam/scene_sim.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <random>

#include "plslam/error.h"

namespace plslam {

namespace {

constexpr double kNear = 0.05;  // m, camera near plane

enum Stream : std::uint64_t { kSceneStream = 1, kRenderStream = 2, kPriorStream = 3, kFlowStream = 4 };

std::mt19937_64 MakeRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t a = 0,
                        std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(a),
                    static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

double Uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double Gaussian(std::mt19937_64& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

int PickWeighted(std::mt19937_64& rng, const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (total <= 0.0) return -1;
  double r = Uniform(rng, 0.0, total);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    if (r < weights[i]) return static_cast<int>(i);
    r -= weights[i];
  }
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return static_cast<int>(i);
  }
  return -1;
}

bool InPlane(const SurfaceSpec& s, const Vec3& dir) { return std::abs(s.normal().dot(dir)) < 1e-6; }

bool InsideRect(const SurfaceSpec& s, const Vec3& p) {
  const Vec3 q = p - s.origin;
  const double a = q.dot(s.u_axis);
  const double b = q.dot(s.v_axis);
  return a >= -1e-12 && a <= s.u_extent + 1e-12 && b >= -1e-12 && b <= s.v_extent + 1e-12;
}

Vec3 SamplePoint(std::mt19937_64& rng, const SurfaceSpec& s) {
  const double a = Uniform(rng, 0.0, s.u_extent);
  const double b = Uniform(rng, 0.0, s.v_extent);
  return s.origin + a * s.u_axis + b * s.v_axis;
}

std::vector<CameraPose> BuildTrajectory(const TrajectorySpec& spec) {
  const Vec3 f = spec.forward.normalized();
  const Vec3 r = f.cross(spec.up).normalized();
  const Vec3 d = f.cross(r);
  Mat3 r0;
  r0.col(0) = r;
  r0.col(1) = d;
  r0.col(2) = f;

  std::vector<CameraPose> poses;
  Vec3 position = spec.start;
  double yaw = 0.0;
  poses.push_back({r0, position});
  for (const TrajectoryLeg& leg : spec.legs) {
    for (int k = 1; k <= leg.frames; ++k) {
      position += leg.translation / leg.frames;
      yaw += leg.yaw_deg * kDegToRad / leg.frames;
      poses.push_back({RotationZ(yaw) * r0, position});
    }
  }
  return poses;
}

std::vector<Vec3> LegDirections(const TrajectorySpec& spec) {
  std::vector<Vec3> dirs;
  for (const TrajectoryLeg& leg : spec.legs) {
    if (leg.translation.norm() < 1e-9) continue;
    const Vec3 dir = CanonicalDirection(leg.translation.normalized());
    const bool seen = std::any_of(dirs.begin(), dirs.end(),
                                  [&](const Vec3& v) { return std::abs(v.dot(dir)) > 0.999; });
    if (!seen) dirs.push_back(dir);
  }
  return dirs;
}

// Rejects a candidate that would sit on top of an existing parallel line.
bool TooClose(const GroundTruthLine& cand, const std::vector<GroundTruthLine>& lines,
              double min_separation) {
  for (const GroundTruthLine& l : lines) {
    if (l.surface != cand.surface || std::abs(l.direction.dot(cand.direction)) < 0.999) continue;
    const Vec3 offset = cand.p0 - l.p0;
    const double perp = (offset - offset.dot(l.direction) * l.direction).norm();
    if (perp >= min_separation) continue;
    const double a0 = 0.0;
    const double a1 = (l.p1 - l.p0).dot(l.direction);
    const double b0 = (cand.p0 - l.p0).dot(l.direction);
    const double b1 = (cand.p1 - l.p0).dot(l.direction);
    if (std::min(a1, std::max(b0, b1)) > std::max(a0, std::min(b0, b1))) return true;
  }
  return false;
}

struct CameraSegment {
  FeatureId id = kInvalidFeature;
  Vec3 a, b;     // camera-frame endpoints in front of the near plane
  Vec2 pa, pb;   // projections, clipped to the image
};

std::optional<CameraSegment> VisibleSegment(const GroundTruthLine& line, const CameraPose& pose,
                                            const CameraIntrinsics& k) {
  const CameraPose inv = pose.Inverse();
  Vec3 a = inv.Apply(line.p0);
  Vec3 b = inv.Apply(line.p1);
  if (a.z() < kNear && b.z() < kNear) return std::nullopt;
  if (a.z() < kNear) a = b + (kNear - b.z()) / (a.z() - b.z()) * (a - b);
  if (b.z() < kNear) b = a + (kNear - a.z()) / (b.z() - a.z()) * (b - a);
  const Vec2 pa = a.head<2>() / a.z();
  const Vec2 pb = b.head<2>() / b.z();
  const auto clipped = ClipSegment(pa, pb, k.NormalizedMin(), k.NormalizedMax());
  if (!clipped || (clipped->second - clipped->first).norm() < 1e-9) return std::nullopt;
  return CameraSegment{line.id, a, b, clipped->first, clipped->second};
}

double BorderDistance(const Vec2& p, const CameraIntrinsics& k) {
  const Vec2 lo = k.NormalizedMin();
  const Vec2 hi = k.NormalizedMax();
  return std::min({p.x() - lo.x(), hi.x() - p.x(), p.y() - lo.y(), hi.y() - p.y()});
}

}  // namespace

GroundTruth GenerateScene(const SceneConfig& config) {
  config.Validate();
  GroundTruth gt;
  gt.config = config;
  gt.poses = BuildTrajectory(config.trajectory);
  for (std::size_t k = 0; k < gt.poses.size(); ++k) {
    gt.timestamps.push_back(static_cast<double>(k) / config.frame_rate);
  }
  gt.leg_directions = LegDirections(config.trajectory);

  std::mt19937_64 rng = MakeRng(config.seed, kSceneStream);
  std::vector<double> areas;
  for (const SurfaceSpec& s : config.surfaces) areas.push_back(s.area());

  auto surfaces_with = [&](const Vec3& dir) {
    std::vector<double> w(config.surfaces.size(), 0.0);
    for (std::size_t i = 0; i < config.surfaces.size(); ++i) {
      if (InPlane(config.surfaces[i], dir)) w[i] = areas[i];
    }
    return w;
  };

  // Axis weights for non-parallel lines: world axes not along any leg and
  // lying in at least one surface.
  std::vector<double> axis_weights(3, 0.0);
  for (int a = 0; a < 3; ++a) {
    const Vec3 axis = Vec3::Unit(a);
    const bool along_leg = std::any_of(gt.leg_directions.begin(), gt.leg_directions.end(),
                                       [&](const Vec3& v) { return std::abs(v.dot(axis)) > 0.999; });
    const auto w = surfaces_with(axis);
    const bool placeable = std::any_of(w.begin(), w.end(), [](double x) { return x > 0.0; });
    if (!along_leg && placeable) axis_weights[a] = config.direction_mix[a];
  }
  std::vector<double> leg_weights;
  for (const Vec3& dir : gt.leg_directions) {
    const auto w = surfaces_with(dir);
    leg_weights.push_back(std::any_of(w.begin(), w.end(), [](double x) { return x > 0.0; }) ? 1.0
                                                                                           : 0.0);
  }

  for (int i = 0; i < config.line_count; ++i) {
    const bool want_parallel = Uniform(rng, 0.0, 1.0) < config.parallel_fraction;
    int leg = want_parallel ? PickWeighted(rng, leg_weights) : -1;
    Vec3 dir;
    if (leg >= 0) {
      dir = gt.leg_directions[leg];
    } else {
      const int axis = PickWeighted(rng, axis_weights);
      if (axis < 0) {
        leg = PickWeighted(rng, leg_weights);
        if (leg < 0) {
          throw Error(ErrorCode::kInvalidConfig, "no line direction fits any surface");
        }
        dir = gt.leg_directions[leg];
      } else {
        dir = Vec3::Unit(axis);
      }
    }
    const int surface = PickWeighted(rng, surfaces_with(dir));
    const SurfaceSpec& s = config.surfaces[surface];

    GroundTruthLine line;
    line.id = i;
    line.surface = surface;
    line.direction = dir;
    line.parallel_to_motion = std::any_of(
        gt.leg_directions.begin(), gt.leg_directions.end(),
        [&](const Vec3& v) { return std::abs(v.dot(dir)) > 0.999; });

    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      double length = Uniform(rng, config.min_line_length, config.max_line_length);
      // Keep the segment within the surface's extent along its direction.
      const double span = std::abs(dir.dot(s.u_axis)) * s.u_extent +
                          std::abs(dir.dot(s.v_axis)) * s.v_extent;
      length = std::min(length, 0.95 * span);
      const Vec3 center = SamplePoint(rng, s);
      line.p0 = center - 0.5 * length * dir;
      line.p1 = center + 0.5 * length * dir;
      placed = InsideRect(s, line.p0) && InsideRect(s, line.p1) &&
               !TooClose(line, gt.lines, config.min_line_separation);
    }
    if (!placed) continue;
    gt.lines.push_back(line);
  }

  std::mt19937_64 point_rng = MakeRng(config.seed, kSceneStream, 1);
  for (int i = 0; i < config.point_count; ++i) {
    const int surface = PickWeighted(point_rng, areas);
    gt.points.push_back({i, SamplePoint(point_rng, config.surfaces[surface])});
  }
  return gt;
}

RenderedFrame RenderFrame(const GroundTruth& gt, FrameId frame_id, const NoiseSpec& noise) {
  if (frame_id < 0 || frame_id >= static_cast<FrameId>(gt.poses.size())) {
    throw Error(ErrorCode::kInvalidConfig, "frame id outside the trajectory");
  }
  RenderedFrame frame;
  frame.frame_id = frame_id;
  const CameraIntrinsics& k = gt.config.intrinsics;
  const CameraPose& pose = gt.poses[frame_id];
  std::mt19937_64 rng = MakeRng(gt.config.seed, kRenderStream, static_cast<std::uint64_t>(frame_id));

  auto emit = [&](FeatureId truth, const Vec2& a, const Vec2& b) {
    LineObservation obs = LineObservation::FromPoints(a, b, kInvalidFeature, frame_id);
    frame.lines.push_back(obs);
    frame.line_truth.push_back(truth);
  };

  for (const GroundTruthLine& line : gt.lines) {
    // Every line consumes the same draws whether or not it is visible or
    // perturbed, so changing one noise knob leaves the others' samples intact.
    const double u_cut = Uniform(rng, 0.0, 1.0);
    const double cut_fraction = Uniform(rng, 0.3, 0.6);
    const double u_split = Uniform(rng, 0.0, 1.0);
    const double split_at = Uniform(rng, 0.3, 0.6);
    double n[8];
    for (double& v : n) v = Gaussian(rng);

    const auto seg = VisibleSegment(line, pose, k);
    if (!seg) continue;
    Vec2 a = seg->pa;
    Vec2 b = seg->pb;

    if (u_cut < noise.cut_p) {
      if (BorderDistance(a, k) <= BorderDistance(b, k)) {
        a = a + cut_fraction * (b - a);
      } else {
        b = b + cut_fraction * (a - b);
      }
    }

    const double sigma = noise.endpoint_sigma;
    if (u_split < noise.split_p) {
      constexpr double kGap = 0.1;
      const Vec2 m0 = a + (split_at - 0.5 * kGap) * (b - a);
      const Vec2 m1 = a + (split_at + 0.5 * kGap) * (b - a);
      emit(line.id, a + sigma * Vec2(n[0], n[1]), m0 + sigma * Vec2(n[2], n[3]));
      emit(line.id, m1 + sigma * Vec2(n[4], n[5]), b + sigma * Vec2(n[6], n[7]));
    } else {
      emit(line.id, a + sigma * Vec2(n[0], n[1]), b + sigma * Vec2(n[2], n[3]));
    }
  }

  const CameraPose inv = pose.Inverse();
  for (const GroundTruthPoint& p : gt.points) {
    const double nx = Gaussian(rng);
    const double ny = Gaussian(rng);
    const Vec3 c = inv.Apply(p.position);
    if (c.z() < kNear) continue;
    const Vec2 uv = c.head<2>() / c.z();
    if (!k.InImage(uv)) continue;
    frame.points.push_back({uv + noise.point_sigma * Vec2(nx, ny), p.id, frame_id});
  }
  return frame;
}

FlowField ExactFlow(const GroundTruth& gt, FrameId frame_i, FrameId frame_j, double flow_sigma) {
  const auto n = static_cast<FrameId>(gt.poses.size());
  if (frame_i < 0 || frame_i >= n || frame_j < 0 || frame_j >= n) {
    throw Error(ErrorCode::kInvalidConfig, "frame id outside the trajectory");
  }
  const CameraPose pose_i = gt.poses[frame_i];
  const CameraPose pose_j = gt.poses[frame_j];
  const CameraPose j_from_i = pose_j.Inverse() * pose_i;
  const bool identity = pose_i.rotation == pose_j.rotation &&
                        pose_i.translation == pose_j.translation;

  struct PointDepth {
    Vec2 uv;
    Vec3 cam;
  };
  auto segments = std::make_shared<std::vector<CameraSegment>>();
  auto points = std::make_shared<std::vector<PointDepth>>();
  for (const GroundTruthLine& line : gt.lines) {
    if (auto seg = VisibleSegment(line, pose_i, gt.config.intrinsics)) segments->push_back(*seg);
  }
  const CameraPose inv_i = pose_i.Inverse();
  for (const GroundTruthPoint& p : gt.points) {
    const Vec3 c = inv_i.Apply(p.position);
    if (c.z() >= kNear) points->push_back({c.head<2>() / c.z(), c});
  }
  auto rng = std::make_shared<std::mt19937_64>(
      MakeRng(gt.config.seed, kFlowStream, static_cast<std::uint64_t>(frame_i),
              static_cast<std::uint64_t>(frame_j)));

  return FlowField([=](const Vec2& p) -> std::optional<Vec2> {
    constexpr double kLineGate = 0.02;
    constexpr double kPointGate = 0.01;
    const Vec3 ray = p.homogeneous();

    double best = std::numeric_limits<double>::infinity();
    std::optional<Vec3> cam;
    for (const CameraSegment& seg : *segments) {
      const Vec2 d2 = seg.pb - seg.pa;
      const double t = std::clamp((p - seg.pa).dot(d2) / d2.squaredNorm(), 0.0, 1.0);
      const double dist = (seg.pa + t * d2 - p).norm();
      if (dist >= kLineGate || dist >= best) continue;
      // Closest approach between the query ray and the 3D line.
      const Vec3 u = seg.b - seg.a;
      Eigen::Matrix<double, 3, 2> m;
      m.col(0) = ray;
      m.col(1) = -u;
      const Eigen::Vector2d ab = m.colPivHouseholderQr().solve(seg.a);
      if (!(ab[0] > kNear)) continue;
      best = dist;
      cam = ab[0] * ray;
    }
    for (const PointDepth& pd : *points) {
      const double dist = (pd.uv - p).norm();
      if (dist < kPointGate && dist < best) {
        best = dist;
        cam = pd.cam.z() * ray;
      }
    }
    if (!cam) return std::nullopt;
    if (identity) return p;
    const Vec3 cj = j_from_i.Apply(*cam);
    if (cj.z() < kNear) return std::nullopt;
    Vec2 out = cj.head<2>() / cj.z();
    if (flow_sigma > 0.0) {
      const double nx = Gaussian(*rng);
      const double ny = Gaussian(*rng);
      out += flow_sigma * Vec2(nx, ny);
    }
    return out;
  });
}

CameraPose NoisyPosePrior(const GroundTruth& gt, FrameId frame_id, const NoiseSpec& noise) {
  const CameraPose& truth = gt.poses.at(static_cast<std::size_t>(frame_id));
  std::mt19937_64 rng = MakeRng(gt.config.seed, kPriorStream, static_cast<std::uint64_t>(frame_id));
  Eigen::Matrix<double, 6, 1> delta;
  for (int i = 0; i < 3; ++i) delta[i] = noise.prior_sigma_t * Gaussian(rng);
  for (int i = 3; i < 6; ++i) delta[i] = noise.prior_sigma_r_deg * kDegToRad * Gaussian(rng);
  return truth.Retract(delta);
}

}  // namespace plslam
