#include "plslam/degeneracy.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <Eigen/Eigenvalues>

namespace plslam {

bool IsPureTranslation(const CameraPose& pose_i, const CameraPose& pose_j, double rot_threshold,
                       double eps_baseline) {
  if (Baseline(pose_i, pose_j) < eps_baseline) return false;
  return RotationAngle(pose_i.rotation.transpose() * pose_j.rotation) < rot_threshold;
}

DegeneracyVerdict ClassifyObservation(const LineObservation& obs, const Vec3& epipole,
                                      const DegeneracyConfig& config) {
  DegeneracyVerdict verdict;
  verdict.feature_id = obs.feature_id;

  const Vec2 dir = obs.e2() - obs.s2();
  // Direction from the midpoint towards the epipole; valid for finite and
  // infinite epipoles alike (scaled by the epipole's third component).
  const Vec2 to_epipole = epipole.head<2>() - epipole.z() * obs.midpoint();
  const double denom = dir.norm() * to_epipole.norm();
  if (denom <= 1e-15) {
    verdict.alignment_angle = 0.0;
  } else {
    const double c = std::clamp(std::abs(dir.dot(to_epipole)) / denom, 0.0, 1.0);
    verdict.alignment_angle = std::acos(c);
  }

  const Vec3 l = obs.line();
  const double l_norm = l.head<2>().norm();
  if (epipole.z() == 0.0 || l_norm == 0.0) {
    verdict.epipole_distance = std::numeric_limits<double>::infinity();
  } else {
    verdict.epipole_distance = std::abs(l.dot(epipole)) / (std::abs(epipole.z()) * l_norm);
  }
  if (epipole.z() != 0.0 && dir.squaredNorm() > 0.0) {
    const Vec2 e = epipole.head<2>() / epipole.z();
    const double t = (e - obs.s2()).dot(dir) / dir.squaredNorm();
    verdict.straddles_epipole = t > 0.0 && t < 1.0;
  }

  verdict.degenerate = verdict.alignment_angle < config.angle_threshold ||
                       verdict.epipole_distance < config.dist_threshold;
  return verdict;
}

DegeneracyVerdict ClassifyPair(const LineObservation& obs_j, const CameraPose& pose_i,
                               const CameraPose& pose_j, const Vec3& dominant_baseline,
                               const DegeneracyConfig& config) {
  const Vec3 delta = pose_i.translation - pose_j.translation;
  if (delta.norm() < config.eps_baseline) {
    DegeneracyVerdict verdict;
    verdict.feature_id = obs_j.feature_id;
    verdict.epipole_distance = std::numeric_limits<double>::infinity();
    verdict.alignment_angle = std::numbers::pi / 2.0;
    return verdict;
  }

  Vec3 baseline = delta.normalized();
  Vec3 epipole = pose_j.rotation.transpose() * delta;
  if (IsPureTranslation(pose_i, pose_j, config.rot_threshold, config.eps_baseline) &&
      dominant_baseline.squaredNorm() > 0.0) {
    // The vanishing point of the motion direction; a zero third component
    // puts it at infinity on the image plane.
    baseline = dominant_baseline.normalized();
    if (baseline.dot(delta) < 0.0) baseline = -baseline;
    epipole = pose_j.rotation.transpose() * baseline;
  }
  DegeneracyVerdict verdict = ClassifyObservation(obs_j, epipole, config);
  verdict.baseline_dir = CanonicalDirection(baseline);
  return verdict;
}

double ImageLineDrift(const LineObservation& obs_i, const CameraPose& pose_i,
                      const LineObservation& obs_j, const CameraPose& pose_j) {
  const Vec3 l = pose_j.rotation.transpose() * pose_i.rotation * obs_i.line();
  const double norm = l.head<2>().norm();
  if (norm == 0.0) return std::numeric_limits<double>::infinity();
  return std::max(std::abs(l.dot(obs_j.s2().homogeneous())),
                  std::abs(l.dot(obs_j.e2().homogeneous()))) /
         norm;
}

Vec3 CanonicalDirection(const Vec3& v) {
  Eigen::Index idx = 0;
  v.cwiseAbs().maxCoeff(&idx);
  return v[idx] < 0.0 ? Vec3(-v) : v;
}

Vec3 DominantBaseline(std::span<const CameraPose> poses) {
  Mat3 scatter = Mat3::Zero();
  for (std::size_t k = 1; k < poses.size(); ++k) {
    const Vec3 step = poses[k].translation - poses[k - 1].translation;
    scatter += step * step.transpose();
  }
  if (scatter.trace() <= 0.0) return Vec3::Zero();
  Eigen::SelfAdjointEigenSolver<Mat3> solver(scatter);
  return CanonicalDirection(solver.eigenvectors().col(2).normalized());
}

std::vector<ParallelGroup> GroupParallel(std::span<const DegeneracyVerdict> verdicts,
                                         const DegeneracyConfig& config) {
  // Best verdict per feature: a feature joins at most one group.
  std::map<FeatureId, const DegeneracyVerdict*> best;
  for (const DegeneracyVerdict& v : verdicts) {
    if (!v.degenerate || v.alignment_angle >= config.angle_threshold) continue;
    if (v.straddles_epipole || v.image_drift > config.stationary_threshold) continue;
    if (v.baseline_dir.squaredNorm() == 0.0) continue;
    auto [it, inserted] = best.emplace(v.feature_id, &v);
    if (!inserted && v.alignment_angle < it->second->alignment_angle) it->second = &v;
  }

  const double cos_merge = std::cos(config.group_angle);
  std::vector<ParallelGroup> clusters;
  for (const auto& [id, verdict] : best) {
    const Vec3 dir = verdict->baseline_dir.normalized();
    auto match = std::find_if(clusters.begin(), clusters.end(), [&](const ParallelGroup& g) {
      return std::abs(g.baseline_dir.dot(dir)) >= cos_merge;
    });
    if (match == clusters.end()) {
      clusters.push_back({{id}, dir});
    } else {
      match->member_ids.push_back(id);
    }
  }

  std::vector<ParallelGroup> groups;
  for (ParallelGroup& g : clusters) {
    if (g.member_ids.size() >= 2) groups.push_back(std::move(g));
  }
  return groups;
}

}  // namespace plslam
