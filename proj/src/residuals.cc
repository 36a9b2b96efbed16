#include "plslam/residuals.h"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include <ceres/jet.h>

#include "plslam/error.h"

namespace plslam {

namespace {

template <int N>
using Jet = ceres::Jet<double, N>;

template <int N>
void SeedJets(Jet<N>* jets, int count, int offset) {
  for (int i = 0; i < count; ++i) jets[i] = Jet<N>(0.0, offset + i);
}

template <int N, int R>
void CopyJets(const Eigen::Matrix<Jet<N>, R, 1>& r, double weight, BlockEvaluation* out) {
  out->residual.resize(R);
  out->jacobian.resize(R, N);
  for (int i = 0; i < R; ++i) {
    out->residual[i] = weight * r[i].a;
    out->jacobian.row(i) = weight * r[i].v.transpose();
  }
}

template <int R>
void CopyValues(const Eigen::Matrix<double, R, 1>& r, double weight, BlockEvaluation* out) {
  out->residual = weight * r;
}

BlockEvaluation EvaluateLine(const ResidualBlock& block, const WindowState& state,
                             bool with_jacobian) {
  BlockEvaluation ev;
  const int frame = block.frames[0];
  const auto it = state.lines.find(block.landmarks[0]);
  if (frame < 0 || frame >= static_cast<int>(state.frames.size()) || it == state.lines.end()) {
    return ev;
  }
  const CameraPose& pose = state.frames[frame].pose;
  ev.params = {ParamRef{ParamType::kPose, frame}, ParamRef{ParamType::kLine, block.landmarks[0]},
               ParamRef{}};
  ev.num_params = 2;

  const double zeros[6] = {0, 0, 0, 0, 0, 0};
  const Eigen::Vector2d value =
      LineReprojectionT<double>(pose, it->second, block.s, block.e, zeros, zeros);
  if (!value.allFinite()) return ev;
  if (with_jacobian) {
    Jet<10> dpose[6], dline[4];
    SeedJets(dpose, 6, 0);
    SeedJets(dline, 4, 6);
    CopyJets<10, 2>(LineReprojectionT<Jet<10>>(pose, it->second, block.s, block.e, dpose, dline),
                    block.weight, &ev);
  } else {
    CopyValues<2>(value, block.weight, &ev);
  }
  ev.valid = ev.residual.allFinite() && (!with_jacobian || ev.jacobian.allFinite());
  return ev;
}

BlockEvaluation EvaluatePoint(const ResidualBlock& block, const WindowState& state,
                              bool with_jacobian) {
  BlockEvaluation ev;
  const int host = block.frames[0];
  const int target = block.frames[1];
  const int n = static_cast<int>(state.frames.size());
  const auto it = state.points.find(block.landmarks[0]);
  if (host < 0 || host >= n || target < 0 || target >= n || it == state.points.end()) return ev;
  const PointLandmark& point = it->second;
  if (!(point.inverse_depth > 0.0)) return ev;
  const CameraPose& pose_h = state.frames[host].pose;
  const CameraPose& pose_t = state.frames[target].pose;
  ev.params = {ParamRef{ParamType::kPose, host}, ParamRef{ParamType::kPose, target},
               ParamRef{ParamType::kPoint, block.landmarks[0]}};
  ev.num_params = 3;

  const double zeros[6] = {0, 0, 0, 0, 0, 0};
  double depth = 0.0;
  const Eigen::Vector2d value = PointReprojectionT<double>(
      pose_h, pose_t, point.host_uv, block.target_uv, point.inverse_depth, zeros, zeros, zeros,
      &depth);
  if (!(depth > 1e-6) || !value.allFinite()) return ev;

  if (with_jacobian) {
    Jet<13> dh[6], dt[6], dl[1];
    SeedJets(dh, 6, 0);
    SeedJets(dt, 6, 6);
    SeedJets(dl, 1, 12);
    CopyJets<13, 2>(PointReprojectionT<Jet<13>>(pose_h, pose_t, point.host_uv, block.target_uv,
                                                point.inverse_depth, dh, dt, dl, nullptr),
                    block.weight, &ev);
  } else {
    CopyValues<2>(value, block.weight, &ev);
  }
  ev.valid = ev.residual.allFinite() && (!with_jacobian || ev.jacobian.allFinite());
  return ev;
}

BlockEvaluation EvaluateStructural(const ResidualBlock& block, const WindowState& state,
                                   bool with_jacobian) {
  BlockEvaluation ev;
  const auto it_i = state.lines.find(block.landmarks[0]);
  const auto it_j = state.lines.find(block.landmarks[1]);
  if (it_i == state.lines.end() || it_j == state.lines.end()) return ev;
  ev.params = {ParamRef{ParamType::kLine, block.landmarks[0]},
               ParamRef{ParamType::kLine, block.landmarks[1]}, ParamRef{}};
  ev.num_params = 2;
  if (with_jacobian) {
    Jet<8> di[4], dj[4];
    SeedJets(di, 4, 0);
    SeedJets(dj, 4, 4);
    CopyJets<8, 3>(StructuralT<Jet<8>>(it_i->second, it_j->second, di, dj), block.weight, &ev);
  } else {
    const double zeros[4] = {0, 0, 0, 0};
    CopyValues<3>(StructuralT<double>(it_i->second, it_j->second, zeros, zeros), block.weight,
                  &ev);
  }
  ev.valid = ev.residual.allFinite();
  return ev;
}

BlockEvaluation EvaluatePrior(const ResidualBlock& block, const WindowState& state,
                              bool with_jacobian) {
  BlockEvaluation ev;
  const int frame = block.frames[0];
  if (frame < 0 || frame >= static_cast<int>(state.frames.size())) return ev;
  const FrameState& f = state.frames[frame];
  ev.params = {ParamRef{ParamType::kPose, frame}, ParamRef{}, ParamRef{}};
  ev.num_params = 1;
  if (with_jacobian) {
    Jet<6> dp[6];
    SeedJets(dp, 6, 0);
    CopyJets<6, 6>(PosePriorT<Jet<6>>(f.pose, f.prior, f.prior_sqrt_information, dp),
                   block.weight, &ev);
  } else {
    const double zeros[6] = {0, 0, 0, 0, 0, 0};
    CopyValues<6>(PosePriorT<double>(f.pose, f.prior, f.prior_sqrt_information, zeros),
                  block.weight, &ev);
  }
  ev.valid = ev.residual.allFinite();
  return ev;
}

BlockEvaluation EvaluateLinePrior(const ResidualBlock& block, const WindowState& state,
                                  bool with_jacobian) {
  BlockEvaluation ev;
  const auto it = state.lines.find(block.landmarks[0]);
  const auto prior = state.line_priors.find(block.landmarks[0]);
  if (it == state.lines.end() || prior == state.line_priors.end()) return ev;
  ev.params = {ParamRef{ParamType::kLine, block.landmarks[0]}, ParamRef{}, ParamRef{}};
  ev.num_params = 1;
  const AlignedLineMean mean = AlignLineMean(prior->second.mean, it->second);
  if (with_jacobian) {
    Jet<4> dl[4];
    SeedJets(dl, 4, 0);
    CopyJets<4, 4>(LinePriorT<Jet<4>>(it->second, mean, prior->second.sqrt_information, dl),
                   block.weight, &ev);
  } else {
    const double zeros[4] = {0, 0, 0, 0};
    CopyValues<4>(LinePriorT<double>(it->second, mean, prior->second.sqrt_information, zeros),
                  block.weight, &ev);
  }
  ev.valid = ev.residual.allFinite() && (!with_jacobian || ev.jacobian.allFinite());
  return ev;
}

}  // namespace

int WindowState::FrameIndex(FrameId id) const {
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].id == id) return static_cast<int>(i);
  }
  return -1;
}

double RobustLoss::Rho(double s) const {
  if (kind == LossKind::kNone || s <= delta * delta) return s;
  return 2.0 * delta * std::sqrt(s) - delta * delta;
}

double RobustLoss::RhoDerivative(double s) const {
  if (kind == LossKind::kNone || s <= delta * delta) return 1.0;
  return delta / std::sqrt(s);
}

int ResidualBlock::ResidualDim() const {
  switch (kind) {
    case ResidualKind::kLineReprojection: return 2;
    case ResidualKind::kPointReprojection: return 2;
    case ResidualKind::kStructural: return 3;
    case ResidualKind::kPosePrior: return 6;
    case ResidualKind::kLinePrior: return 4;
  }
  return 0;
}

BlockEvaluation EvaluateBlock(const ResidualBlock& block, const WindowState& state,
                              bool with_jacobian) {
  switch (block.kind) {
    case ResidualKind::kLineReprojection: return EvaluateLine(block, state, with_jacobian);
    case ResidualKind::kPointReprojection: return EvaluatePoint(block, state, with_jacobian);
    case ResidualKind::kStructural: return EvaluateStructural(block, state, with_jacobian);
    case ResidualKind::kPosePrior: return EvaluatePrior(block, state, with_jacobian);
    case ResidualKind::kLinePrior: return EvaluateLinePrior(block, state, with_jacobian);
  }
  return {};
}

bool RetractParameter(WindowState& state, const ParamRef& param, const double* delta) {
  switch (param.type) {
    case ParamType::kPose: {
      FrameState& f = state.frames.at(static_cast<std::size_t>(param.key));
      f.pose = f.pose.Retract(Eigen::Map<const Eigen::Matrix<double, 6, 1>>(delta));
      return f.pose.translation.allFinite();
    }
    case ParamType::kLine: {
      OrthonormalLine& line = state.lines.at(param.key);
      line = ApplyUpdate(line, LineUpdate{Vec3(delta[0], delta[1], delta[2]), delta[3]});
      return line.psi.allFinite() && std::isfinite(line.phi);
    }
    case ParamType::kPoint: {
      PointLandmark& point = state.points.at(param.key);
      point.inverse_depth += delta[0];
      return point.inverse_depth > 0.0 && std::isfinite(point.inverse_depth);
    }
  }
  return false;
}

Vec2 LineReprojectionResidual(const LineObservation& obs, const OrthonormalLine& line,
                              const CameraPose& pose, const CameraIntrinsics& intrinsics) {
  const Vec3 l = ProjectLine(OrthonormalToPlucker(line), pose, intrinsics);
  auto to_pixels = [&](const Vec3& p) {
    return Vec3(intrinsics.fx * p.x() / p.z() + intrinsics.cx,
                intrinsics.fy * p.y() / p.z() + intrinsics.cy, 1.0);
  };
  return {PointLineDistance(to_pixels(obs.s), l), PointLineDistance(to_pixels(obs.e), l)};
}

Vec3 StructuralResidual(const OrthonormalLine& line_i, const OrthonormalLine& line_j) {
  return line_i.U().col(1).cross(line_j.U().col(1));
}

Vec2 PointReprojectionResidual(const Vec2& host_uv, const Vec2& target_uv, double inverse_depth,
                               const CameraPose& pose_host, const CameraPose& pose_target) {
  if (!(inverse_depth > 0.0)) {
    throw Error(ErrorCode::kNegativeDepth, "inverse depth must be positive");
  }
  const double zeros[6] = {0, 0, 0, 0, 0, 0};
  double depth = 0.0;
  const Vec2 r = PointReprojectionT<double>(pose_host, pose_target, host_uv, target_uv,
                                            inverse_depth, zeros, zeros, zeros, &depth);
  if (!(depth > 0.0)) {
    throw Error(ErrorCode::kNegativeDepth, "point is behind the target camera");
  }
  return r;
}

Eigen::Matrix<double, 6, 1> PosePriorResidual(const CameraPose& pose, const CameraPose& prior,
                                              const Eigen::Matrix<double, 6, 6>& sqrt_information) {
  const double zeros[6] = {0, 0, 0, 0, 0, 0};
  return PosePriorT<double>(pose, prior, sqrt_information, zeros);
}

AlignedLineMean AlignLineMean(const OrthonormalLine& mean, const OrthonormalLine& reference) {
  // Column signs of U and the matching phi -> a * phi + b; all four give the same (n, d).
  struct Form {
    Vec3 signs;
    double a;
    double b;
  };
  constexpr double kPi = std::numbers::pi;
  static const std::array<Form, 4> kForms{{
      {Vec3(1, 1, 1), 1.0, 0.0},
      {Vec3(1, -1, -1), -1.0, 0.0},
      {Vec3(-1, 1, -1), -1.0, kPi},
      {Vec3(-1, -1, 1), 1.0, -kPi},
  }};
  const Mat3 u_mean = mean.U();
  const Mat3 u_ref = reference.U();
  AlignedLineMean best;
  double best_trace = -std::numeric_limits<double>::infinity();
  for (const Form& form : kForms) {
    const Mat3 u = u_mean * form.signs.asDiagonal();
    const double trace = (u.transpose() * u_ref).trace();
    if (trace > best_trace) {
      best_trace = trace;
      best.u = u;
      best.phi = form.a * mean.phi + form.b;
    }
  }
  return best;
}

Eigen::Vector4d LinePriorResidual(const OrthonormalLine& line, const LinePrior& prior) {
  const double zeros[4] = {0, 0, 0, 0};
  return LinePriorT<double>(line, AlignLineMean(prior.mean, line), prior.sqrt_information, zeros);
}

Eigen::Matrix<double, 2, 4> LineObservationJacobian(const LineObservation& obs,
                                                    const OrthonormalLine& line,
                                                    const CameraPose& pose, double weight) {
  const Jet<4> dpose[6] = {};
  Jet<4> dline[4];
  SeedJets(dline, 4, 0);
  const Eigen::Matrix<Jet<4>, 2, 1> r =
      LineReprojectionT<Jet<4>>(pose, line, obs.s, obs.e, dpose, dline);
  Eigen::Matrix<double, 2, 4> j;
  for (int i = 0; i < 2; ++i) j.row(i) = weight * r[i].v.transpose();
  return j;
}

}  // namespace plslam
