#pragma once

#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <vector>

#include <Eigen/Core>

#include "plslam/line_geometry.h"
#include "plslam/pose.h"
#include "plslam/projective.h"
#include "plslam/types.h"

namespace plslam {

// ---------------------------------------------------------------------------
// Window state shared by the residual blocks and the optimizer.

struct FrameState {
  FrameId id = 0;
  CameraPose pose;
  // Unary prior standing in for inertial and marginalization information.
  CameraPose prior;
  Eigen::Matrix<double, 6, 6> prior_sqrt_information = Eigen::Matrix<double, 6, 6>::Identity();
};

struct PointLandmark {
  FrameId host_frame = 0;
  Vec2 host_uv = Vec2::Zero();
  double inverse_depth = 1.0;
};

// Information about a line carried over from observations that left the
// window, linearized at `mean`.
struct LinePrior {
  OrthonormalLine mean;
  Eigen::Matrix4d sqrt_information = Eigen::Matrix4d::Zero();
};

struct WindowState {
  std::vector<FrameState> frames;  // oldest first
  std::map<FeatureId, PointLandmark> points;
  std::map<FeatureId, OrthonormalLine> lines;
  std::map<FeatureId, LinePrior> line_priors;

  // Index into `frames`, or -1.
  int FrameIndex(FrameId id) const;
};

// ---------------------------------------------------------------------------
// Residual blocks.

enum class ResidualKind {
  kLineReprojection,
  kPointReprojection,
  kStructural,
  kPosePrior,
  kLinePrior,
};
inline constexpr int kNumResidualKinds = 5;

enum class LossKind { kNone, kHuber };

struct RobustLoss {
  LossKind kind = LossKind::kNone;
  double delta = 1.0;

  // rho(s) for s = |r|^2, and its first derivative.
  double Rho(double squared_norm) const;
  double RhoDerivative(double squared_norm) const;
};

struct ResidualBlock {
  ResidualKind kind = ResidualKind::kPosePrior;
  // kLineReprojection: frames[0] observing frame, landmarks[0] line.
  // kPointReprojection: frames[0] host, frames[1] target, landmarks[0] point.
  // kStructural: landmarks[0], landmarks[1] lines.
  // kPosePrior: frames[0].
  // kLinePrior: landmarks[0] line, prior taken from WindowState::line_priors.
  std::array<int, 2> frames{-1, -1};
  std::array<FeatureId, 2> landmarks{kInvalidFeature, kInvalidFeature};
  double weight = 1.0;  // scalar sqrt-information applied to the residual
  RobustLoss loss;

  // Measurements.
  Vec3 s = Vec3::UnitZ();
  Vec3 e = Vec3::UnitZ();
  Vec2 target_uv = Vec2::Zero();

  int ResidualDim() const;
};

// Parameter blocks touched by a residual block, in tangent-column order.
enum class ParamType { kPose, kLine, kPoint };

struct ParamRef {
  ParamType type = ParamType::kPose;
  std::int64_t key = 0;  // frame index for poses, feature id for landmarks

  int TangentDim() const { return type == ParamType::kPose ? 6 : type == ParamType::kLine ? 4 : 1; }
  friend bool operator==(const ParamRef&, const ParamRef&) = default;
};

inline constexpr int kMaxResidualDim = 6;
inline constexpr int kMaxTangentDim = 13;

struct BlockEvaluation {
  bool valid = false;
  Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxResidualDim, 1> residual;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxResidualDim, kMaxTangentDim> jacobian;
  std::array<ParamRef, 3> params{};
  int num_params = 0;
};

/// Weighted residual (before robust loss) and, optionally, its Jacobian with
/// respect to the tangent increments of the touched parameter blocks.
/// Returns valid = false instead of throwing when the state is outside the
/// block's domain (non-positive depth, unobservable line).
BlockEvaluation EvaluateBlock(const ResidualBlock& block, const WindowState& state,
                              bool with_jacobian);

/// Applies a tangent increment to one parameter block of `state`. Returns
/// false if the result leaves the parameter's domain.
bool RetractParameter(WindowState& state, const ParamRef& param, const double* delta);

// ---------------------------------------------------------------------------
// Plain residual functions.

/// Endpoint-to-line distances [d(s,l), d(e,l)] with l = K_line n^c. With
/// non-identity intrinsics the endpoints are mapped to pixels, so both the
/// line and the distances are in pixel units.
Vec2 LineReprojectionResidual(const LineObservation& obs, const OrthonormalLine& line,
                              const CameraPose& pose, const CameraIntrinsics& intrinsics = {});

/// d_i x d_j for the unit directions of the two lines.
Vec3 StructuralResidual(const OrthonormalLine& line_i, const OrthonormalLine& line_j);

/// Normalized-plane reprojection error of an inverse-depth point hosted in
/// `pose_host`, observed at `target_uv` from `pose_target`.
/// Throws kNegativeDepth for inverse_depth <= 0.
Vec2 PointReprojectionResidual(const Vec2& host_uv, const Vec2& target_uv, double inverse_depth,
                               const CameraPose& pose_host, const CameraPose& pose_target);

/// sqrt_information * [t - t_prior; Log(R_prior^T R)].
Eigen::Matrix<double, 6, 1> PosePriorResidual(const CameraPose& pose, const CameraPose& prior,
                                              const Eigen::Matrix<double, 6, 6>& sqrt_information);

/// sqrt_information * [Log(U_mean^T U); phi - phi_mean], with the mean first
/// rewritten in whichever of its equivalent (U, phi) forms is nearest `line`.
Eigen::Vector4d LinePriorResidual(const OrthonormalLine& line, const LinePrior& prior);

/// The representation of `mean` as (U, phi) with U closest to `reference`.
/// phi may fall outside [0, pi/2].
struct AlignedLineMean {
  Mat3 u;
  double phi = 0.0;
};
AlignedLineMean AlignLineMean(const OrthonormalLine& mean, const OrthonormalLine& reference);

/// Whitened Jacobian of one line observation with respect to the line's
/// tangent, holding the pose fixed.
Eigen::Matrix<double, 2, 4> LineObservationJacobian(const LineObservation& obs,
                                                    const OrthonormalLine& line,
                                                    const CameraPose& pose, double weight);

// ---------------------------------------------------------------------------
// Templated kernels (scalar T may be an automatic-differentiation Jet). Each
// evaluates the residual at the retraction of the given base values.

template <typename T>
void RetractPoseT(const CameraPose& pose, const T* delta, Eigen::Matrix<T, 3, 3>* r,
                  Eigen::Matrix<T, 3, 1>* t) {
  const Eigen::Matrix<T, 3, 1> dt(delta[0], delta[1], delta[2]);
  const Eigen::Matrix<T, 3, 1> dtheta(delta[3], delta[4], delta[5]);
  *t = pose.translation.cast<T>() + dt;
  *r = pose.rotation.cast<T>() * ExpSO3<T>(dtheta);
}

template <typename T>
void RetractLineT(const OrthonormalLine& line, const T* delta, Eigen::Matrix<T, 3, 3>* u,
                  T* phi) {
  const Eigen::Matrix<T, 3, 1> dpsi(delta[0], delta[1], delta[2]);
  *u = line.U().cast<T>() * ExpSO3<T>(dpsi);
  *phi = T(line.phi) + delta[3];
}

template <typename T>
Eigen::Matrix<T, 2, 1> LineReprojectionT(const CameraPose& pose, const OrthonormalLine& line,
                                         const Vec3& s, const Vec3& e, const T* dpose,
                                         const T* dline) {
  Eigen::Matrix<T, 3, 3> r, u;
  Eigen::Matrix<T, 3, 1> t, n, d;
  T phi;
  RetractPoseT(pose, dpose, &r, &t);
  RetractLineT(line, dline, &u, &phi);
  PluckerFromFrame<T>(u, phi, &n, &d);
  // Camera-frame normal: R^T (n - t x d).
  const Eigen::Matrix<T, 3, 1> n_cam = r.transpose() * (n - t.cross(d));
  using std::sqrt;
  const T norm = sqrt(n_cam.x() * n_cam.x() + n_cam.y() * n_cam.y());
  return {s.cast<T>().dot(n_cam) / norm, e.cast<T>().dot(n_cam) / norm};
}

template <typename T>
Eigen::Matrix<T, 2, 1> PointReprojectionT(const CameraPose& host, const CameraPose& target,
                                          const Vec2& host_uv, const Vec2& target_uv,
                                          double inverse_depth, const T* dhost,
                                          const T* dtarget, const T* dlambda, T* depth_out) {
  Eigen::Matrix<T, 3, 3> r_h, r_t;
  Eigen::Matrix<T, 3, 1> t_h, t_t;
  RetractPoseT(host, dhost, &r_h, &t_h);
  RetractPoseT(target, dtarget, &r_t, &t_t);
  const T lambda = T(inverse_depth) + dlambda[0];
  const Eigen::Matrix<T, 3, 1> p_host = host_uv.homogeneous().cast<T>() / lambda;
  const Eigen::Matrix<T, 3, 1> p_world = r_h * p_host + t_h;
  const Eigen::Matrix<T, 3, 1> p_target = r_t.transpose() * (p_world - t_t);
  if (depth_out != nullptr) *depth_out = p_target.z();
  return {p_target.x() / p_target.z() - T(target_uv.x()),
          p_target.y() / p_target.z() - T(target_uv.y())};
}

template <typename T>
Eigen::Matrix<T, 3, 1> StructuralT(const OrthonormalLine& line_i, const OrthonormalLine& line_j,
                                   const T* dline_i, const T* dline_j) {
  Eigen::Matrix<T, 3, 3> u_i, u_j;
  T phi_i, phi_j;
  RetractLineT(line_i, dline_i, &u_i, &phi_i);
  RetractLineT(line_j, dline_j, &u_j, &phi_j);
  const Eigen::Matrix<T, 3, 1> d_i = u_i.col(1);
  const Eigen::Matrix<T, 3, 1> d_j = u_j.col(1);
  return d_i.cross(d_j);
}

template <typename T>
Eigen::Matrix<T, 6, 1> PosePriorT(const CameraPose& pose, const CameraPose& prior,
                                  const Eigen::Matrix<double, 6, 6>& sqrt_information,
                                  const T* dpose) {
  Eigen::Matrix<T, 3, 3> r;
  Eigen::Matrix<T, 3, 1> t;
  RetractPoseT(pose, dpose, &r, &t);
  Eigen::Matrix<T, 6, 1> raw;
  raw.template head<3>() = t - prior.translation.cast<T>();
  const Eigen::Matrix<T, 3, 3> relative = prior.rotation.transpose().cast<T>() * r;
  raw.template tail<3>() = LogSO3<T>(relative);
  return sqrt_information.cast<T>() * raw;
}

template <typename T>
Eigen::Matrix<T, 4, 1> LinePriorT(const OrthonormalLine& line, const AlignedLineMean& mean,
                                  const Eigen::Matrix4d& sqrt_information, const T* dline) {
  Eigen::Matrix<T, 3, 3> u;
  T phi;
  RetractLineT(line, dline, &u, &phi);
  Eigen::Matrix<T, 4, 1> raw;
  raw.template head<3>() = LogSO3<T>(Eigen::Matrix<T, 3, 3>(mean.u.transpose().cast<T>() * u));
  // (U, phi) and (U, phi + pi) describe the same line.
  const double turns = std::round((line.phi - mean.phi) / std::numbers::pi);
  raw[3] = phi - T(mean.phi + turns * std::numbers::pi);
  return sqrt_information.cast<T>() * raw;
}

}  // namespace plslam
