#pragma once

#include <cstdint>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace plslam {

using FeatureId = std::int64_t;
using FrameId = std::int64_t;

inline constexpr FeatureId kInvalidFeature = -1;

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;

}  // namespace plslam
