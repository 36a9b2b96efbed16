#include "plslam/projective.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "plslam/error.h"

namespace plslam {
namespace {

Vec3 RandomVec(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

Vec2 Project(const CameraPose& pose, const Vec3& world) {
  const Vec3 c = pose.Inverse().Apply(world);
  return c.head<2>() / c.z();
}

LineObservation Observe(const CameraPose& pose, const Vec3& p, const Vec3& q) {
  return LineObservation::FromPoints(Project(pose, p), Project(pose, q));
}

// Camera at `center` looking along +y with z up.
CameraPose LookingForward(const Vec3& center) {
  CameraPose pose;
  pose.rotation << 1, 0, 0,
                   0, 0, 1,
                   0, -1, 0;
  pose.translation = center;
  return pose;
}

TEST(CameraIntrinsics, LineProjectionMatchesPixelLine) {
  const CameraIntrinsics k{400, 380, 320, 240, 640, 480};
  // Two camera-frame points; their pixel line must match K_line * n.
  const Vec3 a(0.3, -0.2, 2.0);
  const Vec3 b(-0.5, 0.4, 3.0);
  const Vec3 n = a.cross(b);
  const Vec3 l = k.LineProjectionMatrix() * n;
  for (const Vec3& p : {a, b}) {
    const Vec3 px(k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy, 1.0);
    EXPECT_NEAR(px.dot(l) / l.head<2>().norm(), 0.0, 1e-9);
  }
}

TEST(CameraIntrinsics, ImageBounds) {
  const CameraIntrinsics k{100, 100, 50, 40, 100, 80};
  EXPECT_TRUE(k.InImage({0.0, 0.0}));
  EXPECT_TRUE(k.InImage({0.49, 0.39}));
  EXPECT_FALSE(k.InImage({0.51, 0.0}));
  EXPECT_NEAR(k.PixelLength({0, 0}, {0.3, 0.4}), 50.0, 1e-12);
}

TEST(ComputeEpipole, IsOtherCenterInThisCamera) {
  const CameraPose i = LookingForward({0, 0, 0});
  const CameraPose j = LookingForward({1, 0, 0});
  const Vec3 e = ComputeEpipole(i, j);
  EXPECT_TRUE(e.isApprox(Vec3(-1, 0, 0)));
  EXPECT_THROW(ComputeEpipole(i, i), Error);
}

TEST(PlaneFromObservation, ContainsCenterAndLine) {
  const CameraPose pose = LookingForward({0.5, -1, 0.2});
  const Vec3 p(1, 3, 0.5);
  const Vec3 q(-1, 4, 1.5);
  const Vec4 pi = PlaneFromObservation(Observe(pose, p, q), pose).pi;
  for (const Vec3& x : {pose.center(), p, q}) {
    EXPECT_NEAR(pi.head<3>().dot(x) + pi[3], 0.0, 1e-9);
  }
}

TEST(PlaneFromObservation, RejectsZeroLengthSegment) {
  const LineObservation obs = LineObservation::FromPoints({0.1, 0.1}, {0.1, 0.1});
  try {
    PlaneFromObservation(obs, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateSegment);
  }
}

TEST(TriangulateLine, RecoversRandomLines) {
  std::mt19937_64 rng(19);
  int checked = 0;
  for (int i = 0; i < 500; ++i) {
    const CameraPose a = LookingForward(RandomVec(rng, 0.5));
    CameraPose b = LookingForward(a.center() + RandomVec(rng, 0.5));
    b.rotation = b.rotation * ExpSO3<double>(RandomVec(rng, 0.1));
    const Vec3 p = Vec3(0, 4, 0) + RandomVec(rng, 1.5);
    const Vec3 q = p + RandomVec(rng, 1.0);
    const PluckerLine truth = PluckerFromTwoPoints(p, q);
    try {
      const PluckerLine l = TriangulateLine(Observe(a, p, q), a, Observe(b, p, q), b);
      EXPECT_TRUE(l.SameLine(truth, 1e-9));
      EXPECT_LT(l.KleinResidual(), 1e-9);
      ++checked;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kDegenerateTriangulation);
    }
  }
  EXPECT_GT(checked, 490);
}

TEST(TriangulateLine, BaselineParallelLineIsDegenerate) {
  const CameraPose a = LookingForward({0, 0, 0});
  const CameraPose b = LookingForward({0.3, 0, 0});
  // Line parallel to the baseline (x axis).
  const Vec3 p(-1, 3, 0.5);
  const Vec3 q(1, 3, 0.5);
  try {
    TriangulateLine(Observe(a, p, q), a, Observe(b, p, q), b);
    FAIL() << "expected DegenerateTriangulation";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateTriangulation);
  }
}

TEST(TriangulateLine, ZeroBaselineThrows) {
  const CameraPose a = LookingForward({0, 0, 0});
  const LineObservation obs = Observe(a, {-1, 3, 0}, {1, 3, 1});
  try {
    TriangulateLine(obs, a, obs, a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kZeroBaseline);
  }
}

TEST(TriangulateLine, OrientationFollowsFirstView) {
  const CameraPose a = LookingForward({0, 0, 0});
  const CameraPose b = LookingForward({0.3, 0, 0.2});
  const Vec3 p(-1, 3, -0.5);
  const Vec3 q(0.5, 4, 1.5);
  const LineObservation obs_a = Observe(a, p, q);
  const PluckerLine l = TriangulateLine(obs_a, a, Observe(b, p, q), b);
  EXPECT_GT(WorldLineToCamera(l, a).n.dot(obs_a.line()), 0.0);
  EXPECT_NEAR(l.n.squaredNorm() + l.d.squaredNorm(), 1.0, 1e-12);
}

TEST(ProjectLine, EndpointsLieOnProjection) {
  const CameraIntrinsics k{458.654, 457.296, 367.215, 248.375, 752, 480};
  const CameraPose pose = LookingForward({0.2, -0.5, 0.1});
  const Vec3 p(1, 3, 0.5);
  const Vec3 q(-1, 4, 1.5);
  const Vec3 l = ProjectLine(PluckerFromTwoPoints(p, q), pose, k);
  for (const Vec3& x : {p, q}) {
    const Vec2 uv = Project(pose, x);
    const Vec3 px(k.fx * uv.x() + k.cx, k.fy * uv.y() + k.cy, 1.0);
    EXPECT_NEAR(PointLineDistance(px, l), 0.0, 1e-9);
  }
}

TEST(ProjectLine, LineThroughCenterIsUnobservable) {
  const CameraPose pose = LookingForward({0, 0, 0});
  const PluckerLine through = PluckerFromTwoPoints({0, 0, 0}, {0, 5, 1});
  try {
    ProjectLine(through, pose, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnobservableLine);
  }
}

TEST(PointLineDistance, SignedDistance) {
  const Vec3 l(0, 1, -2);  // y = 2
  EXPECT_NEAR(PointLineDistance({5, 3, 1}, l), 1.0, 1e-15);
  EXPECT_NEAR(PointLineDistance({5, 0, 1}, l), -2.0, 1e-15);
}

TEST(TriangulatePointDepth, RecoversDepth) {
  const CameraPose a = LookingForward({0, 0, 0});
  const CameraPose b = LookingForward({0.4, 0.1, -0.1});
  const Vec3 x(0.3, 5.0, -0.2);
  const double depth = TriangulatePointDepth(Project(a, x), a, Project(b, x), b);
  EXPECT_NEAR(depth, a.Inverse().Apply(x).z(), 1e-9);
  EXPECT_TRUE(std::isnan(TriangulatePointDepth(Project(a, x), a, Project(a, x), a)));
}

}  // namespace
}  // namespace plslam
