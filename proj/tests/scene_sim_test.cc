#include "plslam/scene_sim.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>

#include <gtest/gtest.h>

#include "plslam/degeneracy.h"
#include "plslam/error.h"

namespace plslam {
namespace {

// Unit-normalizer image line of a ground-truth line in camera `pose`.
Vec3 TrueImageLine(const GroundTruthLine& line, const CameraPose& pose) {
  const Vec3 n = WorldLineToCamera(line.plucker(), pose).n;
  return n / n.head<2>().norm();
}

SceneConfig Noiseless(const std::string& preset) {
  SceneConfig cfg = PresetScene(preset);
  cfg.noise = NoiseSpec{};
  return cfg;
}

void ExpectInvalid(const std::function<void()>& f) {
  try {
    f();
    FAIL() << "expected InvalidConfig";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidConfig);
  }
}

TEST(GenerateScene, SameSeedIsBitIdentical) {
  const SceneConfig cfg = PresetScene("vicon-turns");
  const GroundTruth a = GenerateScene(cfg);
  const GroundTruth b = GenerateScene(cfg);
  ASSERT_EQ(a.lines.size(), b.lines.size());
  for (std::size_t i = 0; i < a.lines.size(); ++i) {
    EXPECT_EQ(a.lines[i].p0, b.lines[i].p0);
    EXPECT_EQ(a.lines[i].p1, b.lines[i].p1);
  }
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    EXPECT_EQ(a.points[i].position, b.points[i].position);
  }
  for (const FrameId k : {0, 17, 90}) {
    const RenderedFrame fa = RenderFrame(a, k, cfg.noise);
    const RenderedFrame fb = RenderFrame(b, k, cfg.noise);
    ASSERT_EQ(fa.lines.size(), fb.lines.size());
    for (std::size_t i = 0; i < fa.lines.size(); ++i) {
      EXPECT_EQ(fa.lines[i].s, fb.lines[i].s);
      EXPECT_EQ(fa.lines[i].e, fb.lines[i].e);
    }
    EXPECT_EQ(NoisyPosePrior(a, k, cfg.noise).translation,
              NoisyPosePrior(b, k, cfg.noise).translation);
  }

  SceneConfig other = cfg;
  other.seed = cfg.seed + 1;
  EXPECT_NE(GenerateScene(other).lines.front().p0, a.lines.front().p0);
}

TEST(GenerateScene, ZeroLines) {
  SceneConfig cfg = PresetScene("machine-hall-x");
  cfg.line_count = 0;
  const GroundTruth gt = GenerateScene(cfg);
  EXPECT_TRUE(gt.lines.empty());
  EXPECT_EQ(static_cast<int>(gt.poses.size()), cfg.num_frames());
  EXPECT_TRUE(RenderFrame(gt, 0, cfg.noise).lines.empty());
}

TEST(GenerateScene, Trajectory) {
  const GroundTruth gt = GenerateScene(PresetScene("machine-hall-x"));
  ASSERT_EQ(gt.poses.size(), 61u);
  EXPECT_TRUE(gt.poses.back().translation.isApprox(Vec3(3, 0, 0)));
  // Optical axis along +y, rows pointing down.
  EXPECT_TRUE(gt.poses[0].rotation.col(2).isApprox(Vec3::UnitY()));
  EXPECT_TRUE(gt.poses[0].rotation.col(1).isApprox(-Vec3::UnitZ()));
  ASSERT_EQ(gt.leg_directions.size(), 1u);
  EXPECT_TRUE(gt.leg_directions[0].isApprox(Vec3::UnitX()));
  EXPECT_DOUBLE_EQ(gt.timestamps[20], 1.0);
}

TEST(GenerateScene, LinesLieOnTheirSurfaces) {
  const SceneConfig cfg = PresetScene("corridor");
  const GroundTruth gt = GenerateScene(cfg);
  for (const GroundTruthLine& l : gt.lines) {
    const SurfaceSpec& s = cfg.surfaces[l.surface];
    EXPECT_NEAR(s.normal().dot(l.p0 - s.origin), 0.0, 1e-9);
    EXPECT_NEAR(s.normal().dot(l.p1 - s.origin), 0.0, 1e-9);
    EXPECT_TRUE((l.p1 - l.p0).normalized().isApprox(l.direction));
  }
}

// Corridor: most lines run along the motion, and the verdict module sees it.
TEST(GenerateScene, CorridorIsMostlyDegenerate) {
  const SceneConfig cfg = Noiseless("corridor");
  const GroundTruth gt = GenerateScene(cfg);
  int parallel = 0;
  for (const GroundTruthLine& l : gt.lines) parallel += l.parallel_to_motion;
  EXPECT_GE(parallel, 0.5 * static_cast<double>(gt.lines.size()));

  int flagged = 0;
  int total = 0;
  for (FrameId k = 1; k < static_cast<FrameId>(gt.poses.size()); ++k) {
    if (!IsPureTranslation(gt.poses[k - 1], gt.poses[k])) continue;
    for (const LineObservation& obs : RenderFrame(gt, k, cfg.noise).lines) {
      flagged += ClassifyPair(obs, gt.poses[k - 1], gt.poses[k], gt.leg_directions[0]).degenerate;
      ++total;
    }
  }
  ASSERT_GT(total, 0);
  EXPECT_GE(flagged, 0.5 * total);
}

TEST(RenderFrame, NoiselessObservationsLieOnTrueLines) {
  for (const std::string& preset : PresetNames()) {
    const SceneConfig cfg = Noiseless(preset);
    const GroundTruth gt = GenerateScene(cfg);
    const Vec2 lo = cfg.intrinsics.NormalizedMin().array() - 1e-12;
    const Vec2 hi = cfg.intrinsics.NormalizedMax().array() + 1e-12;
    for (FrameId k = 0; k < static_cast<FrameId>(gt.poses.size()); k += 7) {
      const RenderedFrame f = RenderFrame(gt, k, cfg.noise);
      ASSERT_EQ(f.lines.size(), f.line_truth.size());
      for (std::size_t i = 0; i < f.lines.size(); ++i) {
        const Vec3 l = TrueImageLine(gt.lines[f.line_truth[i]], gt.poses[k]);
        EXPECT_LT(std::abs(f.lines[i].s.dot(l)), 1e-12);
        EXPECT_LT(std::abs(f.lines[i].e.dot(l)), 1e-12);
        for (const Vec2& p : {f.lines[i].s2(), f.lines[i].e2()}) {
          EXPECT_TRUE((p.array() >= lo.array()).all() && (p.array() <= hi.array()).all());
        }
      }
      for (const PointObservation& p : f.points) {
        const Vec3 c = gt.poses[k].Inverse().Apply(gt.points[p.feature_id].position);
        EXPECT_LT((p.uv - c.head<2>() / c.z()).norm(), 1e-12);
      }
    }
  }
}

TEST(RenderFrame, SplitEmitsTwoDisjointPieces) {
  SceneConfig cfg = Noiseless("machine-hall-x");
  const GroundTruth gt = GenerateScene(cfg);
  const RenderedFrame whole = RenderFrame(gt, 10, cfg.noise);
  cfg.noise.split_p = 1.0;
  const RenderedFrame split = RenderFrame(gt, 10, cfg.noise);
  ASSERT_EQ(split.lines.size(), 2 * whole.lines.size());

  std::map<FeatureId, std::vector<const LineObservation*>> pieces;
  for (std::size_t i = 0; i < split.lines.size(); ++i) {
    pieces[split.line_truth[i]].push_back(&split.lines[i]);
  }
  for (std::size_t i = 0; i < whole.lines.size(); ++i) {
    const LineObservation& w = whole.lines[i];
    const auto& two = pieces.at(whole.line_truth[i]);
    ASSERT_EQ(two.size(), 2u);
    // Parameters along the unsplit segment.
    const Vec2 axis = w.e2() - w.s2();
    auto t = [&](const Vec2& p) { return (p - w.s2()).dot(axis) / axis.squaredNorm(); };
    EXPECT_NEAR(t(two[0]->s2()), 0.0, 1e-12);
    EXPECT_NEAR(t(two[1]->e2()), 1.0, 1e-12);
    EXPECT_LT(t(two[0]->e2()), t(two[1]->s2()));
  }
}

TEST(RenderFrame, CutShortensTowardsTheBorder) {
  SceneConfig cfg = Noiseless("vicon-turns");
  const GroundTruth gt = GenerateScene(cfg);
  const RenderedFrame whole = RenderFrame(gt, 5, cfg.noise);
  cfg.noise.cut_p = 1.0;
  const RenderedFrame cut = RenderFrame(gt, 5, cfg.noise);
  ASSERT_EQ(cut.lines.size(), whole.lines.size());
  for (std::size_t i = 0; i < cut.lines.size(); ++i) {
    const double ratio = cut.lines[i].length() / whole.lines[i].length();
    EXPECT_GE(ratio, 0.4 - 1e-12);
    EXPECT_LE(ratio, 0.7 + 1e-12);
  }
}

// Endpoint noise statistics against the true image lines.
TEST(RenderFrame, EndpointNoiseHasConfiguredSigma) {
  std::vector<double> d;
  for (const std::string& preset : PresetNames()) {
    SceneConfig cfg = Noiseless(preset);
    cfg.noise.endpoint_sigma = 0.001;
    const GroundTruth gt = GenerateScene(cfg);
    for (FrameId k = 0; k < static_cast<FrameId>(gt.poses.size()); ++k) {
      const RenderedFrame f = RenderFrame(gt, k, cfg.noise);
      for (std::size_t i = 0; i < f.lines.size(); ++i) {
        const Vec3 l = TrueImageLine(gt.lines[f.line_truth[i]], gt.poses[k]);
        d.push_back(f.lines[i].s.dot(l));
        d.push_back(f.lines[i].e.dot(l));
      }
    }
  }
  ASSERT_GE(d.size(), 10000u);
  double mean = 0.0;
  for (double x : d) mean += x;
  mean /= static_cast<double>(d.size());
  double var = 0.0;
  for (double x : d) var += (x - mean) * (x - mean);
  const double std = std::sqrt(var / static_cast<double>(d.size() - 1));
  EXPECT_NEAR(std, 0.001, 0.2 * 0.001);
  EXPECT_NEAR(mean, 0.0, 1e-4);
}

TEST(RenderFrame, FrameOutOfRange) {
  const GroundTruth gt = GenerateScene(PresetScene("machine-hall-x"));
  ExpectInvalid([&] { RenderFrame(gt, 61, {}); });
  ExpectInvalid([&] { RenderFrame(gt, -1, {}); });
}

TEST(ExactFlow, IdentityMotion) {
  const GroundTruth gt = GenerateScene(Noiseless("machine-hall-x"));
  const FlowField flow = ExactFlow(gt, 3, 3);
  for (const LineObservation& obs : RenderFrame(gt, 3, {}).lines) {
    const auto p = flow.Displace(obs.midpoint());
    ASSERT_TRUE(p);
    EXPECT_EQ(*p, obs.midpoint());
  }
}

// Under pure translation every displacement lies on the epipolar line
// through the epipole, and points on structure land on their true image.
TEST(ExactFlow, PureTranslationFollowsEpipolarLines) {
  const SceneConfig cfg = Noiseless("machine-hall-x");
  const GroundTruth gt = GenerateScene(cfg);
  const CameraPose& a = gt.poses[10];
  const CameraPose& b = gt.poses[14];
  const FlowField flow = ExactFlow(gt, 10, 14);
  const Vec3 epipole = a.rotation.transpose() * (b.translation - a.translation);
  int checked = 0;
  for (const GroundTruthPoint& pt : gt.points) {
    const Vec3 ca = a.Inverse().Apply(pt.position);
    const Vec3 cb = b.Inverse().Apply(pt.position);
    if (ca.z() < 0.1 || cb.z() < 0.1) continue;
    const Vec2 uv = ca.head<2>() / ca.z();
    if (!cfg.intrinsics.InImage(uv)) continue;
    const auto moved = flow.Displace(uv);
    if (!moved) continue;
    const Vec3 p = uv.homogeneous();
    const Vec3 q = moved->homogeneous();
    EXPECT_LT(std::abs(p.cross(q).dot(epipole)) / (p.norm() * q.norm() * epipole.norm()), 1e-12);
    ++checked;
  }
  EXPECT_GT(checked, 10);
}

TEST(ExactFlow, UndefinedAwayFromStructure) {
  const GroundTruth gt = GenerateScene(Noiseless("machine-hall-x"));
  EXPECT_FALSE(ExactFlow(gt, 0, 1).Displace({5.0, 5.0}));
}

TEST(ExactFlow, NoiseIsSeeded) {
  const GroundTruth gt = GenerateScene(PresetScene("machine-hall-x"));
  const LineObservation obs = RenderFrame(gt, 0, {}).lines.front();
  const auto a = ExactFlow(gt, 0, 1, 0.01).Displace(obs.midpoint());
  const auto b = ExactFlow(gt, 0, 1, 0.01).Displace(obs.midpoint());
  const auto exact = ExactFlow(gt, 0, 1, 0.0).Displace(obs.midpoint());
  ASSERT_TRUE(a && b && exact);
  EXPECT_EQ(*a, *b);
  EXPECT_GT((*a - *exact).norm(), 0.0);
}

TEST(NoisyPosePrior, ZeroNoiseIsTruth) {
  const GroundTruth gt = GenerateScene(PresetScene("machine-hall-x"));
  const CameraPose p = NoisyPosePrior(gt, 7, NoiseSpec{});
  EXPECT_EQ(p.translation, gt.poses[7].translation);
  EXPECT_TRUE(p.rotation.isApprox(gt.poses[7].rotation, 1e-15));
}

TEST(SceneConfig, Validation) {
  ExpectInvalid([] { PresetScene("no-such-preset"); });
  for (auto mutate : std::vector<std::function<void(SceneConfig&)>>{
           [](SceneConfig& c) { c.noise.endpoint_sigma = -1.0; },
           [](SceneConfig& c) { c.noise.split_p = 1.5; },
           [](SceneConfig& c) { c.noise.cut_p = -0.1; },
           [](SceneConfig& c) { c.line_count = -1; },
           [](SceneConfig& c) { c.surfaces.clear(); },
       }) {
    SceneConfig cfg = PresetScene("machine-hall-x");
    mutate(cfg);
    ExpectInvalid([&] { GenerateScene(cfg); });
  }
}

class SceneFile : public ::testing::Test {
 protected:
  std::filesystem::path Write(const std::string& text) {
    const auto path = std::filesystem::path(::testing::TempDir()) /
                      (std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) +
                       ".yaml");
    std::ofstream(path) << text;
    return path;
  }
};

TEST_F(SceneFile, PresetWithOverrides) {
  const SceneConfig cfg = LoadSceneConfig(Write(
      "preset: corridor\n"
      "seed: 9\n"
      "lines: {count: 12}\n"
      "noise: {endpoint_sigma: 0.002, split_p: 0.3}\n"));
  EXPECT_EQ(cfg.name, "corridor");
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.line_count, 12);
  EXPECT_DOUBLE_EQ(cfg.noise.endpoint_sigma, 0.002);
  EXPECT_DOUBLE_EQ(cfg.noise.split_p, 0.3);
  EXPECT_DOUBLE_EQ(cfg.noise.point_sigma, PresetScene("corridor").noise.point_sigma);
}

TEST_F(SceneFile, Errors) {
  ExpectInvalid([&] { LoadSceneConfig(Write("preset: corridor\nlines: {cuont: 3}\n")); });
  ExpectInvalid([&] { LoadSceneConfig(Write("noise: {endpoint_sigma: [1, 2]}\n")); });
  ExpectInvalid([&] { LoadSceneConfig(Write("preset: corridor\nnoise: {cut_p: 2}\n")); });
  ExpectInvalid([] { LoadSceneConfig("/nonexistent/scene.yaml"); });
}

}  // namespace
}  // namespace plslam
