#include <cmath>
#include <set>

#include <yaml-cpp/yaml.h>

#include "plslam/error.h"
#include "plslam/scene_sim.h"

namespace plslam {

namespace {

[[noreturn]] void Invalid(const std::string& what) { throw Error(ErrorCode::kInvalidConfig, what); }

SurfaceSpec Rect(Vec3 origin, Vec3 u, Vec3 v, double u_extent, double v_extent) {
  return {origin, u, v, u_extent, v_extent};
}

NoiseSpec DefaultNoise() {
  NoiseSpec noise;
  noise.endpoint_sigma = 0.001;
  noise.point_sigma = 0.001;
  noise.flow_sigma = 0.0005;
  noise.prior_sigma_t = 0.005;
  noise.prior_sigma_r_deg = 0.1;
  return noise;
}

SceneConfig MachineHallX() {
  SceneConfig c;
  c.name = "machine-hall-x";
  c.line_count = 60;
  c.point_count = 60;
  c.parallel_fraction = 0.5;
  c.direction_mix = Vec3(0.0, 1.0, 2.0);
  c.trajectory.start = Vec3(0.0, 0.0, 0.0);
  c.trajectory.forward = Vec3::UnitY();
  c.trajectory.up = Vec3::UnitZ();
  c.trajectory.legs = {{60, Vec3(3.0, 0.0, 0.0), 0.0}};
  c.surfaces = {
      Rect({-3.0, 4.0, -1.5}, Vec3::UnitX(), Vec3::UnitZ(), 9.0, 4.0),  // back wall
      Rect({-2.0, 2.5, -1.5}, Vec3::UnitX(), Vec3::UnitZ(), 7.0, 1.2),  // machinery front
      Rect({-3.0, 1.5, -1.5}, Vec3::UnitX(), Vec3::UnitY(), 9.0, 2.5),  // floor
  };
  c.noise = DefaultNoise();
  return c;
}

SceneConfig ViconTurns() {
  SceneConfig c;
  c.name = "vicon-turns";
  c.line_count = 120;
  c.point_count = 100;
  c.parallel_fraction = 0.4;
  c.direction_mix = Vec3(1.0, 1.0, 2.0);
  c.trajectory.start = Vec3(-2.0, -2.0, 0.0);
  c.trajectory.forward = Vec3::UnitX();
  c.trajectory.up = Vec3::UnitZ();
  c.trajectory.legs = {
      {40, Vec3(3.0, 0.0, 0.0), 0.0},
      {12, Vec3(0.4, 0.4, 0.0), 90.0},
      {40, Vec3(0.0, 3.0, 0.0), 0.0},
      {12, Vec3(-0.4, 0.4, 0.0), 90.0},
      {40, Vec3(-3.0, 0.0, 0.0), 0.0},
  };
  const double lo = -4.5;
  const double size = 9.0;
  c.surfaces = {
      Rect({lo, 4.5, -1.2}, Vec3::UnitX(), Vec3::UnitZ(), size, 3.2),
      Rect({lo, -4.5, -1.2}, Vec3::UnitX(), Vec3::UnitZ(), size, 3.2),
      Rect({4.5, lo, -1.2}, Vec3::UnitY(), Vec3::UnitZ(), size, 3.2),
      Rect({-4.5, lo, -1.2}, Vec3::UnitY(), Vec3::UnitZ(), size, 3.2),
      Rect({lo, lo, -1.2}, Vec3::UnitX(), Vec3::UnitY(), size, size),
  };
  c.noise = DefaultNoise();
  return c;
}

SceneConfig Corridor() {
  SceneConfig c;
  c.name = "corridor";
  c.line_count = 160;
  c.point_count = 40;
  c.parallel_fraction = 0.6;
  c.direction_mix = Vec3(0.0, 1.0, 1.0);
  c.trajectory.start = Vec3(0.0, 0.0, 0.0);
  c.trajectory.forward = Vec3::UnitX();
  c.trajectory.up = Vec3::UnitZ();
  c.trajectory.legs = {{80, Vec3(4.0, 0.0, 0.0), 0.0}};
  const double length = 16.0;
  c.surfaces = {
      Rect({-1.0, 1.5, -1.2}, Vec3::UnitX(), Vec3::UnitZ(), length, 2.7),   // left wall
      Rect({-1.0, -1.5, -1.2}, Vec3::UnitX(), Vec3::UnitZ(), length, 2.7),  // right wall
      Rect({-1.0, -1.5, -1.2}, Vec3::UnitX(), Vec3::UnitY(), length, 3.0),  // floor
      Rect({-1.0, -1.5, 1.5}, Vec3::UnitX(), Vec3::UnitY(), length, 3.0),   // ceiling
  };
  c.noise = DefaultNoise();
  return c;
}

void CheckKeys(const YAML::Node& node, const std::set<std::string>& allowed,
               const std::string& where) {
  if (!node.IsMap()) Invalid(where + " must be a mapping");
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    if (!allowed.contains(key)) Invalid("unknown key '" + key + "' in " + where);
  }
}

Vec3 ReadVec3(const YAML::Node& node, const std::string& what) {
  if (!node.IsSequence() || node.size() != 3) Invalid(what + " must be a list of 3 numbers");
  return {node[0].as<double>(), node[1].as<double>(), node[2].as<double>()};
}

template <typename T>
void Read(const YAML::Node& node, const char* key, T* out) {
  if (node[key]) *out = node[key].as<T>();
}

void ReadVec(const YAML::Node& node, const char* key, Vec3* out) {
  if (node[key]) *out = ReadVec3(node[key], key);
}

}  // namespace

int SceneConfig::num_frames() const {
  int frames = 1;
  for (const TrajectoryLeg& leg : trajectory.legs) frames += leg.frames;
  return frames;
}

void SceneConfig::Validate() const {
  if (line_count < 0 || point_count < 0) Invalid("feature counts must be non-negative");
  if (parallel_fraction < 0.0 || parallel_fraction > 1.0) {
    Invalid("parallel_fraction must lie in [0, 1]");
  }
  if ((direction_mix.array() < 0.0).any()) Invalid("direction_mix weights must be >= 0");
  if (!(min_line_length > 0.0) || max_line_length < min_line_length) {
    Invalid("line length range must satisfy 0 < min <= max");
  }
  if (min_line_separation < 0.0) Invalid("min_line_separation must be >= 0");
  if (!(frame_rate > 0.0)) Invalid("frame_rate must be positive");
  if (!intrinsics.IsValid() || intrinsics.width <= 0 || intrinsics.height <= 0) {
    Invalid("intrinsics need positive focal lengths and image size");
  }
  const NoiseSpec& n = noise;
  if (n.endpoint_sigma < 0.0 || n.point_sigma < 0.0 || n.flow_sigma < 0.0 ||
      n.prior_sigma_t < 0.0 || n.prior_sigma_r_deg < 0.0) {
    Invalid("noise sigmas must be >= 0");
  }
  if (n.split_p < 0.0 || n.split_p > 1.0 || n.cut_p < 0.0 || n.cut_p > 1.0) {
    Invalid("split_p and cut_p must lie in [0, 1]");
  }
  if (trajectory.forward.norm() == 0.0 ||
      trajectory.forward.normalized().cross(trajectory.up).norm() < 1e-6) {
    Invalid("trajectory forward and up must be non-zero and not parallel");
  }
  for (const TrajectoryLeg& leg : trajectory.legs) {
    if (leg.frames < 1) Invalid("every trajectory leg needs at least one frame");
  }
  for (const SurfaceSpec& s : surfaces) {
    if (std::abs(s.u_axis.norm() - 1.0) > 1e-9 || std::abs(s.v_axis.norm() - 1.0) > 1e-9 ||
        std::abs(s.u_axis.dot(s.v_axis)) > 1e-9) {
      Invalid("surface axes must be orthonormal");
    }
    if (!(s.u_extent > 0.0) || !(s.v_extent > 0.0)) Invalid("surface extents must be positive");
  }
  if ((line_count > 0 || point_count > 0) && surfaces.empty()) {
    Invalid("features requested but no surfaces defined");
  }
}

std::vector<std::string> PresetNames() { return {"machine-hall-x", "vicon-turns", "corridor"}; }

SceneConfig PresetScene(std::string_view name) {
  if (name == "machine-hall-x") return MachineHallX();
  if (name == "vicon-turns") return ViconTurns();
  if (name == "corridor") return Corridor();
  Invalid("unknown scene preset '" + std::string(name) + "'");
}

SceneConfig ParseSceneConfig(const YAML::Node& node) {
  try {
    CheckKeys(node,
              {"preset", "name", "seed", "lines", "points", "frame_rate", "intrinsics",
               "trajectory", "surfaces", "noise"},
              "scene");
    SceneConfig c;
    if (node["preset"]) c = PresetScene(node["preset"].as<std::string>());
    Read(node, "name", &c.name);
    Read(node, "seed", &c.seed);
    Read(node, "frame_rate", &c.frame_rate);

    if (const YAML::Node lines = node["lines"]) {
      CheckKeys(lines,
                {"count", "parallel_fraction", "direction_mix", "min_length", "max_length",
                 "min_separation"},
                "lines");
      Read(lines, "count", &c.line_count);
      Read(lines, "parallel_fraction", &c.parallel_fraction);
      ReadVec(lines, "direction_mix", &c.direction_mix);
      Read(lines, "min_length", &c.min_line_length);
      Read(lines, "max_length", &c.max_line_length);
      Read(lines, "min_separation", &c.min_line_separation);
    }
    if (const YAML::Node points = node["points"]) {
      CheckKeys(points, {"count"}, "points");
      Read(points, "count", &c.point_count);
    }
    if (const YAML::Node k = node["intrinsics"]) {
      CheckKeys(k, {"fx", "fy", "cx", "cy", "width", "height"}, "intrinsics");
      Read(k, "fx", &c.intrinsics.fx);
      Read(k, "fy", &c.intrinsics.fy);
      Read(k, "cx", &c.intrinsics.cx);
      Read(k, "cy", &c.intrinsics.cy);
      Read(k, "width", &c.intrinsics.width);
      Read(k, "height", &c.intrinsics.height);
    }
    if (const YAML::Node t = node["trajectory"]) {
      CheckKeys(t, {"start", "forward", "up", "legs"}, "trajectory");
      ReadVec(t, "start", &c.trajectory.start);
      ReadVec(t, "forward", &c.trajectory.forward);
      ReadVec(t, "up", &c.trajectory.up);
      if (const YAML::Node legs = t["legs"]) {
        c.trajectory.legs.clear();
        for (const YAML::Node& l : legs) {
          CheckKeys(l, {"frames", "translation", "yaw_deg"}, "trajectory leg");
          TrajectoryLeg leg;
          Read(l, "frames", &leg.frames);
          ReadVec(l, "translation", &leg.translation);
          Read(l, "yaw_deg", &leg.yaw_deg);
          c.trajectory.legs.push_back(leg);
        }
      }
    }
    if (const YAML::Node surfaces = node["surfaces"]) {
      c.surfaces.clear();
      for (const YAML::Node& s : surfaces) {
        CheckKeys(s, {"origin", "u_axis", "v_axis", "u_extent", "v_extent"}, "surface");
        SurfaceSpec spec;
        ReadVec(s, "origin", &spec.origin);
        ReadVec(s, "u_axis", &spec.u_axis);
        ReadVec(s, "v_axis", &spec.v_axis);
        Read(s, "u_extent", &spec.u_extent);
        Read(s, "v_extent", &spec.v_extent);
        c.surfaces.push_back(spec);
      }
    }
    if (const YAML::Node n = node["noise"]) {
      CheckKeys(n,
                {"endpoint_sigma", "point_sigma", "split_p", "cut_p", "flow_sigma",
                 "prior_sigma_t", "prior_sigma_r_deg"},
                "noise");
      Read(n, "endpoint_sigma", &c.noise.endpoint_sigma);
      Read(n, "point_sigma", &c.noise.point_sigma);
      Read(n, "split_p", &c.noise.split_p);
      Read(n, "cut_p", &c.noise.cut_p);
      Read(n, "flow_sigma", &c.noise.flow_sigma);
      Read(n, "prior_sigma_t", &c.noise.prior_sigma_t);
      Read(n, "prior_sigma_r_deg", &c.noise.prior_sigma_r_deg);
    }
    c.Validate();
    return c;
  } catch (const YAML::Exception& e) {
    Invalid(std::string("malformed scene config: ") + e.what());
  }
}

SceneConfig LoadSceneConfig(const std::filesystem::path& path) {
  YAML::Node node;
  try {
    node = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::kInvalidConfig, "cannot read " + path.string() + ": " + e.what());
  }
  return ParseSceneConfig(node);
}

}  // namespace plslam
