#include "plslam/evaluation.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include <Eigen/Geometry>

#include "json.hpp"
#include "plslam/error.h"

namespace plslam {

namespace {

using Json = nlohmann::ordered_json;

std::string Num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

Eigen::Matrix3Xd ToMatrix(std::span<const Vec3> points) {
  Eigen::Matrix3Xd m(3, points.size());
  for (std::size_t i = 0; i < points.size(); ++i) m.col(i) = points[i];
  return m;
}

CameraPose FitAlignment(std::span<const Vec3> estimate, std::span<const Vec3> groundtruth,
                        Alignment alignment) {
  if (estimate.size() != groundtruth.size()) {
    throw Error(ErrorCode::kLengthMismatch, "trajectories differ in length (" +
                                                std::to_string(estimate.size()) + " vs " +
                                                std::to_string(groundtruth.size()) + ")");
  }
  CameraPose t;
  if (estimate.empty() || alignment == Alignment::kNone) return t;
  if (alignment == Alignment::kRigid) {
    const Eigen::Matrix4d m = Eigen::umeyama(ToMatrix(estimate), ToMatrix(groundtruth), false);
    t.rotation = m.topLeftCorner<3, 3>();
    t.translation = m.topRightCorner<3, 1>();
    return t;
  }
  Vec3 ce = Vec3::Zero();
  Vec3 cg = Vec3::Zero();
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    ce += estimate[i];
    cg += groundtruth[i];
  }
  ce /= static_cast<double>(estimate.size());
  cg /= static_cast<double>(estimate.size());
  double sin_sum = 0.0;
  double cos_sum = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const Vec3 e = estimate[i] - ce;
    const Vec3 g = groundtruth[i] - cg;
    sin_sum += e.x() * g.y() - e.y() * g.x();
    cos_sum += e.x() * g.x() + e.y() * g.y();
  }
  t.rotation = RotationZ(std::atan2(sin_sum, cos_sum));
  t.translation = cg - t.rotation * ce;
  return t;
}

void WriteFile(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw Error(ErrorCode::kIoFailure, "failed writing " + path.string());
}

std::string TrajectoryCsv(std::span<const TrajectorySample> samples) {
  std::string out = "timestamp,x,y,z,qx,qy,qz,qw\n";
  for (const TrajectorySample& s : samples) {
    Eigen::Quaterniond q(s.pose.rotation);
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    const Vec3& t = s.pose.translation;
    out += Num(s.timestamp) + "," + Num(t.x()) + "," + Num(t.y()) + "," + Num(t.z()) + "," +
           Num(q.x()) + "," + Num(q.y()) + "," + Num(q.z()) + "," + Num(q.w()) + "\n";
  }
  return out;
}

Json KindMap(const std::array<double, kNumResidualKinds>& values) {
  return Json{{"line_reprojection", values[0]},
              {"point_reprojection", values[1]},
              {"structural", values[2]},
              {"pose_prior", values[3]},
              {"line_prior", values[4]}};
}

}  // namespace

Alignment ParseAlignment(std::string_view name) {
  if (name == "none") return Alignment::kNone;
  if (name == "rigid") return Alignment::kRigid;
  if (name == "yaw") return Alignment::kYaw;
  throw Error(ErrorCode::kInvalidConfig, "unknown alignment '" + std::string(name) + "'");
}

std::string_view AlignmentName(Alignment alignment) {
  switch (alignment) {
    case Alignment::kNone: return "none";
    case Alignment::kRigid: return "rigid";
    case Alignment::kYaw: return "yaw";
  }
  return "unknown";
}

std::vector<Vec3> AlignTrajectory(std::span<const Vec3> estimate,
                                  std::span<const Vec3> groundtruth, Alignment alignment) {
  const CameraPose t = FitAlignment(estimate, groundtruth, alignment);
  std::vector<Vec3> out;
  out.reserve(estimate.size());
  for (const Vec3& p : estimate) out.push_back(t.Apply(p));
  return out;
}

AteResult ComputeAte(std::span<const Vec3> estimate, std::span<const Vec3> groundtruth,
                     Alignment alignment) {
  const std::vector<Vec3> aligned = AlignTrajectory(estimate, groundtruth, alignment);
  AteResult result;
  if (aligned.empty()) return result;
  double sum = 0.0;
  for (std::size_t i = 0; i < aligned.size(); ++i) {
    const double e = (aligned[i] - groundtruth[i]).norm();
    sum += e * e;
    result.max_error = std::max(result.max_error, e);
  }
  result.rmse = std::min(std::sqrt(sum / static_cast<double>(aligned.size())), result.max_error);
  return result;
}

std::vector<DistanceErrorSample> RelativeErrors(std::span<const TrajectorySample> estimate,
                                                std::span<const TrajectorySample> groundtruth,
                                                std::span<const double> fractions) {
  if (estimate.size() != groundtruth.size()) {
    throw Error(ErrorCode::kLengthMismatch, "trajectories differ in length");
  }
  const std::size_t n = groundtruth.size();
  std::vector<double> travelled(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    travelled[i] = travelled[i - 1] +
                   (groundtruth[i].pose.translation - groundtruth[i - 1].pose.translation).norm();
  }
  std::vector<DistanceErrorSample> samples;
  if (n < 2 || travelled.back() <= 0.0) return samples;

  for (double fraction : fractions) {
    const double length = fraction * travelled.back();
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
      j = std::max(j, i);
      while (j < n && travelled[j] - travelled[i] < length) ++j;
      if (j >= n) break;
      const CameraPose gt_rel = groundtruth[i].pose.Inverse() * groundtruth[j].pose;
      const CameraPose est_rel = estimate[i].pose.Inverse() * estimate[j].pose;
      const CameraPose err = gt_rel.Inverse() * est_rel;
      samples.push_back({length, err.translation.norm()});
    }
  }
  return samples;
}

double DirectionError(const Vec3& a, const Vec3& b) {
  if (a.norm() == 0.0 || b.norm() == 0.0) return std::numbers::pi / 2.0;
  return std::atan2(a.cross(b).norm(), std::abs(a.dot(b)));
}

void EmitReports(const MetricsRecord& record, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoFailure, "cannot create " + dir.string() + ": " + ec.message());

  Json toggles = Json::object();
  for (const auto& [name, on] : record.toggles) toggles[name] = on;
  Json terminations = Json::object();
  for (const auto& [name, count] : record.terminations) terminations[name] = count;
  const BlockCounts& bc = record.block_counts;

  Json metrics{
      {"scene", record.scene},
      {"seed", record.seed},
      {"toggles", toggles},
      {"num_frames", record.estimate.size()},
      {"alignment", std::string(AlignmentName(record.alignment))},
      {"ate_rmse_m", record.ate.rmse},
      {"ate_max_m", record.ate.max_error},
      {"lines",
       {{"count", record.lines.size()},
        {"degenerate", record.num_degenerate},
        {"nondegenerate", record.num_nondegenerate},
        {"mean_degenerate_direction_error_rad", record.mean_degenerate_error},
        {"mean_nondegenerate_direction_error_rad", record.mean_nondegenerate_error}}},
      {"tracking", {{"num_tracks", record.num_tracks}, {"retention_ratio", record.retention_ratio}}},
      {"optimizer",
       {{"windows_solved", record.windows_solved},
        {"final_cost_by_term", KindMap(record.final_cost_by_kind)},
        {"block_counts",
         {{"line_reprojection", bc[0]}, {"point_reprojection", bc[1]}, {"structural", bc[2]},
          {"pose_prior", bc[3]}, {"line_prior", bc[4]}}},
        {"terminations", terminations}}},
  };
  WriteFile(dir / "metrics.json", metrics.dump(2) + "\n");

  WriteFile(dir / "trajectory.csv", TrajectoryCsv(record.estimate));
  WriteFile(dir / "groundtruth.csv", TrajectoryCsv(record.groundtruth));

  std::string lines =
      "id,truth_id,nx,ny,nz,dx,dy,dz,truth_dx,truth_dy,truth_dz,degenerate,observations,"
      "direction_error_rad\n";
  for (const LineReport& l : record.lines) {
    const Vec3& n = l.plucker.n;
    const Vec3& d = l.plucker.d;
    const Vec3& g = l.truth_direction;
    lines += std::to_string(l.id) + "," + std::to_string(l.truth_id) + "," + Num(n.x()) + "," +
             Num(n.y()) + "," + Num(n.z()) + "," + Num(d.x()) + "," + Num(d.y()) + "," +
             Num(d.z()) + "," + Num(g.x()) + "," + Num(g.y()) + "," + Num(g.z()) + "," +
             (l.degenerate ? "1" : "0") + "," + std::to_string(l.observations) + "," +
             Num(l.direction_error) + "\n";
  }
  WriteFile(dir / "lines.csv", lines);

  std::string dist = "distance_m,error_m\n";
  for (const DistanceErrorSample& s : record.distance_errors) {
    dist += Num(s.distance) + "," + Num(s.error) + "\n";
  }
  WriteFile(dir / "error_vs_distance.csv", dist);

  const Timings& t = record.timings;
  const Json timings{{"total_seconds", t.total_seconds},
                     {"tracking_seconds", t.tracking_seconds},
                     {"solve_seconds", t.solve_seconds},
                     {"max_solve_seconds", t.max_solve_seconds}};
  WriteFile(dir / "timings.json", timings.dump(2) + "\n");
}

std::vector<TrajectorySample> ReadTrajectoryCsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("timestamp,x,y,z,qx,qy,qz,qw", 0) != 0) {
    throw Error(ErrorCode::kIoFailure, path.string() + ": unexpected header '" + line + "'");
  }
  std::vector<TrajectorySample> samples;
  FrameId frame = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    double v[8];
    int count = 0;
    while (std::getline(ss, cell, ',') && count < 8) {
      try {
        v[count++] = std::stod(cell);
      } catch (const std::exception&) {
        throw Error(ErrorCode::kIoFailure, path.string() + ": malformed value '" + cell + "'");
      }
    }
    if (count != 8) throw Error(ErrorCode::kIoFailure, path.string() + ": expected 8 columns");
    TrajectorySample s;
    s.frame = frame++;
    s.timestamp = v[0];
    s.pose.translation = Vec3(v[1], v[2], v[3]);
    s.pose.rotation = Eigen::Quaterniond(v[7], v[4], v[5], v[6]).normalized().toRotationMatrix();
    samples.push_back(s);
  }
  return samples;
}

}  // namespace plslam
