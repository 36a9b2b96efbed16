#include "plslam/tracking.h"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "plslam/error.h"

namespace plslam {

namespace {

// Homogeneous line scaled so that |l . (x, y, 1)| is a Euclidean distance.
Vec3 NormalizedLine(const LineObservation& obs) {
  const Vec3 l = obs.line();
  const double n = l.head<2>().norm();
  return n > 0.0 ? Vec3(l / n) : Vec3::Zero();
}

double DirectionAngle(const LineObservation& a, const LineObservation& b) {
  const Vec2 da = a.e2() - a.s2();
  const Vec2 db = b.e2() - b.s2();
  const double c = std::abs(da.dot(db)) / (da.norm() * db.norm());
  return std::acos(std::clamp(c, 0.0, 1.0));
}

// Interval of `obs` projected on the axis of `ref`, measured from ref.s.
std::pair<double, double> ProjectedInterval(const LineObservation& obs,
                                            const LineObservation& ref) {
  const Vec2 axis = (ref.e2() - ref.s2()).normalized();
  const double a = axis.dot(obs.s2() - ref.s2());
  const double b = axis.dot(obs.e2() - ref.s2());
  return {std::min(a, b), std::max(a, b)};
}

double IntervalIoU(std::pair<double, double> p, std::pair<double, double> q) {
  const double inter = std::min(p.second, q.second) - std::max(p.first, q.first);
  const double uni = std::max(p.second, q.second) - std::min(p.first, q.first);
  if (inter <= 0.0 || uni <= 0.0) return 0.0;
  return inter / uni;
}

bool Supports(const LineObservation& prediction, const LineObservation& det,
              const TrackingConfig& config) {
  if (prediction.length() <= 0.0 || det.length() <= 0.0) return false;
  if (DirectionAngle(prediction, det) >= config.support_angle) return false;
  const Vec3 l = NormalizedLine(prediction);
  if (std::max(std::abs(l.dot(det.s)), std::abs(l.dot(det.e))) >= config.support_dist) {
    return false;
  }
  const auto [lo, hi] = ProjectedInterval(det, prediction);
  const double covered = std::min(hi, prediction.length()) - std::max(lo, 0.0);
  return covered >= config.support_overlap * (hi - lo);
}

double FitError(const LineObservation& prediction, const LineObservation& det) {
  const Vec3 l = NormalizedLine(prediction);
  return std::abs(l.dot(det.s)) + std::abs(l.dot(det.e));
}

// Pieces of one split segment occupy disjoint intervals along the prediction,
// whereas a neighbouring parallel line overlaps them. Starting from `anchor`
// (or the best-fitting candidate), candidates are added in order of fit while
// their interval stays clear of those already chosen.
std::vector<int> DisjointSupport(const LineObservation& prediction,
                                 std::span<const LineObservation> detected,
                                 std::vector<int> candidates, int anchor) {
  std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
    if ((a == anchor) != (b == anchor)) return a == anchor;
    return FitError(prediction, detected[a]) < FitError(prediction, detected[b]);
  });
  constexpr double kMaxOverlap = 0.1;  // of the shorter interval
  std::vector<int> chosen;
  std::vector<std::pair<double, double>> taken;
  for (int d : candidates) {
    const auto iv = ProjectedInterval(detected[d], prediction);
    const bool clear = std::all_of(taken.begin(), taken.end(), [&](const auto& t) {
      const double inter = std::min(iv.second, t.second) - std::max(iv.first, t.first);
      const double shorter = std::min(iv.second - iv.first, t.second - t.first);
      return inter <= kMaxOverlap * shorter;
    });
    if (!clear) continue;
    chosen.push_back(d);
    taken.push_back(iv);
  }
  return chosen;
}

// The prediction's extent laid onto the total-least-squares line through the
// supporting detections' endpoints, so flow error moves the extent only.
LineObservation SnapToSupport(const LineObservation& prediction,
                              std::span<const LineObservation> detected,
                              std::span<const int> support) {
  Vec2 centroid = Vec2::Zero();
  for (int d : support) centroid += detected[d].s2() + detected[d].e2();
  centroid /= 2.0 * static_cast<double>(support.size());
  Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
  for (int d : support) {
    for (const Vec2& p : {detected[d].s2(), detected[d].e2()}) {
      scatter += (p - centroid) * (p - centroid).transpose();
    }
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(scatter);
  const Vec2 axis = eig.eigenvectors().col(1);
  auto snap = [&](const Vec2& p) -> Vec2 { return centroid + axis * axis.dot(p - centroid); };
  LineObservation out = prediction;
  out.s = snap(prediction.s2()).homogeneous();
  out.e = snap(prediction.e2()).homogeneous();
  return out;
}

}  // namespace

FlowField FlowField::Identity() {
  return FlowField([](const Vec2& p) -> std::optional<Vec2> { return p; });
}

FlowField FlowField::Uniform(const Vec2& shift) {
  return FlowField([shift](const Vec2& p) -> std::optional<Vec2> { return p + shift; });
}

double MatchScore(const LineObservation& detected, const LineObservation& reference,
                  const TrackingConfig& config) {
  if (detected.length() <= 0.0 || reference.length() <= 0.0) return 0.0;
  const double angle = DirectionAngle(detected, reference);
  if (angle >= config.angle_gate) return 0.0;

  const Vec3 l_ref = NormalizedLine(reference);
  const Vec3 l_det = NormalizedLine(detected);
  const double dist = 0.25 * (std::abs(l_ref.dot(detected.s)) + std::abs(l_ref.dot(detected.e)) +
                              std::abs(l_det.dot(reference.s)) + std::abs(l_det.dot(reference.e)));
  if (dist >= config.dist_gate) return 0.0;

  const double overlap = IntervalIoU(ProjectedInterval(detected, reference),
                                     ProjectedInterval(reference, reference));
  return (1.0 - angle / config.angle_gate) * (1.0 - dist / config.dist_gate) * overlap;
}

std::optional<std::pair<Vec2, Vec2>> ClipSegment(const Vec2& a, const Vec2& b, const Vec2& lo,
                                                 const Vec2& hi) {
  // Liang-Barsky.
  const Vec2 d = b - a;
  double t0 = 0.0;
  double t1 = 1.0;
  const double p[4] = {-d.x(), d.x(), -d.y(), d.y()};
  const double q[4] = {a.x() - lo.x(), hi.x() - a.x(), a.y() - lo.y(), hi.y() - a.y()};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return std::nullopt;
      continue;
    }
    const double t = q[i] / p[i];
    if (p[i] < 0.0) {
      t0 = std::max(t0, t);
    } else {
      t1 = std::min(t1, t);
    }
    if (t0 > t1) return std::nullopt;
  }
  return std::make_pair(Vec2(a + t0 * d), Vec2(a + t1 * d));
}

std::vector<std::optional<LineObservation>> PredictLines(std::span<const LineObservation> prev,
                                                         const FlowField& flow,
                                                         const TrackingConfig& config) {
  std::vector<std::optional<LineObservation>> out;
  out.reserve(prev.size());
  const bool bounded = config.intrinsics.width > 0 && config.intrinsics.height > 0;
  for (const LineObservation& obs : prev) {
    const auto s = flow.Displace(obs.s2());
    const auto e = flow.Displace(obs.e2());
    if (!s || !e) {
      out.emplace_back();
      continue;
    }
    std::pair<Vec2, Vec2> seg{*s, *e};
    if (bounded) {
      const auto clipped = ClipSegment(*s, *e, config.intrinsics.NormalizedMin(),
                                       config.intrinsics.NormalizedMax());
      if (!clipped) {
        out.emplace_back();
        continue;
      }
      seg = *clipped;
    }
    if (config.intrinsics.PixelLength(seg.first, seg.second) < config.min_pixel_length ||
        (seg.second - seg.first).norm() <= 0.0) {
      out.emplace_back();
      continue;
    }
    out.push_back(LineObservation::FromPoints(seg.first, seg.second, obs.feature_id, obs.frame_id));
  }
  return out;
}

std::vector<LineMatch> MatchLines(std::span<const LineObservation> detected,
                                  std::span<const LineObservation> reference,
                                  const TrackingConfig& config) {
  std::vector<LineMatch> candidates;
  for (int i = 0; i < static_cast<int>(detected.size()); ++i) {
    for (int j = 0; j < static_cast<int>(reference.size()); ++j) {
      const double score = MatchScore(detected[i], reference[j], config);
      if (score > 0.0 && score >= config.score_min) candidates.push_back({i, j, score});
    }
  }
  auto key = [&](int i) {
    return detected[i].feature_id != kInvalidFeature ? detected[i].feature_id
                                                     : static_cast<FeatureId>(i);
  };
  std::sort(candidates.begin(), candidates.end(), [&](const LineMatch& a, const LineMatch& b) {
    if (a.score != b.score) return a.score > b.score;
    const double la = detected[a.detected].length();
    const double lb = detected[b.detected].length();
    if (la != lb) return la > lb;
    if (key(a.detected) != key(b.detected)) return key(a.detected) < key(b.detected);
    return a.reference < b.reference;
  });

  std::vector<bool> used_det(detected.size(), false);
  std::vector<bool> used_ref(reference.size(), false);
  std::vector<LineMatch> matches;
  for (const LineMatch& m : candidates) {
    if (used_det[m.detected] || used_ref[m.reference]) continue;
    used_det[m.detected] = used_ref[m.reference] = true;
    matches.push_back(m);
  }
  return matches;
}

std::vector<TrackUpdate> Merge(TrackSet* set, std::span<const int> active,
                               std::span<const LineMatch> preliminary,
                               std::span<const std::optional<LineObservation>> predictions,
                               std::span<const LineObservation> detected, FrameId frame,
                               const TrackingConfig& config) {
  const int num_det = static_cast<int>(detected.size());
  std::vector<int> claimed_by(num_det, -1);
  std::vector<int> match_of(active.size(), -1);
  for (const LineMatch& m : preliminary) {
    match_of[m.reference] = m.detected;
    claimed_by[m.detected] = m.reference;
  }

  std::vector<TrackUpdate> updates;
  for (int k = 0; k < static_cast<int>(active.size()); ++k) {
    TrackedLine& track = set->tracks[active[k]];
    const LineObservation& reference = track.history.back();

    std::vector<int> support;
    const bool has_prediction = config.merging && k < static_cast<int>(predictions.size()) &&
                                predictions[k].has_value();
    if (has_prediction) {
      for (int d = 0; d < num_det; ++d) {
        if (claimed_by[d] != -1 && claimed_by[d] != k) continue;
        if (Supports(*predictions[k], detected[d], config)) support.push_back(d);
      }
    }
    const int match = match_of[k];
    if (!support.empty()) support = DisjointSupport(*predictions[k], detected, support, match);
    const bool valid_prediction = !support.empty();

    TrackUpdate update;
    if (match >= 0) {
      update.observation = detected[match];
      update.source_detection = match;
      if (valid_prediction) {
        const LineObservation snapped = SnapToSupport(*predictions[k], detected, support);
        if (MatchScore(snapped, reference, config) > MatchScore(detected[match], reference, config)) {
          update.observation = snapped;
          update.predicted = true;
        }
      }
    } else if (valid_prediction) {
      update.observation = SnapToSupport(*predictions[k], detected, support);
      update.predicted = true;
      update.source_detection = *std::max_element(
          support.begin(), support.end(),
          [&](int a, int b) { return detected[a].length() < detected[b].length(); });
    } else {
      track.status = TrackStatus::kLost;
      continue;
    }
    for (int d : support) claimed_by[d] = k;

    update.observation.feature_id = track.feature_id;
    update.observation.frame_id = frame;
    track.history.push_back(update.observation);
    updates.push_back(update);
  }

  for (int d = 0; d < num_det; ++d) {
    if (claimed_by[d] != -1) continue;
    TrackedLine track;
    track.feature_id = set->next_id++;
    LineObservation obs = detected[d];
    obs.feature_id = track.feature_id;
    obs.frame_id = frame;
    track.history.push_back(obs);
    set->tracks.push_back(std::move(track));
    updates.push_back({obs, d, false});
  }
  return updates;
}

double RetentionRatio(std::span<const TrackedLine> tracks, int min_windows) {
  if (tracks.empty()) throw Error(ErrorCode::kEmptyTrackSet, "no tracks to evaluate");
  const auto kept = std::count_if(tracks.begin(), tracks.end(), [&](const TrackedLine& t) {
    return t.frames_tracked() >= min_windows;
  });
  return static_cast<double>(kept) / static_cast<double>(tracks.size());
}

std::vector<TrackUpdate> LineTracker::Process(FrameId frame,
                                              std::span<const LineObservation> detections,
                                              const FlowField& flow) {
  std::vector<LineObservation> filtered;
  std::vector<int> original;
  for (int i = 0; i < static_cast<int>(detections.size()); ++i) {
    const LineObservation& d = detections[i];
    if (config_.intrinsics.PixelLength(d.s2(), d.e2()) < config_.min_pixel_length) continue;
    filtered.push_back(d);
    original.push_back(i);
  }

  std::vector<int> active;
  std::vector<LineObservation> references;
  for (int t = 0; t < static_cast<int>(set_.tracks.size()); ++t) {
    if (set_.tracks[t].status != TrackStatus::kActive) continue;
    active.push_back(t);
    references.push_back(set_.tracks[t].history.back());
  }

  std::vector<std::optional<LineObservation>> predictions(active.size());
  if (config_.merging && flow.valid()) predictions = PredictLines(references, flow, config_);
  // Match against the flow-compensated segment where one exists.
  std::vector<LineObservation> match_refs = references;
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    if (predictions[k]) match_refs[k] = *predictions[k];
  }
  const std::vector<LineMatch> preliminary = MatchLines(filtered, match_refs, config_);

  std::vector<TrackUpdate> updates =
      Merge(&set_, active, preliminary, predictions, filtered, frame, config_);
  for (TrackUpdate& u : updates) {
    if (u.source_detection >= 0) u.source_detection = original[u.source_detection];
  }
  return updates;
}

}  // namespace plslam
