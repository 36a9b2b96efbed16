#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "plslam/degeneracy.h"
#include "plslam/projective.h"

namespace plslam {

struct TrackingConfig {
  CameraIntrinsics intrinsics;
  // Detections shorter than this (pixels) are discarded before matching.
  double min_pixel_length = 50.0;

  // Geometric match score = angle term * distance term * overlap (IoU).
  double angle_gate = 10.0 * kDegToRad;
  double dist_gate = 0.1;  // normalized image units
  double score_min = 0.5;

  // A prediction is supported by a detection that lies on it (within these
  // gates) and whose extent is mostly covered by the prediction.
  double support_angle = 3.0 * kDegToRad;
  double support_dist = 0.01;
  double support_overlap = 0.7;

  bool merging = true;
};

enum class TrackStatus { kActive, kLost };

struct TrackedLine {
  FeatureId feature_id = kInvalidFeature;
  std::vector<LineObservation> history;
  TrackStatus status = TrackStatus::kActive;

  int frames_tracked() const { return static_cast<int>(history.size()); }
};

/// Maps a point on the normalized image plane at frame t-1 to its location at
/// frame t; nullopt where the motion is unknown.
class FlowField {
 public:
  using Map = std::function<std::optional<Vec2>(const Vec2&)>;

  FlowField() = default;
  explicit FlowField(Map map) : map_(std::move(map)) {}

  static FlowField Identity();
  static FlowField Uniform(const Vec2& shift);

  bool valid() const { return static_cast<bool>(map_); }
  std::optional<Vec2> Displace(const Vec2& p) const { return map_ ? map_(p) : std::nullopt; }

 private:
  Map map_;
};

struct LineMatch {
  int detected = -1;
  int reference = -1;
  double score = 0.0;
};

/// In [0, 1]; zero outside the angle or distance gate.
double MatchScore(const LineObservation& detected, const LineObservation& reference,
                  const TrackingConfig& config);

/// Clips a segment to the axis-aligned box [lo, hi]; nullopt if nothing remains.
std::optional<std::pair<Vec2, Vec2>> ClipSegment(const Vec2& a, const Vec2& b, const Vec2& lo,
                                                 const Vec2& hi);

/// One entry per previous observation: the flow-displaced segment clipped to
/// the image, or nullopt when flow is undefined or the segment leaves the
/// image or falls below the minimum length.
std::vector<std::optional<LineObservation>> PredictLines(std::span<const LineObservation> prev,
                                                         const FlowField& flow,
                                                         const TrackingConfig& config);

/// Greedy one-to-one matching in descending score; ties go to the longer
/// detection, then the lower detection feature id (index when unset).
std::vector<LineMatch> MatchLines(std::span<const LineObservation> detected,
                                  std::span<const LineObservation> reference,
                                  const TrackingConfig& config);

/// Observation assigned to a track at the current frame.
struct TrackUpdate {
  LineObservation observation;  // feature_id = track id
  int source_detection = -1;    // detection index, or a supporting detection for predictions
  bool predicted = false;
};

/// Track state that `Merge` updates in place.
struct TrackSet {
  std::vector<TrackedLine> tracks;
  FeatureId next_id = 0;
};

/// Resolves one frame. `active` indexes tracks in `set` whose last
/// observation is the reference; `preliminary` matches detections to
/// positions in `active`; `predictions` is aligned with `active`.
std::vector<TrackUpdate> Merge(TrackSet* set, std::span<const int> active,
                               std::span<const LineMatch> preliminary,
                               std::span<const std::optional<LineObservation>> predictions,
                               std::span<const LineObservation> detected, FrameId frame,
                               const TrackingConfig& config);

/// Fraction of tracks observed in at least `min_windows` frames.
/// Throws kEmptyTrackSet.
double RetentionRatio(std::span<const TrackedLine> tracks, int min_windows = 5);

/// Sequential front end: length filter, preliminary matching against the
/// previous frame, flow prediction, and merge.
class LineTracker {
 public:
  explicit LineTracker(TrackingConfig config) : config_(std::move(config)) {}

  /// Detections in normalized coordinates. `flow` maps the previous frame
  /// into this one; pass an invalid FlowField for the first frame.
  std::vector<TrackUpdate> Process(FrameId frame, std::span<const LineObservation> detections,
                                   const FlowField& flow);

  const std::vector<TrackedLine>& tracks() const { return set_.tracks; }
  const TrackingConfig& config() const { return config_; }

 private:
  TrackingConfig config_;
  TrackSet set_;
};

}  // namespace plslam
