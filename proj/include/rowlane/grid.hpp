#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace rowlane {

/// Geometry of the row-anchor grid: `num_lanes` lane slots, `num_anchors`
/// horizontal row anchors spanning [crop_top, crop_bottom] of the original
/// image, and `num_cells` gridding cells per anchor. Each anchor row of the
/// classifier output carries one extra trailing class meaning "no lane here".
struct GridSpec {
  int num_lanes = 4;
  int num_anchors = 36;
  int num_cells = 150;
  int image_width = 1640;
  int image_height = 590;
  int crop_top = 260;
  int crop_bottom = 590;

  /// Number of classes per anchor row, including the absence class.
  int row_length() const noexcept { return num_cells + 1; }
  int absence_class() const noexcept { return num_cells + 1; }

  /// Throws InvalidInput when any invariant is violated.
  void validate() const;

  /// CULane configuration: 1640x590 frames, 4 lanes, 36 anchors over rows
  /// 260..590, 150 cells.
  static GridSpec culane() { return {}; }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Dense c x h x (w+1) tensor of per-class values, stored in (lane, anchor,
/// class) row-major order. Holds logits straight out of the network, or
/// probabilities after softmax_probabilities().
class ScoreTensor {
 public:
  ScoreTensor() = default;
  ScoreTensor(int lanes, int anchors, int classes);
  ScoreTensor(int lanes, int anchors, int classes, std::vector<double> values);

  /// Zero-filled tensor shaped for `spec`.
  static ScoreTensor zeros(const GridSpec& spec);

  int lanes() const noexcept { return lanes_; }
  int anchors() const noexcept { return anchors_; }
  int classes() const noexcept { return classes_; }
  std::size_t size() const noexcept { return values_.size(); }

  /// 0-based accessors.
  double& at(int lane, int anchor, int cls) { return values_[offset(lane, anchor, cls)]; }
  double at(int lane, int anchor, int cls) const { return values_[offset(lane, anchor, cls)]; }

  std::span<double> row(int lane, int anchor) {
    return {values_.data() + offset(lane, anchor, 0), static_cast<std::size_t>(classes_)};
  }
  std::span<const double> row(int lane, int anchor) const {
    return {values_.data() + offset(lane, anchor, 0), static_cast<std::size_t>(classes_)};
  }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  bool matches(const GridSpec& spec) const noexcept;
  /// Throws InvalidInput if the dims differ from `spec`.
  void require_matches(const GridSpec& spec) const;

  friend bool operator==(const ScoreTensor&, const ScoreTensor&) = default;

 private:
  std::size_t offset(int lane, int anchor, int cls) const noexcept {
    return (static_cast<std::size_t>(lane) * anchors_ + anchor) * classes_ + cls;
  }

  int lanes_ = 0;
  int anchors_ = 0;
  int classes_ = 0;
  std::vector<double> values_;
};

/// One detected lane point. Both indices are 1-based: `anchor` in [1, h],
/// `cell` in [1, w]. Cells are integral straight out of the decoder and
/// fractional after curve fitting.
struct LanePoint {
  int anchor = 1;
  double cell = 1.0;

  friend bool operator==(const LanePoint&, const LanePoint&) = default;
};

/// Points of one lane slot ordered by strictly increasing anchor. Anchors
/// where the lane is absent are simply not present.
using Lane = std::vector<LanePoint>;

/// Exactly one (possibly empty) Lane per lane slot.
struct LaneSet {
  std::vector<Lane> lanes;

  explicit LaneSet(std::size_t slots = 0) : lanes(slots) {}
  explicit LaneSet(std::vector<Lane> l) : lanes(std::move(l)) {}

  std::size_t slots() const noexcept { return lanes.size(); }
  std::size_t non_empty() const noexcept;
  std::size_t total_points() const noexcept;

  friend bool operator==(const LaneSet&, const LaneSet&) = default;
};

/// Throws InvalidInput unless the set has num_lanes slots, anchors are strictly
/// increasing within [1, h] and cells lie in [1, w].
void validate_lane_set(const LaneSet& lanes, const GridSpec& spec);

/// Per-row argmax over classes; a row whose argmax is the absence class
/// contributes no point. Ties resolve to the lowest class index.
LaneSet decode_locations(const ScoreTensor& scores, const GridSpec& spec);

/// Softmax over the class axis of every (lane, anchor) row, max-subtracted.
ScoreTensor softmax_probabilities(const ScoreTensor& scores);

struct PixelPoint {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

/// Maps a (1-based anchor, cell position) pair to original-image pixels.
/// Anchors are spaced evenly with anchor 1 on crop_top and anchor h on
/// crop_bottom; a cell maps to its horizontal center.
PixelPoint cell_to_pixel(const GridSpec& spec, int anchor, double cell);

/// Pixel row of a 1-based anchor.
double anchor_row(const GridSpec& spec, int anchor);

/// Inverse of the horizontal part of cell_to_pixel (unclamped).
double pixel_to_cell(const GridSpec& spec, double x);

/// Pixel polyline of a lane (one point per present anchor, top to bottom).
std::vector<PixelPoint> lane_to_pixels(const GridSpec& spec, const Lane& lane);

/// Samples a pixel polyline at every anchor row it spans, interpolating x
/// linearly between consecutive points. Rows outside the polyline's vertical
/// extent and samples falling outside [1, w] are omitted; both checks allow
/// 1e-3 px of slack so polylines read back from lane files keep their ends.
Lane pixels_to_lane(const GridSpec& spec, std::span<const PixelPoint> points);

/// c x h matrix of 1-based target classes; value w+1 marks absence.
class TargetGrid {
 public:
  TargetGrid() = default;
  TargetGrid(int lanes, int anchors, int fill);

  /// Rounds each lane point to its nearest cell; absent anchors get w+1.
  static TargetGrid from_lanes(const LaneSet& lanes, const GridSpec& spec);

  int lanes() const noexcept { return lanes_; }
  int anchors() const noexcept { return anchors_; }
  int& at(int lane, int anchor) { return cells_[static_cast<std::size_t>(lane) * anchors_ + anchor]; }
  int at(int lane, int anchor) const { return cells_[static_cast<std::size_t>(lane) * anchors_ + anchor]; }

 private:
  int lanes_ = 0;
  int anchors_ = 0;
  std::vector<int> cells_;
};

/// Score tensor with `hot` at each target class and `cold` elsewhere.
ScoreTensor one_hot_scores(const TargetGrid& targets, const GridSpec& spec, double hot = 1.0,
                           double cold = 0.0);

}  // namespace rowlane
