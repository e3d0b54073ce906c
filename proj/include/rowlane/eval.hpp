#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rowlane/grid.hpp"

namespace rowlane {

/// Lane polyline in original-image pixel coordinates.
using Polyline = std::vector<PixelPoint>;

/// Binary coverage mask, one bit per pixel, row-major.
class RasterMask {
 public:
  RasterMask() = default;
  RasterMask(int width, int height);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  bool test(int x, int y) const noexcept {
    const auto i = index(x, y);
    return (words_[i >> 6] >> (i & 63)) & 1u;
  }
  void set(int x, int y) noexcept {
    const auto i = index(x, y);
    words_[i >> 6] |= std::uint64_t{1} << (i & 63);
  }

  std::size_t count() const noexcept;
  bool empty() const noexcept { return count() == 0; }
  std::size_t intersection_count(const RasterMask& other) const;
  std::size_t union_count(const RasterMask& other) const;

  friend bool operator==(const RasterMask&, const RasterMask&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Sets every pixel whose center (x + 0.5, y + 0.5) lies within
/// stroke_width / 2 of some segment of `line` (round caps and joins). A
/// polyline with fewer than two points or zero total length yields an empty
/// mask.
RasterMask rasterize_lane(const Polyline& line, int width, int height, double stroke_width = 30.0);

/// |a & b| / |a | b|; 0 when both are empty. Throws InvalidInput on dim mismatch.
double lane_iou(const RasterMask& a, const RasterMask& b);

struct MatchCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  MatchCounts& operator+=(const MatchCounts& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const MatchCounts&, const MatchCounts&) = default;
};

/// One-to-one greedy matching: candidate pairs are visited by descending IoU
/// (ties by prediction index, then ground-truth index) and a pair is accepted
/// when both sides are free and IoU is strictly above `iou_threshold`.
MatchCounts match_lanes(const std::vector<RasterMask>& preds, const std::vector<RasterMask>& gts,
                        double iou_threshold = 0.5);

struct Scores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Precision, recall and their harmonic mean; each is 0 when its
/// denominator is 0.
Scores f1_measure(std::size_t tp, std::size_t fp, std::size_t fn);

struct EvalConfig {
  int image_width = 1640;
  int image_height = 590;
  double stroke_width = 30.0;
  double iou_threshold = 0.5;
};

struct FrameRef {
  std::string path;
  std::string category;
};

/// Lanes of one frame, or nullopt when the source has no entry for it.
using LaneSource = std::function<std::optional<std::vector<Polyline>>(const std::string& frame)>;

struct CategoryRow {
  std::string category;
  MatchCounts counts;
  Scores scores;
  std::size_t frames = 0;
  /// Category whose ground truth has no lanes by construction; only fp is meaningful.
  bool fp_only = false;
};

struct EvalReport {
  /// Fixed order: known CULane categories first, then others by name.
  std::vector<CategoryRow> categories;
  CategoryRow total;
  /// Frames without a prediction entry; evaluated as empty predictions.
  std::vector<std::string> missing_predictions;

  const CategoryRow* find(std::string_view category) const;
};

/// CULane test categories in their published order.
const std::vector<std::string>& culane_categories();

/// Categories reported as false-positive counts only ("cross").
bool is_fp_only_category(std::string_view category);

/// Per-frame match counts.
MatchCounts evaluate_frame(const std::vector<Polyline>& preds, const std::vector<Polyline>& gts,
                           const EvalConfig& config);

/// Aggregates evaluate_frame over `frames`. Throws InvalidInput when the
/// ground truth source lacks a frame. Frames are evaluated in order and
/// summed in order.
EvalReport evaluate_split(const std::vector<FrameRef>& frames, const LaneSource& predictions,
                          const LaneSource& ground_truth, const EvalConfig& config = {});

/// Tab-separated table with header
///   category, tp, fp, fn, precision, recall, f1
/// one row per category, then "total". FP-only rows carry "-" in every column
/// but fp. Reals use 6 decimal places.
std::string report_tsv(const EvalReport& report);

/// "key=value" lines: "<category>.<column>=<value>", same columns as the table.
std::string report_key_values(const EvalReport& report);

}  // namespace rowlane
