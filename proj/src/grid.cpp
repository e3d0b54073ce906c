#include "rowlane/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rowlane/error.hpp"

namespace rowlane {

void GridSpec::validate() const {
  if (num_lanes < 1) throw InvalidInput("grid: num_lanes must be >= 1");
  if (num_anchors < 2) throw InvalidInput("grid: num_anchors must be >= 2");
  if (num_cells < 2) throw InvalidInput("grid: num_cells must be >= 2");
  if (image_width < 1 || image_height < 1) throw InvalidInput("grid: image dims must be positive");
  if (crop_top < 0 || crop_top >= crop_bottom || crop_bottom > image_height) {
    throw InvalidInput("grid: crop must satisfy 0 <= top < bottom <= image_height");
  }
}

ScoreTensor::ScoreTensor(int lanes, int anchors, int classes)
    : ScoreTensor(lanes, anchors, classes,
                  std::vector<double>(static_cast<std::size_t>(std::max(lanes, 0)) *
                                      std::max(anchors, 0) * std::max(classes, 0))) {}

ScoreTensor::ScoreTensor(int lanes, int anchors, int classes, std::vector<double> values)
    : lanes_(lanes), anchors_(anchors), classes_(classes), values_(std::move(values)) {
  if (lanes < 1 || anchors < 1 || classes < 2) {
    throw InvalidInput("score tensor: dims must be positive with at least 2 classes");
  }
  if (values_.size() != static_cast<std::size_t>(lanes) * anchors * classes) {
    throw InvalidInput("score tensor: value count does not match dims");
  }
}

ScoreTensor ScoreTensor::zeros(const GridSpec& spec) {
  return ScoreTensor(spec.num_lanes, spec.num_anchors, spec.row_length());
}

bool ScoreTensor::matches(const GridSpec& spec) const noexcept {
  return lanes_ == spec.num_lanes && anchors_ == spec.num_anchors && classes_ == spec.row_length();
}

void ScoreTensor::require_matches(const GridSpec& spec) const {
  if (!matches(spec)) {
    throw InvalidInput("score tensor dims " + std::to_string(lanes_) + "x" + std::to_string(anchors_) +
                       "x" + std::to_string(classes_) + " do not match grid " +
                       std::to_string(spec.num_lanes) + "x" + std::to_string(spec.num_anchors) + "x" +
                       std::to_string(spec.row_length()));
  }
}

std::size_t LaneSet::non_empty() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(lanes.begin(), lanes.end(), [](const Lane& l) { return !l.empty(); }));
}

std::size_t LaneSet::total_points() const noexcept {
  std::size_t n = 0;
  for (const auto& l : lanes) n += l.size();
  return n;
}

void validate_lane_set(const LaneSet& lanes, const GridSpec& spec) {
  if (lanes.slots() != static_cast<std::size_t>(spec.num_lanes)) {
    throw InvalidInput("lane set: expected " + std::to_string(spec.num_lanes) + " slots, got " +
                       std::to_string(lanes.slots()));
  }
  for (const auto& lane : lanes.lanes) {
    int prev = 0;
    for (const auto& p : lane) {
      if (p.anchor <= prev || p.anchor > spec.num_anchors) {
        throw InvalidInput("lane set: anchors must be strictly increasing within [1, h]");
      }
      if (!(p.cell >= 1.0 && p.cell <= spec.num_cells)) {
        throw InvalidInput("lane set: cell position outside [1, w]");
      }
      prev = p.anchor;
    }
  }
}

LaneSet decode_locations(const ScoreTensor& scores, const GridSpec& spec) {
  scores.require_matches(spec);
  LaneSet out(static_cast<std::size_t>(spec.num_lanes));
  for (int i = 0; i < spec.num_lanes; ++i) {
    for (int j = 0; j < spec.num_anchors; ++j) {
      auto row = scores.row(i, j);
      // max_element returns the first maximum, i.e. the lowest class on ties.
      const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()) + 1;
      if (best <= spec.num_cells) out.lanes[i].push_back({j + 1, static_cast<double>(best)});
    }
  }
  return out;
}

ScoreTensor softmax_probabilities(const ScoreTensor& scores) {
  ScoreTensor probs = scores;
  for (int i = 0; i < scores.lanes(); ++i) {
    for (int j = 0; j < scores.anchors(); ++j) {
      auto row = probs.row(i, j);
      const double peak = *std::max_element(row.begin(), row.end());
      double sum = 0.0;
      for (double& v : row) {
        v = std::exp(v - peak);
        sum += v;
      }
      for (double& v : row) v /= sum;
    }
  }
  return probs;
}

double anchor_row(const GridSpec& spec, int anchor) {
  if (anchor < 1 || anchor > spec.num_anchors) {
    throw InvalidInput("anchor index " + std::to_string(anchor) + " outside [1, " +
                       std::to_string(spec.num_anchors) + "]");
  }
  if (anchor == spec.num_anchors) return spec.crop_bottom;
  const double step = static_cast<double>(spec.crop_bottom - spec.crop_top) / (spec.num_anchors - 1);
  return spec.crop_top + (anchor - 1) * step;
}

PixelPoint cell_to_pixel(const GridSpec& spec, int anchor, double cell) {
  const double y = anchor_row(spec, anchor);
  if (!(cell >= 1.0 && cell <= spec.num_cells)) {
    throw InvalidInput("cell position outside [1, " + std::to_string(spec.num_cells) + "]");
  }
  const double x = (cell - 0.5) * spec.image_width / spec.num_cells;
  return {std::clamp(x, 0.0, static_cast<double>(spec.image_width)),
          std::clamp(y, 0.0, static_cast<double>(spec.image_height))};
}

double pixel_to_cell(const GridSpec& spec, double x) {
  return x * spec.num_cells / spec.image_width + 0.5;
}

std::vector<PixelPoint> lane_to_pixels(const GridSpec& spec, const Lane& lane) {
  std::vector<PixelPoint> out;
  out.reserve(lane.size());
  for (const auto& p : lane) out.push_back(cell_to_pixel(spec, p.anchor, p.cell));
  return out;
}

// Lane files store coordinates to 1e-3 px; endpoints that rounding moved just
// past an anchor row (or the grid edge) still count as on it.
constexpr double kPixelTolerance = 1e-3;

Lane pixels_to_lane(const GridSpec& spec, std::span<const PixelPoint> points) {
  Lane lane;
  if (points.size() < 2) return lane;
  for (int j = 1; j <= spec.num_anchors; ++j) {
    const double y = anchor_row(spec, j);
    // First segment whose vertical extent contains the anchor row.
    for (std::size_t s = 0; s + 1 < points.size(); ++s) {
      const PixelPoint& a = points[s];
      const PixelPoint& b = points[s + 1];
      const double lo = std::min(a.y, b.y);
      const double hi = std::max(a.y, b.y);
      if (y < lo - kPixelTolerance || y > hi + kPixelTolerance) continue;
      double x;
      if (a.y == b.y) {
        x = a.x;
      } else {
        const double t = std::clamp((y - a.y) / (b.y - a.y), 0.0, 1.0);
        x = a.x + t * (b.x - a.x);
      }
      const double cell = pixel_to_cell(spec, x);
      const double slack = kPixelTolerance * spec.num_cells / spec.image_width;
      if (cell >= 1.0 - slack && cell <= spec.num_cells + slack) {
        lane.push_back({j, std::clamp(cell, 1.0, static_cast<double>(spec.num_cells))});
      }
      break;
    }
  }
  return lane;
}

TargetGrid::TargetGrid(int lanes, int anchors, int fill)
    : lanes_(lanes), anchors_(anchors), cells_(static_cast<std::size_t>(lanes) * anchors, fill) {}

TargetGrid TargetGrid::from_lanes(const LaneSet& lanes, const GridSpec& spec) {
  validate_lane_set(lanes, spec);
  TargetGrid t(spec.num_lanes, spec.num_anchors, spec.absence_class());
  for (int i = 0; i < spec.num_lanes; ++i) {
    for (const auto& p : lanes.lanes[i]) {
      t.at(i, p.anchor - 1) = std::clamp(static_cast<int>(std::lround(p.cell)), 1, spec.num_cells);
    }
  }
  return t;
}

ScoreTensor one_hot_scores(const TargetGrid& targets, const GridSpec& spec, double hot, double cold) {
  if (targets.lanes() != spec.num_lanes || targets.anchors() != spec.num_anchors) {
    throw InvalidInput("target grid dims do not match grid spec");
  }
  ScoreTensor s(spec.num_lanes, spec.num_anchors, spec.row_length(),
                std::vector<double>(static_cast<std::size_t>(spec.num_lanes) * spec.num_anchors *
                                        spec.row_length(),
                                    cold));
  for (int i = 0; i < spec.num_lanes; ++i) {
    for (int j = 0; j < spec.num_anchors; ++j) {
      const int t = targets.at(i, j);
      if (t < 1 || t > spec.row_length()) throw InvalidInput("target class out of range");
      s.at(i, j, t - 1) = hot;
    }
  }
  return s;
}

}  // namespace rowlane
