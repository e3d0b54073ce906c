#pragma once

#include <span>

#include "rowlane/grid.hpp"

namespace rowlane {

struct SuppressionConfig {
  /// Lanes with fewer points are dropped.
  int min_points = 12;
  /// Lanes whose |Pearson r| over (anchor, cell) falls below this are dropped.
  double min_abs_r = 0.995;

  void validate() const;
};

/// cell ~= a * anchor^2 + b * anchor + c0
struct QuadCoeffs {
  double a = 0.0;
  double b = 0.0;
  double c0 = 0.0;

  double operator()(double anchor) const noexcept { return (a * anchor + b) * anchor + c0; }
};

/// Sample Pearson correlation coefficient. Throws DegenerateInput for fewer
/// than two samples or zero spread in either sequence, InvalidInput for
/// length mismatch.
double pearson_r(std::span<const double> xs, std::span<const double> ys);

/// Empties lane slots holding fewer than `min_points` points.
LaneSet suppress_short(const LaneSet& lanes, int min_points);

/// Empties lane slots whose points are not close enough to a straight line.
///
/// Anchors are the x variable and cells the y variable. A lane whose cells do
/// not vary (spread below 1e-9) is a perfectly vertical line in the image:
/// it is kept when it has at least `config.min_points` points and dropped
/// otherwise. Any other degenerate lane (fewer than two points) is dropped.
LaneSet suppress_nonlinear(const LaneSet& lanes, const SuppressionConfig& config);

/// Least-squares quadratic through (anchor, cell) pairs. Solved on centered
/// anchors with an orthogonal polynomial basis and reported in the uncentered
/// basis. Throws Underdetermined with fewer than three distinct anchors.
QuadCoeffs fit_quadratic(std::span<const LanePoint> points);

/// Sum of squared cell residuals of `points` against `curve`.
double fit_residual(std::span<const LanePoint> points, const QuadCoeffs& curve);

/// Replaces each fit-eligible lane's cells by its fitted quadratic evaluated
/// at the lane's own anchors, clamped to [1, w]. Lanes with fewer than three
/// distinct anchors pass through unchanged.
LaneSet smooth_lanes(const LaneSet& lanes, const GridSpec& spec);

/// Which post-processing stages run. All on reproduces the full pipeline,
/// all off the bare decoder.
struct StageToggles {
  bool suppress_length = true;
  bool suppress_linearity = true;
  bool curve_fit = true;
};

/// suppress_short -> suppress_nonlinear -> smooth_lanes, each gated by its toggle.
LaneSet postprocess(const LaneSet& lanes, const GridSpec& spec, const SuppressionConfig& config,
                    const StageToggles& toggles = {});

}  // namespace rowlane
