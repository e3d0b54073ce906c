#include "rowlane/postproc.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "rowlane/error.hpp"

namespace rowlane {

namespace {

constexpr double kVerticalSpread = 1e-9;

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

bool linear_enough(const Lane& lane, const SuppressionConfig& config) {
  if (lane.size() < 2) return false;
  std::vector<double> xs, ys;
  xs.reserve(lane.size());
  ys.reserve(lane.size());
  for (const auto& p : lane) {
    xs.push_back(p.anchor);
    ys.push_back(p.cell);
  }
  const double my = mean(ys);
  double spread = 0.0;
  for (double y : ys) spread += (y - my) * (y - my);
  if (spread / static_cast<double>(ys.size()) < kVerticalSpread) {
    return static_cast<int>(lane.size()) >= config.min_points;
  }
  try {
    return std::abs(pearson_r(xs, ys)) >= config.min_abs_r;
  } catch (const DegenerateInput&) {
    return false;
  }
}

std::size_t distinct_anchors(std::span<const LanePoint> points) {
  std::set<int> seen;
  for (const auto& p : points) seen.insert(p.anchor);
  return seen.size();
}

}  // namespace

void SuppressionConfig::validate() const {
  if (min_points < 1) throw InvalidInput("suppression: min_points must be >= 1");
  if (!(min_abs_r >= 0.0 && min_abs_r <= 1.0)) throw InvalidInput("suppression: min_abs_r must lie in [0, 1]");
}

double pearson_r(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw InvalidInput("pearson_r: sequences differ in length");
  if (xs.size() < 2) throw DegenerateInput("pearson_r: need at least two samples");
  const double mx = mean(xs);
  const double my = mean(ys);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateInput("pearson_r: zero variance");
  return std::clamp(sxy / (std::sqrt(sxx) * std::sqrt(syy)), -1.0, 1.0);
}

LaneSet suppress_short(const LaneSet& lanes, int min_points) {
  LaneSet out = lanes;
  for (auto& lane : out.lanes) {
    if (static_cast<int>(lane.size()) < min_points) lane.clear();
  }
  return out;
}

LaneSet suppress_nonlinear(const LaneSet& lanes, const SuppressionConfig& config) {
  config.validate();
  LaneSet out = lanes;
  for (auto& lane : out.lanes) {
    if (!lane.empty() && !linear_enough(lane, config)) lane.clear();
  }
  return out;
}

QuadCoeffs fit_quadratic(std::span<const LanePoint> points) {
  if (distinct_anchors(points) < 3) throw Underdetermined("fit_quadratic: need at least three distinct anchors");
  const auto n = static_cast<double>(points.size());

  double center = 0.0;
  for (const auto& p : points) center += p.anchor;
  center /= n;

  // Orthogonal basis over the samples: q0 = 1, q1 = t, q2 = t^2 - alpha t - beta
  // with t the centered anchor. q1 is orthogonal to q0 because sum(t) = 0.
  double s2 = 0.0, s3 = 0.0;
  for (const auto& p : points) {
    const double t = p.anchor - center;
    s2 += t * t;
    s3 += t * t * t;
  }
  const double alpha = s3 / s2;
  const double beta = s2 / n;

  double y0 = 0.0, y1 = 0.0, y2 = 0.0, q2q2 = 0.0;
  for (const auto& p : points) {
    const double t = p.anchor - center;
    const double q2 = t * t - alpha * t - beta;
    y0 += p.cell;
    y1 += p.cell * t;
    y2 += p.cell * q2;
    q2q2 += q2 * q2;
  }
  const double c0 = y0 / n;
  const double c1 = y1 / s2;
  const double c2 = y2 / q2q2;

  // cell = c0 + c1 t + c2 (t^2 - alpha t - beta) = A t^2 + B t + C
  const double A = c2;
  const double B = c1 - c2 * alpha;
  const double C = c0 - c2 * beta;
  // Substitute t = anchor - center.
  return {A, B - 2.0 * A * center, (A * center - B) * center + C};
}

double fit_residual(std::span<const LanePoint> points, const QuadCoeffs& curve) {
  double r = 0.0;
  for (const auto& p : points) {
    const double e = p.cell - curve(p.anchor);
    r += e * e;
  }
  return r;
}

LaneSet smooth_lanes(const LaneSet& lanes, const GridSpec& spec) {
  LaneSet out = lanes;
  for (auto& lane : out.lanes) {
    if (distinct_anchors(lane) < 3) continue;
    const QuadCoeffs curve = fit_quadratic(lane);
    for (auto& p : lane) p.cell = std::clamp(curve(p.anchor), 1.0, static_cast<double>(spec.num_cells));
  }
  return out;
}

LaneSet postprocess(const LaneSet& lanes, const GridSpec& spec, const SuppressionConfig& config,
                    const StageToggles& toggles) {
  config.validate();
  LaneSet out = lanes;
  if (toggles.suppress_length) out = suppress_short(out, config.min_points);
  if (toggles.suppress_linearity) out = suppress_nonlinear(out, config);
  if (toggles.curve_fit) out = smooth_lanes(out, spec);
  return out;
}

}  // namespace rowlane
