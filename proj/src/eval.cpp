#include "rowlane/eval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <set>

#include "rowlane/error.hpp"

namespace rowlane {

namespace {

double segment_distance_sq(double px, double py, const PixelPoint& a, const PixelPoint& b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len_sq = dx * dx + dy * dy;
  double t = 0.0;
  if (len_sq > 0.0) t = std::clamp(((px - a.x) * dx + (py - a.y) * dy) / len_sq, 0.0, 1.0);
  const double ex = px - (a.x + t * dx);
  const double ey = py - (a.y + t * dy);
  return ex * ex + ey * ey;
}

void check_dims(const RasterMask& a, const RasterMask& b) {
  if (a.width() != b.width() || a.height() != b.height()) throw InvalidInput("raster masks differ in size");
}

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

RasterMask::RasterMask(int width, int height) : width_(width), height_(height) {
  if (width < 1 || height < 1) throw InvalidInput("raster mask: dims must be positive");
  words_.assign((static_cast<std::size_t>(width) * height + 63) / 64, 0);
}

std::size_t RasterMask::count() const noexcept {
  std::size_t n = 0;
  for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

std::size_t RasterMask::intersection_count(const RasterMask& other) const {
  check_dims(*this, other);
  std::size_t n = 0;
  for (std::size_t i = 0; i < words_.size(); ++i) n += static_cast<std::size_t>(std::popcount(words_[i] & other.words_[i]));
  return n;
}

std::size_t RasterMask::union_count(const RasterMask& other) const {
  check_dims(*this, other);
  std::size_t n = 0;
  for (std::size_t i = 0; i < words_.size(); ++i) n += static_cast<std::size_t>(std::popcount(words_[i] | other.words_[i]));
  return n;
}

RasterMask rasterize_lane(const Polyline& line, int width, int height, double stroke_width) {
  RasterMask mask(width, height);
  if (line.size() < 2) return mask;
  double length = 0.0;
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    length += std::hypot(line[i + 1].x - line[i].x, line[i + 1].y - line[i].y);
  }
  if (!(length > 0.0)) return mask;

  const double radius = stroke_width / 2.0;
  const double radius_sq = radius * radius;
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    const PixelPoint& a = line[i];
    const PixelPoint& b = line[i + 1];
    // Pixel centers sit at integer + 0.5.
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - radius - 0.5)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + radius - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - radius - 0.5)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + radius - 0.5)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (segment_distance_sq(x + 0.5, y + 0.5, a, b) <= radius_sq) mask.set(x, y);
      }
    }
  }
  return mask;
}

double lane_iou(const RasterMask& a, const RasterMask& b) {
  const std::size_t uni = a.union_count(b);
  if (uni == 0) return 0.0;
  return static_cast<double>(a.intersection_count(b)) / static_cast<double>(uni);
}

MatchCounts match_lanes(const std::vector<RasterMask>& preds, const std::vector<RasterMask>& gts,
                        double iou_threshold) {
  struct Candidate {
    double iou;
    std::size_t pred;
    std::size_t gt;
  };
  std::vector<Candidate> candidates;
  for (std::size_t p = 0; p < preds.size(); ++p) {
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double iou = lane_iou(preds[p], gts[g]);
      if (iou > iou_threshold) candidates.push_back({iou, p, g});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& l, const Candidate& r) { return l.iou > r.iou; });

  std::vector<bool> pred_used(preds.size()), gt_used(gts.size());
  MatchCounts counts;
  for (const auto& c : candidates) {
    if (pred_used[c.pred] || gt_used[c.gt]) continue;
    pred_used[c.pred] = gt_used[c.gt] = true;
    ++counts.tp;
  }
  counts.fp = preds.size() - counts.tp;
  counts.fn = gts.size() - counts.tp;
  return counts;
}

Scores f1_measure(std::size_t tp, std::size_t fp, std::size_t fn) {
  Scores s;
  if (tp + fp > 0) s.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) s.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (s.precision + s.recall > 0.0) s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

const std::vector<std::string>& culane_categories() {
  static const std::vector<std::string> names = {"normal", "crowd", "hlight", "shadow", "noline",
                                                 "arrow",  "curve", "cross",  "night"};
  return names;
}

bool is_fp_only_category(std::string_view category) { return category == "cross"; }

const CategoryRow* EvalReport::find(std::string_view category) const {
  for (const auto& row : categories) {
    if (row.category == category) return &row;
  }
  return nullptr;
}

MatchCounts evaluate_frame(const std::vector<Polyline>& preds, const std::vector<Polyline>& gts,
                           const EvalConfig& config) {
  auto rasterize_all = [&](const std::vector<Polyline>& lines) {
    std::vector<RasterMask> masks;
    masks.reserve(lines.size());
    for (const auto& l : lines) masks.push_back(rasterize_lane(l, config.image_width, config.image_height, config.stroke_width));
    return masks;
  };
  return match_lanes(rasterize_all(preds), rasterize_all(gts), config.iou_threshold);
}

EvalReport evaluate_split(const std::vector<FrameRef>& frames, const LaneSource& predictions,
                          const LaneSource& ground_truth, const EvalConfig& config) {
  std::map<std::string, CategoryRow> rows;
  EvalReport report;
  report.total.category = "total";
  for (const auto& frame : frames) {
    auto gt = ground_truth(frame.path);
    if (!gt) throw InvalidInput("no ground truth for frame " + frame.path);
    auto pred = predictions(frame.path);
    if (!pred) {
      report.missing_predictions.push_back(frame.path);
      pred.emplace();
    }
    const MatchCounts counts = evaluate_frame(*pred, *gt, config);
    auto& row = rows[frame.category];
    row.category = frame.category;
    row.fp_only = is_fp_only_category(frame.category);
    row.counts += counts;
    ++row.frames;
    report.total.counts += counts;
    ++report.total.frames;
  }

  for (const auto& name : culane_categories()) {
    if (auto it = rows.find(name); it != rows.end()) {
      report.categories.push_back(it->second);
      rows.erase(it);
    }
  }
  for (auto& [name, row] : rows) report.categories.push_back(row);
  for (auto& row : report.categories) row.scores = f1_measure(row.counts.tp, row.counts.fp, row.counts.fn);
  report.total.scores = f1_measure(report.total.counts.tp, report.total.counts.fp, report.total.counts.fn);
  return report;
}

std::string report_tsv(const EvalReport& report) {
  std::string out = "category\ttp\tfp\tfn\tprecision\trecall\tf1\n";
  auto emit = [&](const CategoryRow& r) {
    if (r.fp_only) {
      out += r.category + "\t-\t" + std::to_string(r.counts.fp) + "\t-\t-\t-\t-\n";
      return;
    }
    out += r.category + "\t" + std::to_string(r.counts.tp) + "\t" + std::to_string(r.counts.fp) + "\t" +
           std::to_string(r.counts.fn) + "\t" + fixed6(r.scores.precision) + "\t" + fixed6(r.scores.recall) + "\t" +
           fixed6(r.scores.f1) + "\n";
  };
  for (const auto& r : report.categories) emit(r);
  emit(report.total);
  return out;
}

std::string report_key_values(const EvalReport& report) {
  std::string out;
  auto emit = [&](const CategoryRow& r) {
    const std::string k = r.category + ".";
    if (!r.fp_only) out += k + "tp=" + std::to_string(r.counts.tp) + "\n";
    out += k + "fp=" + std::to_string(r.counts.fp) + "\n";
    if (r.fp_only) return;
    out += k + "fn=" + std::to_string(r.counts.fn) + "\n";
    out += k + "precision=" + fixed6(r.scores.precision) + "\n";
    out += k + "recall=" + fixed6(r.scores.recall) + "\n";
    out += k + "f1=" + fixed6(r.scores.f1) + "\n";
  };
  for (const auto& r : report.categories) emit(r);
  emit(report.total);
  for (const auto& f : report.missing_predictions) out += "missing_prediction=" + f + "\n";
  return out;
}

}  // namespace rowlane
