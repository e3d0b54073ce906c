#include "rowlane/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rowlane/error.hpp"

namespace rowlane {

namespace {

constexpr double kProbFloor = 1e-12;

void check_inputs(const ScoreTensor& scores, const TargetGrid& targets, const LossConfig& config) {
  config.validate();
  if (targets.lanes() != scores.lanes() || targets.anchors() != scores.anchors()) {
    throw InvalidInput("loss: target grid dims do not match score tensor");
  }
  for (int i = 0; i < targets.lanes(); ++i) {
    for (int j = 0; j < targets.anchors(); ++j) {
      const int t = targets.at(i, j);
      if (t < 1 || t > scores.classes()) {
        throw InvalidInput("loss: target " + std::to_string(t) + " at (" + std::to_string(i + 1) + ", " +
                           std::to_string(j + 1) + ") outside [1, " + std::to_string(scores.classes()) + "]");
      }
    }
  }
}

// Focal term of one row and p_t * dterm/dp_t. The p_t factor is applied
// analytically so that -(1-p)^gamma / p * p_t stays exact when p_t underflows
// the clamp.
struct FocalTerm {
  double value;
  double scaled_slope;
};

FocalTerm focal_term(double p_target, double gamma) {
  const double p = std::clamp(p_target, kProbFloor, 1.0 - kProbFloor);
  const double q = 1.0 - p;
  const double log_p = std::log(p);
  const double modulator = std::pow(q, gamma);
  double slope = -modulator;
  if (gamma != 0.0) slope += gamma * std::pow(q, gamma - 1.0) * log_p * p_target;
  return {-modulator * log_p, slope};
}

}  // namespace

void LossConfig::validate() const {
  if (!(std::isfinite(gamma) && gamma >= 0.0)) throw InvalidInput("loss: gamma must be finite and >= 0");
}

double focal_nll_loss(const ScoreTensor& scores, const TargetGrid& targets, const LossConfig& config) {
  check_inputs(scores, targets, config);
  const ScoreTensor probs = softmax_probabilities(scores);
  double total = 0.0;
  for (int i = 0; i < scores.lanes(); ++i) {
    for (int j = 0; j < scores.anchors(); ++j) {
      total += focal_term(probs.at(i, j, targets.at(i, j) - 1), config.gamma).value;
    }
  }
  return total;
}

ScoreTensor loss_gradient(const ScoreTensor& scores, const TargetGrid& targets, const LossConfig& config) {
  check_inputs(scores, targets, config);
  ScoreTensor grad = softmax_probabilities(scores);
  for (int i = 0; i < scores.lanes(); ++i) {
    for (int j = 0; j < scores.anchors(); ++j) {
      auto row = grad.row(i, j);
      const int t = targets.at(i, j) - 1;
      const double p_t = row[t];
      const double scale = focal_term(p_t, config.gamma).scaled_slope;
      for (int k = 0; k < scores.classes(); ++k) {
        row[k] = scale * ((k == t ? 1.0 : 0.0) - row[k]);
      }
    }
  }
  return grad;
}

}  // namespace rowlane
