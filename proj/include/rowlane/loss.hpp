#pragma once

#include "rowlane/grid.hpp"

namespace rowlane {

struct LossConfig {
  /// Focal exponent; 0 turns the loss into plain negative log likelihood.
  double gamma = 2.0;

  void validate() const;
};

/// Sum over (lane, anchor) rows of -(1 - p_t)^gamma * log(p_t), where p is
/// the row softmax of `scores` and t the row's target class. Rows are summed
/// lane-major, anchor-minor; no averaging.
double focal_nll_loss(const ScoreTensor& scores, const TargetGrid& targets, const LossConfig& config = {});

/// Analytic dL/dS, same dims as `scores`. Per row with p = softmax(S):
///   dL/dS_k = [gamma (1-p_t)^(gamma-1) log p_t - (1-p_t)^gamma / p_t] * p_t (delta_kt - p_k)
/// p_t is clamped to [1e-12, 1 - 1e-12] inside the bracket.
ScoreTensor loss_gradient(const ScoreTensor& scores, const TargetGrid& targets, const LossConfig& config = {});

}  // namespace rowlane
