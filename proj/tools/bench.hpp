#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rowlane/grid.hpp"
#include "rowlane/nnet.hpp"
#include "rowlane/postproc.hpp"

namespace rowlane::cli {

struct BenchConfig {
  std::size_t iterations = 1000;
  std::size_t warmup = 10;
  GridSpec grid;
  SuppressionConfig suppression;
  StageToggles toggles;
};

struct BenchReport {
  std::size_t iterations = 0;
  std::size_t warmup = 0;
  StageToggles toggles;
  /// Per-run wall time in milliseconds, in run order.
  std::vector<double> latencies_ms;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double p99_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
  /// 1000 / mean_ms.
  double fps = 0.0;
  /// Lanes left after post-processing on the last run.
  std::size_t lanes_last_run = 0;

  std::string to_text() const;
};

/// Times forward + decode + enabled post-processing stages on `input`,
/// single-threaded, after `warmup` untimed runs. No I/O inside the timed
/// region.
BenchReport run_benchmark(const nnet::Network& network, const nnet::Tensor3& input, const BenchConfig& config);

/// Nearest-rank percentile (q in (0, 1]) of unsorted samples.
double percentile(std::vector<double> samples, double q);

}  // namespace rowlane::cli
