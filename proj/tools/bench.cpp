#include "bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "rowlane/error.hpp"

namespace rowlane::cli {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const char* on_off(bool b) { return b ? "on" : "off"; }

}  // namespace

double percentile(std::vector<double> samples, double q) {
  if (samples.empty()) return 0.0;
  std::sort(samples.begin(), samples.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(samples.size())));
  return samples[std::clamp<std::size_t>(rank, 1, samples.size()) - 1];
}

BenchReport run_benchmark(const nnet::Network& network, const nnet::Tensor3& input, const BenchConfig& config) {
  if (config.iterations < 1) throw InvalidInput("bench: iterations must be >= 1");
  config.grid.validate();
  config.suppression.validate();

  auto one_frame = [&] {
    const ScoreTensor scores = network.forward(input);
    return postprocess(decode_locations(scores, config.grid), config.grid, config.suppression, config.toggles);
  };

  for (std::size_t i = 0; i < config.warmup; ++i) one_frame();

  BenchReport report;
  report.iterations = config.iterations;
  report.warmup = config.warmup;
  report.toggles = config.toggles;
  report.latencies_ms.reserve(config.iterations);
  using Clock = std::chrono::steady_clock;
  for (std::size_t i = 0; i < config.iterations; ++i) {
    const auto start = Clock::now();
    const LaneSet lanes = one_frame();
    const auto stop = Clock::now();
    report.latencies_ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
    report.lanes_last_run = lanes.non_empty();
  }

  const auto& l = report.latencies_ms;
  report.mean_ms = std::accumulate(l.begin(), l.end(), 0.0) / static_cast<double>(l.size());
  report.median_ms = percentile(l, 0.5);
  report.p99_ms = percentile(l, 0.99);
  report.min_ms = *std::min_element(l.begin(), l.end());
  report.max_ms = *std::max_element(l.begin(), l.end());
  report.fps = report.mean_ms > 0.0 ? 1000.0 / report.mean_ms : 0.0;
  return report;
}

std::string BenchReport::to_text() const {
  std::string s;
  s += "timed_region=forward+decode+postprocess\n";
  s += "iterations=" + std::to_string(iterations) + "\n";
  s += "warmup=" + std::to_string(warmup) + "\n";
  s += std::string("suppress_length=") + on_off(toggles.suppress_length) + "\n";
  s += std::string("suppress_linearity=") + on_off(toggles.suppress_linearity) + "\n";
  s += std::string("curve_fit=") + on_off(toggles.curve_fit) + "\n";
  s += "mean_ms=" + fmt("%.4f", mean_ms) + "\n";
  s += "median_ms=" + fmt("%.4f", median_ms) + "\n";
  s += "p99_ms=" + fmt("%.4f", p99_ms) + "\n";
  s += "min_ms=" + fmt("%.4f", min_ms) + "\n";
  s += "max_ms=" + fmt("%.4f", max_ms) + "\n";
  s += "fps=" + fmt("%.3f", fps) + "\n";
  s += "lanes_last_run=" + std::to_string(lanes_last_run) + "\n";
  return s;
}

}  // namespace rowlane::cli
