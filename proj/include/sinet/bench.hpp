#pragma once

#include <string>
#include <vector>

#include "sinet/tensor.hpp"

namespace sinet {

struct BenchConfig {
  int channels = 32;
  long size = 48;
  int dilation = 1;
};

struct BenchEntry {
  BenchConfig cfg;
  int iterations = 0;
  double min_ms = 0.0, mean_ms = 0.0, max_ms = 0.0, total_ms = 0.0;
};

struct BenchReport {
  std::vector<BenchEntry> entries;
};

// Wall-clock stats for a depthwise separable dilated convolution (3x3
// depthwise at the given dilation followed by a pointwise conv) over the
// (channels x size x size) config matrix. pause_seconds sleeps between
// configs; timings are informational only.
BenchReport bench_dilated(const std::vector<int>& channels, const std::vector<long>& sizes,
                          const std::vector<int>& dilations, int iterations = 100,
                          double pause_seconds = 0.0, uint64_t seed = 1);

std::string bench_report_csv(const BenchReport& report);

}  // namespace sinet
