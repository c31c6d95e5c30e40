#include "sinet/bench.hpp"

#include <chrono>
#include <sstream>
#include <thread>

#include "sinet/ops.hpp"

namespace sinet {

BenchReport bench_dilated(const std::vector<int>& channels, const std::vector<long>& sizes,
                          const std::vector<int>& dilations, int iterations,
                          double pause_seconds, uint64_t seed) {
  if (iterations < 1) throw ConfigError("bench: iterations must be >= 1");
  BenchReport report;
  Rng rng(seed);
  NoGradGuard ng;
  bool first = true;
  for (int ch : channels) {
    for (long size : sizes) {
      for (int d : dilations) {
        if (!first && pause_seconds > 0.0) {
          std::this_thread::sleep_for(std::chrono::duration<double>(pause_seconds));
        }
        first = false;
        ConvSpec dw{.in_channels = ch,
                    .out_channels = ch,
                    .kh = 3,
                    .kw = 3,
                    .ph = d,
                    .pw = d,
                    .dh = d,
                    .dw = d,
                    .groups = ch};
        ConvSpec pw{.in_channels = ch, .out_channels = ch};
        TensorF input = TensorF::rand_uniform({1, ch, size, size}, rng, -1.0, 1.0);
        TensorF dw_w = TensorF::rand_uniform({ch, 1, 3, 3}, rng, -0.5, 0.5);
        TensorF pw_w = TensorF::rand_uniform({ch, ch, 1, 1}, rng, -0.5, 0.5);
        // Warm-up pass, untimed.
        conv2d(conv2d(input, dw_w, dw), pw_w, pw);

        BenchEntry entry;
        entry.cfg = {ch, size, d};
        entry.iterations = iterations;
        entry.min_ms = 1e300;
        for (int it = 0; it < iterations; ++it) {
          const auto t0 = std::chrono::steady_clock::now();
          TensorF out = conv2d(conv2d(input, dw_w, dw), pw_w, pw);
          const auto t1 = std::chrono::steady_clock::now();
          const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
          entry.min_ms = std::min(entry.min_ms, ms);
          entry.max_ms = std::max(entry.max_ms, ms);
          entry.total_ms += ms;
        }
        entry.mean_ms = entry.total_ms / static_cast<double>(iterations);
        report.entries.push_back(entry);
      }
    }
  }
  return report;
}

std::string bench_report_csv(const BenchReport& report) {
  std::ostringstream out;
  out << "channels,size,dilation,iterations,min_ms,mean_ms,max_ms,total_ms\n";
  for (const auto& e : report.entries) {
    out << e.cfg.channels << "," << e.cfg.size << "," << e.cfg.dilation << ","
        << e.iterations << "," << e.min_ms << "," << e.mean_ms << "," << e.max_ms << ","
        << e.total_ms << "\n";
  }
  return out.str();
}

}  // namespace sinet
