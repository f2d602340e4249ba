#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace flam {

struct BenchPoint {
  std::string variant;
  int n = 0;
  int d = 0;
  double median_seconds = 0.0;
  double checksum = 0.0;  // sum of the kernel output, pins determinism
};

struct SlopeFit {
  double slope = 0.0;
  double stderr_ = 0.0;  // standard error of the slope estimate
};

// Median of `reps` timed runs after one discarded warm-up, monotonic clock.
double time_median(const std::function<void()>& fn, int reps);

// Least-squares slope of log(y) against log(x).
SlopeFit loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// Times one attention kernel, single-threaded, on seeded random inputs with
// N tokens and d channels (d_v = d). Kernel names: softmax, linear, focused.
BenchPoint bench_attention(const std::string& variant, int n, int d, int reps, uint64_t seed);

// Runs a grid of (variant, size) points and returns measurements in order.
std::vector<BenchPoint> run_attention_bench(const std::vector<std::string>& variants,
                                            const std::vector<int>& sizes, int d, int reps,
                                            uint64_t seed);

}  // namespace flam
