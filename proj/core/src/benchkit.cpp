#include "flam/benchkit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "flam/attention.hpp"
#include "flam/errors.hpp"
#include "flam/rng.hpp"

namespace flam {

double time_median(const std::function<void()>& fn, int reps) {
  if (reps < 1) throw ConfigError("time_median: reps must be >= 1");
  fn();  // warm-up, discarded
  std::vector<double> times(reps);
  for (int r = 0; r < reps; ++r) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    const auto stop = std::chrono::steady_clock::now();
    times[r] = std::chrono::duration<double>(stop - start).count();
  }
  std::sort(times.begin(), times.end());
  const int mid = reps / 2;
  return reps % 2 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
}

SlopeFit loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("loglog_slope: need >= 2 points");
  const int n = static_cast<int>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::vector<double> lx(n), ly(n);
  for (int i = 0; i < n; ++i) {
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  const double denom = n * sxx - sx * sx;
  SlopeFit fit;
  fit.slope = (n * sxy - sx * sy) / denom;
  const double intercept = (sy - fit.slope * sx) / n;
  if (n > 2) {
    double ss = 0.0;
    for (int i = 0; i < n; ++i) {
      const double r = ly[i] - (fit.slope * lx[i] + intercept);
      ss += r * r;
    }
    fit.stderr_ = std::sqrt(ss / (n - 2) / (sxx - sx * sx / n));
  }
  return fit;
}

namespace {

// A grid shape with cells == n, as square as n's factorization allows.
GridShape grid_for(int n) {
  int h = static_cast<int>(std::sqrt(static_cast<double>(n)));
  while (h > 1 && n % h != 0) --h;
  return {h, n / h};
}

}  // namespace

BenchPoint bench_attention(const std::string& variant, int n, int d, int reps, uint64_t seed) {
  Rng rng(seed);
  AttentionInputs in;
  in.q = Mat(n, d);
  in.k = Mat(n, d);
  in.v = Mat(n, d);
  for (double& v : in.q.data()) v = rng.uniform(-1.0, 1.0);
  for (double& v : in.k.data()) v = rng.uniform(-1.0, 1.0);
  for (double& v : in.v.data()) v = rng.uniform(-1.0, 1.0);

  BenchPoint point;
  point.variant = variant;
  point.n = n;
  point.d = d;

  std::function<Mat()> run;
  if (variant == "softmax") {
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    run = [&, scale]() { return softmax_attention(in, scale); };
  } else if (variant == "linear") {
    run = [&]() { return linear_attention(in, LinearKernel::ReLU, true, 1e-6); };
  } else if (variant == "focused") {
    FocusParams fp;
    fp.v_grid = grid_for(n);
    fp.dw_kernel.size = 3;
    fp.dw_kernel.weights = Mat(d, 9);
    Rng krng(seed ^ 0xdeadbeefull);
    for (double& v : fp.dw_kernel.weights.data()) v = krng.uniform(-0.3, 0.3);
    run = [&, fp]() { return focused_linear_attention(in, fp); };
  } else {
    throw ConfigError("bench_attention: unknown variant " + variant);
  }

  double checksum = 0.0;
  point.median_seconds = time_median(
      [&]() {
        Mat out = run();
        double s = 0.0;
        for (double v : out.data()) s += v;
        checksum = s;
      },
      reps);
  point.checksum = checksum;
  return point;
}

std::vector<BenchPoint> run_attention_bench(const std::vector<std::string>& variants,
                                            const std::vector<int>& sizes, int d, int reps,
                                            uint64_t seed) {
  if (reps < 3) throw ConfigError("run_attention_bench: reps must be >= 3 for a stable median");
  for (std::size_t i = 1; i < sizes.size(); ++i)
    if (sizes[i] <= sizes[i - 1]) throw ConfigError("run_attention_bench: sizes must be ascending");

  std::vector<BenchPoint> points;
  for (const std::string& variant : variants)
    for (int n : sizes) points.push_back(bench_attention(variant, n, d, reps, seed));
  return points;
}

}  // namespace flam
