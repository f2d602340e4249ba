// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Usage: flam_acceptance <path-to-flam-cli> [--only N]
//
//  1 gradient-correctness      analytic vs central differences, all variants
//  2 reduction-identity        focused(p=1, zero conv) == normalized ReLU linear
//  3 norm-preservation         focused map keeps each row's post-ReLU norm
//  4 dual-softmax-mnn          planted permutations recovered exactly
//  5 subpixel-expectation      heatmap expectation closed forms
//  6 complexity-scaling        log-log slopes: focused < 1.3, softmax > 1.7
//  7 geometry-oracle           noiseless pose errors zero; 30% outliers rejected
//  8 auc-convention            closed forms and threshold monotonicity
//  9 end-to-end-determinism    bit-identical match files across runs/threads
// 10 degenerate-inputs         documented error/empty paths, no crashes

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "flam/attention.hpp"
#include "flam/backbone.hpp"
#include "flam/benchkit.hpp"
#include "flam/errors.hpp"
#include "flam/geoeval.hpp"
#include "flam/matcher.hpp"
#include "flam/rng.hpp"
#include "flam/selftest.hpp"
#include "flam/transformer.hpp"

using namespace flam;
namespace fs = std::filesystem;

namespace {

std::string g_cli_path;

struct Criterion {
  int id;
  const char* name;
  std::function<bool(std::string&)> body;
};

Mat random_mat(Rng& rng, int r, int c, double lo = -1.0, double hi = 1.0) {
  Mat m(r, c);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

Mat away_from_kinks(Rng& rng, int r, int c) {
  Mat m(r, c);
  for (double& v : m.data()) {
    const double mag = rng.uniform(0.1, 1.0);
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return m;
}

// --------------------------------------------------------------- criterion 1

bool c1_gradients(std::string& detail) {
  double worst = 0.0;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    const int n = 16, d = 8;
    AttentionInputs in{away_from_kinks(rng, n, d), away_from_kinks(rng, n, d), away_from_kinks(rng, n, d)};
    Mat upstream = random_mat(rng, n, d);

    FocusParams fp;
    fp.v_grid = {4, 4};
    fp.dw_kernel.size = 3;
    fp.dw_kernel.weights = random_mat(rng, d, 9, -0.5, 0.5);
    std::vector<AttentionVariant> variants{SoftmaxParams{1.0 / std::sqrt(double(d))},
                                           LinearParams{LinearKernel::ReLU, true, 1e-6}, fp};
    for (AttentionVariant& variant : variants) {
      AttentionGrads g = attention_grads(variant, in, upstream);
      auto loss = [&]() {
        Mat out = attention_forward(variant, in);
        double acc = 0;
        for (std::size_t i = 0; i < out.size(); ++i) acc += upstream.data()[i] * out.data()[i];
        return acc;
      };
      auto rel = [&](const Mat& a, Mat& x) {
        Mat num = finite_diff_grad(loss, x, 1e-5);
        double w = 0;
        for (std::size_t i = 0; i < a.size(); ++i)
          w = std::max(w, std::abs(a.data()[i] - num.data()[i]) /
                              std::max({std::abs(a.data()[i]), std::abs(num.data()[i]), 1e-3}));
        return w;
      };
      worst = std::max({worst, rel(g.dq, in.q), rel(g.dk, in.k), rel(g.dv, in.v)});
      if (std::holds_alternative<FocusParams>(variant)) {
        Mat* kw = &std::get<FocusParams>(variant).dw_kernel.weights;
        worst = std::max(worst, rel(*g.d_dw_kernel, *kw));
      }
    }
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "max rel err %.2e", worst);
  detail = buf;
  return worst < 1e-6;
}

// --------------------------------------------------------------- criterion 2

bool c2_reduction(std::string& detail) {
  Rng rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 9, d = 5, dv = 3;
    AttentionInputs in{random_mat(rng, n, d), random_mat(rng, n, d), random_mat(rng, n, dv)};
    FocusParams fp;
    fp.p = 1.0;
    fp.v_grid = {3, 3};
    fp.dw_kernel = DepthwiseKernel::zero(dv);
    worst = std::max(worst, max_abs_diff(focused_linear_attention(in, fp),
                                         linear_attention(in, LinearKernel::ReLU, true, 1e-6)));
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "max diff %.2e over 100 instances", worst);
  detail = buf;
  return worst < 1e-12;
}

// --------------------------------------------------------------- criterion 3

bool c3_norm_preservation(std::string& detail) {
  Rng rng(11);
  double worst = 0.0;
  int rows = 0;
  for (double p : {1.0, 2.0, 3.0, 4.0}) {
    for (int trial = 0; trial < 1000; ++trial) {
      Mat x = random_mat(rng, 1, 10, -2.0, 2.0);
      Mat y = focused_map(x, p, 1e-12);
      double rn = 0, yn = 0;
      for (int j = 0; j < 10; ++j) {
        const double r = std::max(x(0, j), 0.0);
        rn += r * r;
        yn += y(0, j) * y(0, j);
      }
      if (rn == 0.0) continue;
      ++rows;
      worst = std::max(worst, std::abs(std::sqrt(yn) - std::sqrt(rn)));
    }
  }
  char buf[80];
  std::snprintf(buf, sizeof buf, "max norm drift %.2e over %d rows", worst, rows);
  detail = buf;
  return worst < 1e-12 && rows >= 3500;
}

// --------------------------------------------------------------- criterion 4

bool c4_dual_softmax_mnn(std::string& detail) {
  Rng rng(13);
  for (int n : {4, 9, 15, 20}) {
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);

    Mat s(n, n);
    for (double& v : s.data()) v = rng.uniform(0.0, 0.2);
    for (int i = 0; i < n; ++i) s(i, perm[i]) = 5.0 + rng.uniform(0.0, 0.5);

    // factor stochasticity within 1e-12
    Mat row = row_softmax(s, 1.0);
    Mat col = row_softmax(s.transposed(), 1.0).transposed();
    for (int i = 0; i < n; ++i) {
      double rs = 0;
      for (int j = 0; j < n; ++j) rs += row(i, j);
      if (std::abs(rs - 1.0) >= 1e-12) {
        detail = "row factor not stochastic";
        return false;
      }
    }
    for (int j = 0; j < n; ++j) {
      double cs = 0;
      for (int i = 0; i < n; ++i) cs += col(i, j);
      if (std::abs(cs - 1.0) >= 1e-12) {
        detail = "column factor not stochastic";
        return false;
      }
    }

    auto matches = mnn_filter(dual_softmax(s), 0.5);
    if (static_cast<int>(matches.size()) != n) {
      detail = "size " + std::to_string(n) + ": expected " + std::to_string(n) + " matches, got " +
               std::to_string(matches.size());
      return false;
    }
    for (const auto& m : matches)
      if (m.j != perm[m.i]) {
        detail = "size " + std::to_string(n) + ": wrong pair (" + std::to_string(m.i) + "," +
                 std::to_string(m.j) + ")";
        return false;
      }
  }
  detail = "planted permutations recovered at n = 4, 9, 15, 20";
  return true;
}

// --------------------------------------------------------------- criterion 5

bool c5_subpixel(std::string& detail) {
  // delta heatmap: one overwhelming correlation peak
  {
    const int w = 5, d = 4;
    TokenSet wa{Mat(w * w, d), {w, w}}, wb{Mat(w * w, d), {w, w}};
    for (int c = 0; c < d; ++c) wa.tokens(12, c) = 1.0;
    const int target = (2 + 1) * w + (2 - 1);  // (dx, dy) = (-1, +1)
    for (int c = 0; c < d; ++c) wb.tokens(target, c) = 60.0;
    SubpixelOffset off = refine_match(wa, wb, 0.1);
    if (std::abs(off.dx + 1.0) > 1e-9 || std::abs(off.dy - 1.0) > 1e-9) {
      detail = "delta heatmap missed the peak";
      return false;
    }
  }
  // symmetric heatmap: exact center
  {
    const int w = 5, d = 3;
    TokenSet wa{Mat(w * w, d), {w, w}}, wb{Mat(w * w, d), {w, w}};
    wa.tokens(12, 0) = 0.8;
    for (int t = 0; t < w * w; ++t)
      for (int c = 0; c < d; ++c) wb.tokens(t, c) = 0.25 * (c + 1);
    SubpixelOffset off = refine_match(wa, wb, 0.1);
    if (std::abs(off.dx) > 1e-12 || std::abs(off.dy) > 1e-12) {
      detail = "uniform heatmap offset not at the window center";
      return false;
    }
  }
  // hand-built 3x3 heatmap: 0.1 everywhere, 0.2 at (+1, 0) -> E[dx] = 0.1
  {
    TokenSet wa{Mat(9, 1), {3, 3}}, wb{Mat(9, 1), {3, 3}};
    wa.tokens(4, 0) = 1.0;
    for (int t = 0; t < 9; ++t) wb.tokens(t, 0) = std::log(t == 5 ? 0.2 : 0.1);
    SubpixelOffset off = refine_match(wa, wb, 1.0);
    if (std::abs(off.dx - 0.1) > 1e-12 || std::abs(off.dy) > 1e-12) {
      detail = "hand expectation mismatch";
      return false;
    }
  }
  detail = "delta, symmetric and hand-built heatmaps agree";
  return true;
}

// --------------------------------------------------------------- criterion 6

bool c6_complexity(std::string& detail) {
  auto soft = run_attention_bench({"softmax"}, {512, 1024, 2048, 4096}, 64, 5, 3);
  auto foc = run_attention_bench({"focused"}, {2048, 4096, 8192, 16384}, 64, 5, 3);
  auto slope_of = [](const std::vector<BenchPoint>& pts) {
    std::vector<double> ns, ts;
    for (const auto& p : pts) {
      ns.push_back(p.n);
      ts.push_back(p.median_seconds);
    }
    return loglog_slope(ns, ts).slope;
  };
  const double soft_slope = slope_of(soft);
  const double foc_slope = slope_of(foc);
  char buf[96];
  std::snprintf(buf, sizeof buf, "softmax slope %.3f (> 1.7), focused slope %.3f (< 1.3)", soft_slope,
                foc_slope);
  detail = buf;
  return soft_slope > 1.7 && foc_slope < 1.3;
}

// --------------------------------------------------------------- criterion 7

bool c7_geometry(std::string& detail) {
  // noiseless injection: per-pair error < 0.1 deg and AUC@5 exactly 1.0
  EvalConfig cfg;
  cfg.n_pairs = 20;
  cfg.seed = 20240915;
  EvalReport report = evaluate(cfg, nullptr);
  double worst = 0.0;
  for (const auto& p : report.pairs) {
    if (p.failed) {
      detail = "noiseless pair failed: " + p.fail_reason;
      return false;
    }
    worst = std::max(worst, p.errors.pose_err_deg);
  }
  if (!(worst < 0.1)) {
    detail = "noiseless pose error " + std::to_string(worst);
    return false;
  }
  if (report.auc5 != 1.0) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "AUC@5 = %.17g != 1.0", report.auc5);
    detail = buf;
    return false;
  }

  // 30% outodds contamination, 500 iterations, rotation within 0.5 deg
  Rng rng(29);
  const Mat r = rotation_from_axis_angle({0.3, -0.6, 0.8}, 0.14);
  const Vec3 t{0.35, -0.1, 0.08};
  const CameraIntrinsics k{300, 300, 150, 150};
  std::vector<PixelPair> px;
  for (int i = 0; i < 28; ++i) {
    for (;;) {
      const Vec3 x{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(3, 7)};
      Vec3 y{0, 0, 0};
      for (int a = 0; a < 3; ++a)
        y[a] = r(a, 0) * x[0] + r(a, 1) * x[1] + r(a, 2) * x[2] + t[a];
      if (y[2] < 0.5) continue;
      px.push_back({x[0] / x[2] * k.fx + k.cx, x[1] / x[2] * k.fy + k.cy, y[0] / y[2] * k.fx + k.cx,
                    y[1] / y[2] * k.fy + k.cy});
      break;
    }
  }
  for (int i = 0; i < 12; ++i)
    px.push_back({rng.uniform(0, 300), rng.uniform(0, 300), rng.uniform(0, 300), rng.uniform(0, 300)});

  RansacResult res = ransac_essential(px, k, 500, 1.0, 31);
  std::vector<PixelPair> inliers;
  for (std::size_t i = 0; i < px.size(); ++i)
    if (res.inlier_mask[i]) inliers.push_back(px[i]);
  RelPose est = decompose_essential(res.e, inliers, k);
  RelPose gt;
  gt.r = r;
  gt.t = normalized(t);
  PoseErrorRecord rec = pose_error(est, gt);

  char buf[128];
  std::snprintf(buf, sizeof buf, "noiseless max err %.1e deg, AUC@5 = 1.0; outliers: rot err %.2e deg",
                worst, rec.rot_err_deg);
  detail = buf;
  return rec.rot_err_deg < 0.5;
}

// --------------------------------------------------------------- criterion 8

bool c8_auc(std::string& detail) {
  if (auc({2.5}, 5.0) != 0.5) {
    detail = "single-sample closed form violated";
    return false;
  }
  if (auc({0.0, 0.0}, 5.0) != 1.0 || auc({std::numeric_limits<double>::infinity()}, 5.0) != 0.0) {
    detail = "boundary closed forms violated";
    return false;
  }
  Rng rng(37);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> errors;
    const int n = 1 + rng.uniform_int(14);
    for (int i = 0; i < n; ++i)
      errors.push_back(rng.uniform() < 0.15 ? std::numeric_limits<double>::infinity()
                                            : rng.uniform(0.0, 40.0));
    const double a5 = auc(errors, 5), a10 = auc(errors, 10), a20 = auc(errors, 20);
    if (!(a5 <= a10 && a10 <= a20)) {
      detail = "monotonicity violated";
      return false;
    }
  }
  detail = "closed forms exact, monotone on 1000 random lists";
  return true;
}

// --------------------------------------------------------------- criterion 9

bool c9_determinism(std::string& detail) {
  if (g_cli_path.empty()) {
    detail = "no CLI path supplied";
    return false;
  }
  const fs::path dir = fs::temp_directory_path() / "flam_acceptance";
  fs::create_directories(dir);

  // fixed 64x64 pair, seeded texture, second view warped
  EvalConfig scfg;
  scfg.mode = EvalConfig::Mode::Texture;
  scfg.image_size = 64;
  const Mat r = rotation_from_axis_angle({0.1, 0.8, -0.2}, 0.03);
  SyntheticPair pair = render_texture_pair(99, scfg, r, {0.15, 0.02, -0.05});
  const fs::path img_a = dir / "a.pgm";
  const fs::path img_b = dir / "b.pgm";
  save_pgm(img_a.string(), pair.img_a);
  save_pgm(img_b.string(), pair.img_b);

  auto run = [&](const std::string& out, int threads) {
    const std::string cmd = g_cli_path + " match " + img_a.string() + " " + img_b.string() +
                            " --seed 7 --blocks 2 --conf-threshold 0.05 --threads " +
                            std::to_string(threads) + " --out " + (dir / out).string() + " 2> /dev/null";
    return std::system(cmd.c_str()) == 0;
  };
  if (!run("m1.tsv", 1) || !run("m2.tsv", 1) || !run("m4.tsv", 4)) {
    detail = "cmd_match invocation failed";
    return false;
  }
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string m1 = slurp(dir / "m1.tsv"), m2 = slurp(dir / "m2.tsv"), m4 = slurp(dir / "m4.tsv");
  if (m1.empty() || m1 != m2 || m1 != m4) {
    detail = "match files differ across runs or thread counts";
    return false;
  }
  int lines = 0;
  for (char c : m1)
    if (c == '\n') ++lines;
  detail = "bit-identical files (" + std::to_string(lines) + " lines) across 2 runs and threads {1,4}";
  return true;
}

// -------------------------------------------------------------- criterion 10

bool c10_degenerate(std::string& detail) {
  // blank images through the pipeline: valid MatchSet, then the blank pair
  // fails pose estimation cleanly inside evaluate()
  {
    Image blank;
    blank.height = blank.width = 64;
    blank.orig_height = blank.orig_width = 64;
    blank.channels = 1;
    blank.pixels.assign(64 * 64, 0.5);
    TransformerConfig cfg;
    cfg.num_coarse_blocks = 1;
    cfg.num_fine_blocks = 1;
    ModelWeights w = model_init_seeded(3, 1, cfg);
    MatcherConfig mcfg;
    MatchSet ms = match_pipeline(blank, blank, w, cfg, mcfg);
    for (const auto& m : ms.coarse)
      if (m.i != m.j) {
        detail = "blank self-match left the diagonal";
        return false;
      }

    EvalConfig ecfg;
    ecfg.mode = EvalConfig::Mode::Texture;
    ecfg.n_pairs = 1;
    ecfg.texture_amp = 0.0;
    ecfg.image_size = 64;
    ecfg.tcfg = cfg;
    EvalReport report = evaluate(ecfg, &w);
    if (!report.pairs[0].failed || !std::isinf(report.pairs[0].errors.pose_err_deg)) {
      detail = "blank pair did not fail pose estimation";
      return false;
    }
  }
  // zero-match pair: empty MatchSet without error
  {
    EvalConfig scfg;
    scfg.mode = EvalConfig::Mode::Texture;
    scfg.image_size = 64;
    SyntheticPair p1 = render_texture_pair(1, scfg, Mat::identity(3), {0, 0, 0});
    SyntheticPair p2 = render_texture_pair(2, scfg, Mat::identity(3), {0, 0, 0});
    TransformerConfig cfg;
    cfg.num_coarse_blocks = 1;
    cfg.num_fine_blocks = 1;
    ModelWeights w = model_init_seeded(5, 1, cfg);
    MatcherConfig mcfg;
    mcfg.conf_threshold = 0.9999999;
    MatchSet ms = match_pipeline(p1.img_a, p2.img_a, w, cfg, mcfg);
    if (!ms.refined.empty()) {
      detail = "threshold 1-eps still produced matches";
      return false;
    }
  }
  // all-negative focused-map rows map to zero; the attention term vanishes
  // and the eps guard leaves only the DWConv branch
  {
    Rng rng(41);
    Mat neg(9, 6);
    for (double& v : neg.data()) v = rng.uniform(-2.0, -0.1);
    Mat mapped = focused_map(neg, 3.0, 1e-6);
    if (frobenius_norm(mapped) != 0.0) {
      detail = "all-negative rows did not map to zero";
      return false;
    }
    AttentionInputs in{neg, neg, random_mat(rng, 9, 4)};
    FocusParams fp;
    fp.v_grid = {3, 3};
    fp.dw_kernel = DepthwiseKernel::delta(4);
    Mat out = focused_linear_attention(in, fp);
    if (!out.all_finite() || max_abs_diff(out, in.v) != 0.0) {
      detail = "degenerate queries did not reduce to the DWConv branch";
      return false;
    }
  }
  // fewer than 8 matches for RANSAC: insufficient-data error
  {
    const CameraIntrinsics k{100, 100, 50, 50};
    std::vector<PixelPair> seven(7, PixelPair{1, 2, 3, 4});
    try {
      ransac_essential(seven, k, 10, 1.0, 1);
      detail = "ransac accepted 7 matches";
      return false;
    } catch (const InsufficientDataError&) {
    }
  }
  detail = "blank, zero-match, all-negative and <8-match paths all behaved";
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc)
      only = std::atoi(argv[++i]);
    else if (g_cli_path.empty())
      g_cli_path = argv[i];
  }

  const Criterion criteria[] = {
      {1, "gradient-correctness", c1_gradients},
      {2, "reduction-identity", c2_reduction},
      {3, "norm-preservation", c3_norm_preservation},
      {4, "dual-softmax-mnn", c4_dual_softmax_mnn},
      {5, "subpixel-expectation", c5_subpixel},
      {6, "complexity-scaling", c6_complexity},
      {7, "geometry-oracle", c7_geometry},
      {8, "auc-convention", c8_auc},
      {9, "end-to-end-determinism", c9_determinism},
      {10, "degenerate-inputs", c10_degenerate},
  };

  int passed = 0, ran = 0;
  for (const Criterion& c : criteria) {
    if (only != 0 && c.id != only) continue;
    ++ran;
    std::string detail;
    bool ok = false;
    const auto start = std::chrono::steady_clock::now();
    try {
      ok = c.body(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] %2d %-24s %s (%.1fs)\n", ok ? "PASS" : "FAIL", c.id, c.name, detail.c_str(), secs);
    std::fflush(stdout);
    if (ok) ++passed;
  }
  std::printf("acceptance: %d/%d passed\n", passed, ran);
  return passed == ran ? 0 : 1;
}
