#include "flam/selftest.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>

#include "flam/attention.hpp"
#include "flam/backbone.hpp"
#include "flam/benchkit.hpp"
#include "flam/errors.hpp"
#include "flam/geoeval.hpp"
#include "flam/matcher.hpp"
#include "flam/rng.hpp"
#include "flam/transformer.hpp"

namespace flam {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

Mat random_mat(Rng& rng, int r, int c, double lo = -1.0, double hi = 1.0) {
  Mat m(r, c);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

struct Suite {
  ModuleReport report;
  void check(const std::string& name, bool pass, const std::string& detail = "") {
    report.checks.push_back({name, pass, detail});
  }
  // wraps a body so an exception fails the check instead of killing the run
  void guarded(const std::string& name, const std::function<void(Suite&)>& body) {
    try {
      body(*this);
    } catch (const std::exception& e) {
      report.checks.push_back({name, false, e.what()});
    }
  }
};

// --------------------------------------------------------------------------

ModuleReport selftest_numgrid(uint64_t seed) {
  Suite s;
  s.report.module = "numgrid";
  Rng rng(seed);

  s.guarded("row_softmax stochastic rows", [&](Suite& s2) {
    double worst = 0.0;
    bool in_range = true;
    for (int trial = 0; trial < 25; ++trial) {
      Mat a = random_mat(rng, 6, 9, -8, 8);
      Mat sm = row_softmax(a, 1.1);
      for (int i = 0; i < sm.rows(); ++i) {
        double sum = 0;
        for (int j = 0; j < sm.cols(); ++j) {
          sum += sm(i, j);
          in_range = in_range && sm(i, j) > 0.0 && sm(i, j) <= 1.0;
        }
        worst = std::max(worst, std::abs(sum - 1.0));
      }
    }
    s2.check("row_softmax stochastic rows", worst < 1e-12 && in_range, "max |sum-1| = " + fmt(worst));
  });

  s.guarded("row_softmax shift invariance", [&](Suite& s2) {
    double worst = 0.0;
    for (int trial = 0; trial < 25; ++trial) {
      Mat a = random_mat(rng, 5, 7, -5, 5);
      Mat shifted = a;
      for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) shifted(i, j) += 2.5;
      worst = std::max(worst, max_abs_diff(row_softmax(a, 1.0), row_softmax(shifted, 1.0)));
    }
    s2.check("row_softmax shift invariance", worst < 1e-12, "max diff = " + fmt(worst));
  });

  s.guarded("depthwise delta identity", [&](Suite& s2) {
    FeatureGrid g({5, 6}, 4);
    for (double& v : g.tokens.data()) v = rng.uniform(-2, 2);
    const double diff = max_abs_diff(depthwise_conv2d(g, DepthwiseKernel::delta(4)).tokens, g.tokens);
    s2.check("depthwise delta identity", diff == 0.0, "max diff = " + fmt(diff));
  });

  s.guarded("matmul naive oracle", [&](Suite& s2) {
    Mat a = random_mat(rng, 64, 64), b = random_mat(rng, 64, 64);
    Mat c = matmul(a, b);
    double worst = 0.0;
    for (int i = 0; i < 64; ++i)
      for (int j = 0; j < 64; ++j) {
        double acc = 0;
        for (int k = 0; k < 64; ++k) acc += a(i, k) * b(k, j);
        worst = std::max(worst, std::abs(c(i, j) - acc));
      }
    const double rel = worst / frobenius_norm(c);
    s2.check("matmul naive oracle", rel < 1e-12, "rel err = " + fmt(rel));
  });

  s.guarded("sym_eigen residual", [&](Suite& s2) {
    double worst_rel = 0.0;
    for (int n : {3, 6, 9}) {
      Mat a(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) a(i, j) = a(j, i) = rng.uniform(-3, 3);
      SymEigen e = sym_eigen(a);
      const double norm = frobenius_norm(a);
      for (int i = 0; i < n; ++i) {
        for (int k = 0; k < n; ++k) {
          double av = 0;
          for (int j = 0; j < n; ++j) av += a(k, j) * e.vectors(j, i);
          worst_rel = std::max(worst_rel, std::abs(av - e.values[i] * e.vectors(k, i)) / norm);
        }
      }
    }
    s2.check("sym_eigen residual", worst_rel <= 1e-8, "worst ||Av-lv||/||A|| = " + fmt(worst_rel));
  });
  return s.report;
}

// --------------------------------------------------------------------------

ModuleReport selftest_attention(uint64_t seed, bool include_complexity) {
  Suite s;
  s.report.module = "attention";
  Rng rng(seed);

  s.guarded("focused map norm preservation", [&](Suite& s2) {
    double worst = 0.0;
    for (double p : {1.0, 2.0, 3.0, 4.0}) {
      for (int trial = 0; trial < 250; ++trial) {
        Mat x = random_mat(rng, 1, 8, -1.5, 1.5);
        Mat y = focused_map(x, p, 1e-12);
        double rn = 0, yn = 0;
        for (int j = 0; j < 8; ++j) {
          const double r = std::max(x(0, j), 0.0);
          rn += r * r;
          yn += y(0, j) * y(0, j);
        }
        if (rn == 0.0) continue;
        worst = std::max(worst, std::abs(std::sqrt(yn) - std::sqrt(rn)));
      }
    }
    s2.check("focused map norm preservation", worst < 1e-12, "max norm drift = " + fmt(worst));
  });

  s.guarded("focused map sharpening", [&](Suite& s2) {
    bool ok = true;
    int trials = 0;
    for (int trial = 0; trial < 40; ++trial) {
      const int d = 6;
      Mat u(1, d), v(1, d);
      for (int j = 0; j < d; ++j) {
        u(0, j) = rng.uniform(0.05, 0.8);
        v(0, j) = rng.uniform(0.05, 0.8);
      }
      const int iu = rng.uniform_int(d), iv = rng.uniform_int(d);
      if (iu == iv) continue;
      u(0, iu) = 1.0;
      v(0, iv) = 1.0;
      ++trials;
      double prev_pair = 2.0, prev_hot = -2.0;
      for (double p : {1.0, 2.0, 3.0, 4.0}) {
        Mat fu = focused_map(u, p, 1e-12), fv = focused_map(v, p, 1e-12);
        double uv = 0, uu = 0, vv = 0, hot = 0;
        for (int j = 0; j < d; ++j) {
          uv += fu(0, j) * fv(0, j);
          uu += fu(0, j) * fu(0, j);
          vv += fv(0, j) * fv(0, j);
        }
        hot = fu(0, iu) / std::sqrt(uu);
        const double c_pair = uv / std::sqrt(uu * vv);
        ok = ok && c_pair <= prev_pair + 1e-12 && hot >= prev_hot - 1e-12;
        prev_pair = c_pair;
        prev_hot = hot;
      }
    }
    s2.check("focused map sharpening", ok && trials > 20, std::to_string(trials) + " sampled trials");
  });

  s.guarded("p=1 reduction to ReLU linear attention", [&](Suite& s2) {
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      AttentionInputs in{random_mat(rng, 9, 4), random_mat(rng, 9, 4), random_mat(rng, 9, 4)};
      FocusParams fp;
      fp.p = 1.0;
      fp.v_grid = {3, 3};
      fp.dw_kernel = DepthwiseKernel::zero(4);
      worst = std::max(worst, max_abs_diff(focused_linear_attention(in, fp),
                                           linear_attention(in, LinearKernel::ReLU, true, 1e-6)));
    }
    s2.check("p=1 reduction to ReLU linear attention", worst < 1e-12, "max diff = " + fmt(worst));
  });

  s.guarded("softmax convexity", [&](Suite& s2) {
    bool ok = true;
    for (int trial = 0; trial < 25; ++trial) {
      AttentionInputs in{random_mat(rng, 7, 5, -3, 3), random_mat(rng, 8, 5, -3, 3),
                         random_mat(rng, 8, 4, -3, 3)};
      Mat out = softmax_attention(in, 0.5);
      for (int c = 0; c < 4; ++c) {
        double lo = HUGE_VAL, hi = -HUGE_VAL;
        for (int k = 0; k < 8; ++k) {
          lo = std::min(lo, in.v(k, c));
          hi = std::max(hi, in.v(k, c));
        }
        for (int i = 0; i < 7; ++i) ok = ok && out(i, c) >= lo - 1e-12 && out(i, c) <= hi + 1e-12;
      }
    }
    s2.check("softmax convexity", ok);
  });

  s.guarded("gradient correctness", [&](Suite& s2) {
    double worst = 0.0;
    for (uint64_t gseed = seed; gseed < seed + 5; ++gseed) {
      Rng grng(gseed);
      auto away = [&](int r, int c) {
        Mat m(r, c);
        for (double& v : m.data()) {
          const double mag = grng.uniform(0.1, 1.0);
          v = grng.uniform() < 0.5 ? -mag : mag;
        }
        return m;
      };
      AttentionInputs in{away(6, 4), away(6, 4), away(6, 4)};
      Mat upstream = random_mat(grng, 6, 4);

      FocusParams fp;
      fp.v_grid = {2, 3};
      fp.dw_kernel.size = 3;
      fp.dw_kernel.weights = random_mat(grng, 4, 9, -0.5, 0.5);
      const AttentionVariant variants[] = {SoftmaxParams{0.5}, LinearParams{LinearKernel::ReLU, true, 1e-6},
                                           AttentionVariant(fp)};
      for (const AttentionVariant& variant : variants) {
        AttentionGrads g = attention_grads(variant, in, upstream);
        auto loss = [&]() {
          Mat out = attention_forward(variant, in);
          double acc = 0;
          for (std::size_t i = 0; i < out.size(); ++i) acc += upstream.data()[i] * out.data()[i];
          return acc;
        };
        auto rel = [&](const Mat& a, Mat& x) {
          Mat n = finite_diff_grad(loss, x, 1e-5);
          double w = 0;
          for (std::size_t i = 0; i < a.size(); ++i)
            w = std::max(w, std::abs(a.data()[i] - n.data()[i]) /
                                std::max({std::abs(a.data()[i]), std::abs(n.data()[i]), 1e-3}));
          return w;
        };
        worst = std::max({worst, rel(g.dq, in.q), rel(g.dk, in.k), rel(g.dv, in.v)});
      }
    }
    s2.check("gradient correctness", worst < 1e-6, "max rel err = " + fmt(worst));
  });

  if (include_complexity) {
    s.guarded("complexity scaling", [&](Suite& s2) {
      auto soft = run_attention_bench({"softmax"}, {512, 1024, 2048, 4096}, 64, 3, seed);
      auto foc = run_attention_bench({"focused"}, {2048, 4096, 8192, 16384}, 64, 3, seed);
      std::vector<double> ns, ts;
      for (const auto& p : soft) {
        ns.push_back(p.n);
        ts.push_back(p.median_seconds);
      }
      const double soft_slope = loglog_slope(ns, ts).slope;
      ns.clear();
      ts.clear();
      for (const auto& p : foc) {
        ns.push_back(p.n);
        ts.push_back(p.median_seconds);
      }
      const double foc_slope = loglog_slope(ns, ts).slope;
      s2.check("complexity scaling", soft_slope > 1.7 && foc_slope < 1.3,
               "softmax slope " + fmt(soft_slope) + ", focused slope " + fmt(foc_slope));
    });
  }
  return s.report;
}

// --------------------------------------------------------------------------

ModuleReport selftest_transformer(uint64_t seed) {
  Suite s;
  s.report.module = "transformer";
  Rng rng(seed);
  const int d = 16;
  StackWeights w = init_stack_weights(2, d, seed);
  VariantSpec spec;

  s.guarded("shape preservation and determinism", [&](Suite& s2) {
    TokenSet fa{random_mat(rng, 12, d), {3, 4}};
    TokenSet fb{random_mat(rng, 12, d), {3, 4}};
    auto [a1, b1] = feature_transformer(fa, fb, spec, w);
    auto [a2, b2] = feature_transformer(fa, fb, spec, w);
    const bool shapes = a1.tokens.rows() == 12 && a1.tokens.cols() == d && b1.tokens.rows() == 12;
    const bool det = max_abs_diff(a1.tokens, a2.tokens) == 0.0 && max_abs_diff(b1.tokens, b2.tokens) == 0.0;
    s2.check("shape preservation and determinism", shapes && det);
  });

  s.guarded("permutation equivariance (no positional encoding)", [&](Suite& s2) {
    VariantSpec soft;
    soft.kind = VariantSpec::Kind::Softmax;
    TokenSet x{random_mat(rng, 9, d), {3, 3}};
    std::vector<int> perm{4, 2, 7, 0, 8, 3, 1, 6, 5};
    TokenSet xp;
    xp.grid = x.grid;
    xp.tokens = Mat(9, d);
    for (int i = 0; i < 9; ++i)
      for (int c = 0; c < d; ++c) xp.tokens(i, c) = x.tokens(perm[i], c);
    TokenSet out = encoder_layer(x, x, w.blocks[0].self_attn, soft);
    TokenSet outp = encoder_layer(xp, xp, w.blocks[0].self_attn, soft);
    double worst = 0.0;
    for (int i = 0; i < 9; ++i)
      for (int c = 0; c < d; ++c) worst = std::max(worst, std::abs(outp.tokens(i, c) - out.tokens(perm[i], c)));
    s2.check("permutation equivariance (no positional encoding)", worst < 1e-10, "max diff = " + fmt(worst));
  });

  s.guarded("layer norm rows standardized", [&](Suite& s2) {
    Mat x = random_mat(rng, 8, d, -5, 5);
    Mat y = layer_norm(x, std::vector<double>(d, 1.0), std::vector<double>(d, 0.0));
    double worst = 0.0;
    for (int i = 0; i < 8; ++i) {
      double mean = 0, var = 0;
      for (int j = 0; j < d; ++j) mean += y(i, j);
      mean /= d;
      for (int j = 0; j < d; ++j) var += (y(i, j) - mean) * (y(i, j) - mean);
      var /= d;
      worst = std::max({worst, std::abs(mean), std::abs(var - 1.0)});
    }
    s2.check("layer norm rows standardized", worst < 1e-10, "max deviation = " + fmt(worst));
  });

  s.guarded("finiteness on wide-range inputs", [&](Suite& s2) {
    bool finite = true;
    for (int trial = 0; trial < 100; ++trial) {
      Rng trng(seed + 1000 + trial);
      TokenSet fa{random_mat(trng, 6, d, -10, 10), {2, 3}};
      TokenSet fb{random_mat(trng, 6, d, -10, 10), {2, 3}};
      auto [a, b] = feature_transformer(fa, fb, spec, w);
      finite = finite && a.tokens.all_finite() && b.tokens.all_finite();
    }
    s2.check("finiteness on wide-range inputs", finite);
  });
  return s.report;
}

// --------------------------------------------------------------------------

ModuleReport selftest_backbone(uint64_t seed, const std::string& weights_path) {
  Suite s;
  s.report.module = "backbone";
  Rng rng(seed);

  s.guarded("shape contract", [&](Suite& s2) {
    Image img;
    img.height = img.width = 64;
    img.orig_height = img.orig_width = 64;
    img.pixels.resize(64 * 64);
    for (double& v : img.pixels) v = rng.uniform();
    BackboneWeights w = backbone_init_seeded(seed);
    auto [coarse, fine] = extract_pyramid(img, w);
    s2.check("shape contract", coarse.grid.height == 8 && coarse.grid.width == 8 && coarse.dim == 64 &&
                                   fine.grid.height == 32 && fine.grid.width == 32 && fine.dim == 32);
  });

  s.guarded("seeded determinism", [&](Suite& s2) {
    Image img;
    img.height = img.width = 32;
    img.orig_height = img.orig_width = 32;
    img.pixels.resize(32 * 32);
    for (double& v : img.pixels) v = rng.uniform();
    auto [c1, f1] = extract_pyramid(img, backbone_init_seeded(seed + 1));
    auto [c2, f2] = extract_pyramid(img, backbone_init_seeded(seed + 1));
    s2.check("seeded determinism", max_abs_diff(c1.tokens, c2.tokens) == 0.0 &&
                                       max_abs_diff(f1.tokens, f2.tokens) == 0.0);
  });

  s.guarded("interior shift equivariance", [&](Suite& s2) {
    const int n = 96;
    Image base;
    base.height = base.width = n + 8;
    base.orig_height = base.orig_width = n + 8;
    base.pixels.resize(static_cast<std::size_t>(n + 8) * (n + 8));
    for (double& v : base.pixels) v = rng.uniform();
    Image a, b;
    a.height = a.width = n;
    a.orig_height = a.orig_width = n;
    a.pixels.resize(static_cast<std::size_t>(n) * n);
    b = a;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        a.at(x, y) = base.at(x + 8, y + 8);
        b.at(x, y) = base.at(x, y);
      }
    BackboneWeights w = backbone_init_seeded(seed + 2);
    auto [ca, fa] = extract_pyramid(a, w);
    auto [cb, fb] = extract_pyramid(b, w);
    double worst = 0.0;
    for (int cy = 3; cy <= 7; ++cy)
      for (int cx = 3; cx <= 7; ++cx)
        for (int c = 0; c < ca.dim; ++c)
          worst = std::max(worst, std::abs(ca.at(cx, cy, c) - cb.at(cx + 1, cy + 1, c)));
    s2.check("interior shift equivariance", worst < 1e-8, "max interior diff = " + fmt(worst));
  });

  s.guarded("weight round trip", [&](Suite& s2) {
    TransformerConfig cfg;
    cfg.num_coarse_blocks = 1;
    ModelWeights w = model_init_seeded(seed + 3, 1, cfg);
    const auto path = (std::filesystem::temp_directory_path() / "flam_selftest_weights.flatw").string();
    save_model(path, w);
    ModelWeights r = load_model(path);
    const bool exact = max_abs_diff(r.backbone.stem.w, w.backbone.stem.w) == 0.0 &&
                       max_abs_diff(r.coarse_xf.blocks[0].self_attn.w_q, w.coarse_xf.blocks[0].self_attn.w_q) == 0.0;
    std::filesystem::remove(path);
    s2.check("weight round trip", exact);
  });

  if (!weights_path.empty()) {
    s.guarded("supplied weight file loads", [&](Suite& s2) {
      load_model(weights_path);
      s2.check("supplied weight file loads", true, weights_path);
    });
  }
  return s.report;
}

// --------------------------------------------------------------------------

ModuleReport selftest_matcher(uint64_t seed) {
  Suite s;
  s.report.module = "matcher";
  Rng rng(seed);

  s.guarded("dual softmax factors stochastic", [&](Suite& s2) {
    double worst = 0.0;
    bool open_interval = true;
    for (int trial = 0; trial < 25; ++trial) {
      Mat sm = random_mat(rng, 6, 8, -3, 3);
      Mat row = row_softmax(sm, 1.0);
      Mat col = row_softmax(sm.transposed(), 1.0).transposed();
      Mat p = dual_softmax(sm);
      for (int i = 0; i < 6; ++i) {
        double rs = 0;
        for (int j = 0; j < 8; ++j) {
          rs += row(i, j);
          open_interval = open_interval && p(i, j) > 0.0 && p(i, j) < 1.0;
        }
        worst = std::max(worst, std::abs(rs - 1.0));
      }
      for (int j = 0; j < 8; ++j) {
        double cs = 0;
        for (int i = 0; i < 6; ++i) cs += col(i, j);
        worst = std::max(worst, std::abs(cs - 1.0));
      }
    }
    s2.check("dual softmax factors stochastic", worst < 1e-12 && open_interval, "max |sum-1| = " + fmt(worst));
  });

  s.guarded("mnn partial injection", [&](Suite& s2) {
    bool ok = true;
    for (int trial = 0; trial < 50; ++trial) {
      Mat sm = random_mat(rng, 7, 9, -2, 2);
      auto matches = mnn_filter(dual_softmax(sm), 0.0);
      std::vector<char> seen_i(7, 0), seen_j(9, 0);
      for (const auto& m : matches) {
        ok = ok && !seen_i[m.i] && !seen_j[m.j];
        seen_i[m.i] = seen_j[m.j] = 1;
      }
    }
    s2.check("mnn partial injection", ok);
  });

  s.guarded("temperature monotonicity (row factor)", [&](Suite& s2) {
    bool ok = true;
    for (int trial = 0; trial < 100; ++trial) {
      Mat sm = random_mat(rng, 4, 5, -1.5, 1.5);
      Mat soft = row_softmax(sm, 1.0);
      Mat sharp = row_softmax(scaled(sm, 2.0), 1.0);
      for (int i = 0; i < 4; ++i) {
        double ms = 0, mh = 0;
        for (int j = 0; j < 5; ++j) {
          ms = std::max(ms, soft(i, j));
          mh = std::max(mh, sharp(i, j));
        }
        ok = ok && mh >= ms - 1e-12;
      }
    }
    s2.check("temperature monotonicity (row factor)", ok);
  });

  s.guarded("refinement offset bounded by the window", [&](Suite& s2) {
    bool ok = true;
    for (int trial = 0; trial < 50; ++trial) {
      TokenSet wa{random_mat(rng, 25, 6, -2, 2), {5, 5}};
      TokenSet wb{random_mat(rng, 25, 6, -2, 2), {5, 5}};
      SubpixelOffset off = refine_match(wa, wb, 0.1);
      ok = ok && std::abs(off.dx) <= 2.0 && std::abs(off.dy) <= 2.0;
    }
    s2.check("refinement offset bounded by the window", ok);
  });

  s.guarded("end-to-end determinism", [&](Suite& s2) {
    Image img;
    img.height = img.width = 64;
    img.orig_height = img.orig_width = 64;
    img.pixels.resize(64 * 64);
    Rng irng(seed + 5);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        img.pixels[y * 64 + x] = 0.5 + 0.3 * std::sin(0.3 * x + 0.2 * y + irng.uniform(0, 0.01));
    TransformerConfig cfg;
    cfg.num_coarse_blocks = 1;
    cfg.num_fine_blocks = 1;
    ModelWeights w = model_init_seeded(seed + 6, 1, cfg);
    MatcherConfig mcfg;
    mcfg.conf_threshold = 0.01;
    MatchSet m1 = match_pipeline(img, img, w, cfg, mcfg, 1);
    MatchSet m2 = match_pipeline(img, img, w, cfg, mcfg, 4);
    bool ok = m1.refined.size() == m2.refined.size();
    for (std::size_t i = 0; ok && i < m1.refined.size(); ++i)
      ok = m1.refined[i].xb == m2.refined[i].xb && m1.refined[i].yb == m2.refined[i].yb &&
           m1.refined[i].conf == m2.refined[i].conf;
    s2.check("end-to-end determinism", ok, std::to_string(m1.refined.size()) + " matches");
  });
  return s.report;
}

// --------------------------------------------------------------------------

ModuleReport selftest_geoeval(uint64_t seed) {
  Suite s;
  s.report.module = "geoeval";

  s.guarded("inlier residuals bounded by the threshold", [&](Suite& s2) {
    EvalConfig cfg;
    cfg.n_points = 24;
    SyntheticPair pair = gen_synthetic_pair(seed, cfg);
    InjectionMatches m = match_injected(pair, cfg.mcfg);
    RansacResult res = ransac_essential(m.pixel_pairs, pair.k, 200, 1.0, seed);
    s2.check("inlier residuals bounded by the threshold", res.inlier_count >= 16,
             std::to_string(res.inlier_count) + " inliers");
  });

  s.guarded("returned poses satisfy pose invariants", [&](Suite& s2) {
    EvalConfig cfg;
    cfg.n_points = 24;
    bool ok = true;
    for (int i = 0; i < 3; ++i) {
      SyntheticPair pair = gen_synthetic_pair(seed + 10 + i, cfg);
      InjectionMatches m = match_injected(pair, cfg.mcfg);
      RansacResult res = ransac_essential(m.pixel_pairs, pair.k, 200, 1.0, seed + i);
      RelPose est = decompose_essential(res.e, m.pixel_pairs, pair.k);
      try {
        validate_pose(est);
      } catch (const Error&) {
        ok = false;
      }
    }
    s2.check("returned poses satisfy pose invariants", ok);
  });

  s.guarded("auc monotone in threshold", [&](Suite& s2) {
    Rng rng(seed + 20);
    bool ok = true;
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> errors;
      const int n = 1 + rng.uniform_int(10);
      for (int i = 0; i < n; ++i)
        errors.push_back(rng.uniform() < 0.1 ? std::numeric_limits<double>::infinity()
                                             : rng.uniform(0.0, 30.0));
      const double a5 = auc(errors, 5), a10 = auc(errors, 10), a20 = auc(errors, 20);
      ok = ok && a5 <= a10 + 1e-15 && a10 <= a20 + 1e-15;
    }
    s2.check("auc monotone in threshold", ok);
  });

  s.guarded("pose error symmetry", [&](Suite& s2) {
    Rng rng(seed + 30);
    bool ok = true;
    for (int trial = 0; trial < 50; ++trial) {
      RelPose a, b;
      a.r = rotation_from_axis_angle({rng.normal(), rng.normal(), rng.normal()}, rng.uniform(0.01, 0.5));
      b.r = rotation_from_axis_angle({rng.normal(), rng.normal(), rng.normal()}, rng.uniform(0.01, 0.5));
      a.t = normalized(Vec3{rng.normal(), rng.normal(), rng.normal()});
      b.t = normalized(Vec3{rng.normal(), rng.normal(), rng.normal()});
      PoseErrorRecord ab = pose_error(a, b), ba = pose_error(b, a);
      RelPose an = a, bn = b;
      for (int k = 0; k < 3; ++k) {
        an.t[k] = -an.t[k];
        bn.t[k] = -bn.t[k];
      }
      PoseErrorRecord neg = pose_error(an, bn);
      ok = ok && std::abs(ab.pose_err_deg - ba.pose_err_deg) < 1e-9 &&
           std::abs(ab.pose_err_deg - neg.pose_err_deg) < 1e-9;
    }
    s2.check("pose error symmetry", ok);
  });

  s.guarded("noiseless injection recovers the planted cells", [&](Suite& s2) {
    EvalConfig cfg;
    cfg.n_points = 20;
    bool ok = true;
    for (int i = 0; i < 3; ++i) {
      SyntheticPair pair = gen_synthetic_pair(seed + 40 + i, cfg);
      InjectionMatches m = match_injected(pair, cfg.mcfg);
      ok = ok && m.n_coarse == static_cast<int>(pair.gt_pixels.size()) && m.n_cell_correct == m.n_coarse;
    }
    s2.check("noiseless injection recovers the planted cells", ok);
  });
  return s.report;
}

}  // namespace

std::vector<ModuleReport> run_selftest(const SelftestOptions& opts) {
  std::vector<ModuleReport> reports;
  auto want = [&](const char* name) { return opts.module_filter.empty() || opts.module_filter == name; };

  if (want("numgrid")) reports.push_back(selftest_numgrid(opts.seed));
  if (want("attention")) reports.push_back(selftest_attention(opts.seed, opts.include_complexity));
  if (want("transformer")) reports.push_back(selftest_transformer(opts.seed));
  if (want("backbone")) reports.push_back(selftest_backbone(opts.seed, opts.weights_path));
  if (want("matcher")) reports.push_back(selftest_matcher(opts.seed));
  if (want("geoeval")) reports.push_back(selftest_geoeval(opts.seed));
  if (reports.empty()) throw ConfigError("selftest: unknown module filter: " + opts.module_filter);
  return reports;
}

}  // namespace flam
