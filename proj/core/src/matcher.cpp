#include "flam/matcher.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "flam/errors.hpp"

namespace flam {

Mat similarity_matrix(const TokenSet& fa_t, const TokenSet& fb_t, double tau) {
  if (tau <= 0.0) throw ConfigError("similarity_matrix: tau must be positive");
  if (fa_t.tokens.cols() != fb_t.tokens.cols()) throw ShapeError("similarity_matrix: channel mismatch");
  return scaled(matmul_nt(fa_t.tokens, fb_t.tokens), 1.0 / tau);
}

Mat dual_softmax(const Mat& s) {
  Mat row = row_softmax(s, 1.0);
  Mat col = row_softmax(s.transposed(), 1.0).transposed();
  return hadamard(row, col);
}

std::vector<CoarseMatch> mnn_filter(const Mat& p, double conf_threshold) {
  const int na = p.rows(), nb = p.cols();
  std::vector<int> row_arg(na, 0), col_arg(nb, 0);
  for (int i = 0; i < na; ++i) {
    const double* row = p.row_ptr(i);
    int best = 0;
    for (int j = 1; j < nb; ++j)
      if (row[j] > row[best]) best = j;  // strict: lowest index wins ties
    row_arg[i] = best;
  }
  for (int j = 0; j < nb; ++j) {
    int best = 0;
    for (int i = 1; i < na; ++i)
      if (p(i, j) > p(best, j)) best = i;
    col_arg[j] = best;
  }

  std::vector<CoarseMatch> out;
  for (int i = 0; i < na; ++i) {
    const int j = row_arg[i];
    if (col_arg[j] != i) continue;
    if (p(i, j) < conf_threshold) continue;
    out.push_back({i, j, p(i, j)});
  }
  return out;  // ascending in i already, and each j appears at most once
}

CroppedWindow crop_window(const FeatureGrid& fine, WindowSpec center, int w) {
  if (w % 2 == 0 || w < 1) throw ConfigError("crop_window: window size must be odd");
  const int half = w / 2;
  CroppedWindow out;
  if (center.center_x - half < 0 || center.center_x + half >= fine.grid.width ||
      center.center_y - half < 0 || center.center_y + half >= fine.grid.height)
    return out;  // off-grid: dropped by the caller

  out.ok = true;
  out.tokens.grid = {w, w};
  out.tokens.tokens = Mat(w * w, fine.dim);
  for (int dy = -half; dy <= half; ++dy)
    for (int dx = -half; dx <= half; ++dx) {
      const double* src = fine.tokens.row_ptr(fine.index(center.center_x + dx, center.center_y + dy));
      double* dst = out.tokens.tokens.row_ptr((dy + half) * w + (dx + half));
      for (int c = 0; c < fine.dim; ++c) dst[c] = src[c];
    }
  return out;
}

SubpixelOffset refine_match(const TokenSet& wa, const TokenSet& wb, double tau_fine) {
  if (tau_fine <= 0.0) throw ConfigError("refine_match: tau_fine must be positive");
  if (wa.grid.width != wa.grid.height || !(wa.grid == wb.grid))
    throw ShapeError("refine_match: windows must be equal odd squares");
  const int w = wa.grid.width, half = w / 2;
  const int center = half * w + half;

  // correlation of A's center token against every B token
  const double* ref = wa.tokens.row_ptr(center);
  Mat scores(1, w * w);
  for (int t = 0; t < w * w; ++t) {
    const double* tok = wb.tokens.row_ptr(t);
    double dot = 0.0;
    for (int c = 0; c < wa.tokens.cols(); ++c) dot += ref[c] * tok[c];
    scores(0, t) = dot / tau_fine;
  }
  Mat heat = row_softmax(scores, 1.0);

  SubpixelOffset off;
  for (int y = 0; y < w; ++y)
    for (int x = 0; x < w; ++x) {
      const double h = heat(0, y * w + x);
      off.dx += h * (x - half);
      off.dy += h * (y - half);
    }
  return off;
}

MatchSet match_pipeline(const Image& img_a, const Image& img_b, const ModelWeights& weights,
                        const TransformerConfig& cfg, const MatcherConfig& mcfg, int threads) {
  if (mcfg.window % 2 == 0 || mcfg.window < 3) throw ConfigError("match_pipeline: window must be odd and >= 3");
  if (cfg.coarse_dim != kCoarseDim || cfg.fine_dim != kFineDim)
    throw ConfigError("match_pipeline: transformer dims must match the backbone (64 coarse, 32 fine)");

  MatchSet result;

  auto [coarse_a, fine_a] = extract_pyramid(img_a, weights.backbone);
  auto [coarse_b, fine_b] = extract_pyramid(img_b, weights.backbone);

  TransformerDiag tdiag;
  TokenSet ta{coarse_a.tokens, coarse_a.grid};
  TokenSet tb{coarse_b.tokens, coarse_b.grid};
  auto [fa_t, fb_t] = feature_transformer(ta, tb, cfg.variant, weights.coarse_xf, &tdiag);

  Mat p = dual_softmax(similarity_matrix(fa_t, fb_t, mcfg.tau));
  std::vector<CoarseMatch> mutual = mnn_filter(p, 0.0);
  result.diag.candidates = static_cast<int>(mutual.size());

  const auto inside = [&](int idx, const GridShape& g) {
    const int x = idx % g.width, y = idx / g.width;
    return x >= mcfg.border_margin && x < g.width - mcfg.border_margin && y >= mcfg.border_margin &&
           y < g.height - mcfg.border_margin;
  };
  for (const CoarseMatch& m : mutual) {
    if (m.conf < mcfg.conf_threshold) continue;
    if (!inside(m.i, coarse_a.grid) || !inside(m.j, coarse_b.grid)) continue;
    result.coarse.push_back(m);
  }
  result.diag.filtered = static_cast<int>(result.coarse.size());
  if (result.coarse.empty()) {
    result.diag.dwconv_disabled = tdiag.dwconv_disabled;
    return result;
  }

  // crop fine windows around the matched cell centers (coarse->fine factor 4)
  struct PendingPair {
    CoarseMatch m;
    WindowSpec ca, cb;
  };
  std::vector<PendingPair> pending;
  std::vector<std::pair<TokenSet, TokenSet>> windows;
  for (const CoarseMatch& m : result.coarse) {
    WindowSpec ca{(m.i % coarse_a.grid.width) * 4 + 2, (m.i / coarse_a.grid.width) * 4 + 2};
    WindowSpec cb{(m.j % coarse_b.grid.width) * 4 + 2, (m.j / coarse_b.grid.width) * 4 + 2};
    CroppedWindow wa = crop_window(fine_a, ca, mcfg.window);
    CroppedWindow wb = crop_window(fine_b, cb, mcfg.window);
    if (!wa.ok || !wb.ok) {
      ++result.diag.window_dropped;
      continue;
    }
    pending.push_back({m, ca, cb});
    windows.emplace_back(std::move(wa.tokens), std::move(wb.tokens));
  }

  auto transformed = fine_transformer(windows, cfg.variant, weights.fine_xf, &tdiag, threads);

  result.refined.resize(pending.size());
  std::atomic<std::size_t> next{0};
  auto refine_worker = [&]() {
    for (std::size_t idx = next.fetch_add(1); idx < pending.size(); idx = next.fetch_add(1)) {
      const PendingPair& pp = pending[idx];
      SubpixelOffset off = refine_match(transformed[idx].first, transformed[idx].second, mcfg.tau_fine);
      RefinedMatch r;
      r.i = pp.m.i;
      r.j = pp.m.j;
      r.conf = pp.m.conf;
      // A side stays at the coarse cell center; B side moves by the
      // refinement offset. Fine-grid units convert to pixels at x2.
      r.xa = (pp.m.i % coarse_a.grid.width) * 8.0 + 4.0;
      r.ya = (pp.m.i / coarse_a.grid.width) * 8.0 + 4.0;
      r.xb = (pp.cb.center_x + off.dx) * 2.0;
      r.yb = (pp.cb.center_y + off.dy) * 2.0;
      result.refined[idx] = r;
    }
  };
  if (threads <= 1 || pending.size() <= 1) {
    refine_worker();
  } else {
    std::vector<std::thread> pool;
    const int n = std::min<int>(threads, static_cast<int>(pending.size()));
    next.store(0);
    for (int t = 0; t < n; ++t) pool.emplace_back(refine_worker);
    for (auto& th : pool) th.join();
  }

  std::sort(result.refined.begin(), result.refined.end(), [](const RefinedMatch& a, const RefinedMatch& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  result.diag.refined = static_cast<int>(result.refined.size());
  result.diag.dwconv_disabled = tdiag.dwconv_disabled;
  return result;
}

}  // namespace flam
