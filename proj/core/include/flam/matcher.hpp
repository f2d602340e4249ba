#pragma once

#include <vector>

#include "flam/backbone.hpp"
#include "flam/grid.hpp"
#include "flam/image.hpp"
#include "flam/mat.hpp"
#include "flam/transformer.hpp"

namespace flam {

struct MatcherConfig {
  double tau = 0.1;        // coarse similarity temperature
  double tau_fine = 0.1;   // refinement heatmap temperature
  double conf_threshold = 0.2;
  int window = 5;          // odd fine-window side
  int border_margin = 1;   // coarse cells excluded at the grid border
};

struct CoarseMatch {
  int i = 0;  // token index in image A's coarse grid
  int j = 0;  // token index in image B's coarse grid
  double conf = 0.0;
};

struct RefinedMatch {
  double xa = 0, ya = 0;  // original-resolution pixels in image A
  double xb = 0, yb = 0;  // original-resolution pixels in image B
  double conf = 0.0;
  int i = 0, j = 0;       // originating coarse pair, kept for sorting/tests
};

struct MatchDiagnostics {
  int candidates = 0;       // mutual-nearest pairs before thresholds
  int filtered = 0;         // kept after confidence threshold and border margin
  int window_dropped = 0;   // fine windows that spilled off the grid
  int refined = 0;
  int dwconv_disabled = 0;  // cross-attention layers that fell back (unequal grids)
};

struct MatchSet {
  std::vector<CoarseMatch> coarse;
  std::vector<RefinedMatch> refined;
  MatchDiagnostics diag;
};

// S(i, j) = <a_i, b_j> / tau.
Mat similarity_matrix(const TokenSet& fa_t, const TokenSet& fb_t, double tau);

// P(i, j) = row_softmax(S)(i, j) * col_softmax(S)(i, j).
Mat dual_softmax(const Mat& s);

// Keeps (i, j) iff mutually argmax under P (lowest index wins ties) and
// P(i, j) >= conf_threshold. Output is sorted by (i, j).
std::vector<CoarseMatch> mnn_filter(const Mat& p, double conf_threshold);

// A coarse cell center mapped to the fine grid (factor 4, cell-center
// convention: fine index = 4*cell + 2).
struct WindowSpec {
  int center_x = 0;
  int center_y = 0;
};

// Crops a w x w token window around the center; empty optional-like flag via
// `ok` when the window spills off the grid.
struct CroppedWindow {
  bool ok = false;
  TokenSet tokens;
};
CroppedWindow crop_window(const FeatureGrid& fine, WindowSpec center, int w);

// Softmax-correlation expectation of the B window against A's center token.
// Returns the offset from the window center in fine-grid units.
struct SubpixelOffset {
  double dx = 0.0;
  double dy = 0.0;
};
SubpixelOffset refine_match(const TokenSet& wa, const TokenSet& wb, double tau_fine);

// Full composition: pyramid -> coarse transformer -> dual-softmax/MNN ->
// windows -> fine transformer -> sub-pixel refinement. Deterministic; the
// refinement stage may run on `threads` workers without changing results.
MatchSet match_pipeline(const Image& img_a, const Image& img_b, const ModelWeights& weights,
                        const TransformerConfig& cfg, const MatcherConfig& mcfg, int threads = 1);

}  // namespace flam
