#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "flam/attention.hpp"
#include "flam/grid.hpp"
#include "flam/mat.hpp"

namespace flam {

// Tokens of one image at one scale, with the grid they tile.
struct TokenSet {
  Mat tokens;  // N x d
  GridShape grid;
  void validate() const;
};

// Which attention kernel the encoder layers run, plus its scalar knobs.
// Concrete AttentionVariant values (scale from d, conv kernel from layer
// weights, v_grid from the source tokens) are materialized per call.
struct VariantSpec {
  enum class Kind { Softmax, Linear, Focused };
  Kind kind = Kind::Focused;
  double p = 3.0;
  double eps = 1e-6;
  LinearKernel kernel = LinearKernel::ReLU;
  bool normalized = true;
  bool use_dwconv = true;
  double scale_override = 0.0;  // 0 means 1/sqrt(d)
};

struct EncoderLayerParams {
  Mat w_q, w_k, w_v, w_o;      // d x d
  Mat mlp_w1;                  // d x 2d
  Mat mlp_w2;                  // 2d x d
  std::vector<double> mlp_b1;  // 2d
  std::vector<double> mlp_b2;  // d
  std::vector<double> norm1_scale, norm1_offset;  // d
  std::vector<double> norm2_scale, norm2_offset;  // d
  Mat dw_kernel;               // d x 9, used by the focused variant
};

// One transformer block: a self-attention layer and a cross-attention layer,
// shared between the two images.
struct BlockParams {
  EncoderLayerParams self_attn;
  EncoderLayerParams cross_attn;
};

struct StackWeights {
  std::vector<BlockParams> blocks;
  int dim() const { return blocks.empty() ? 0 : blocks.front().self_attn.w_q.rows(); }
};

struct TransformerConfig {
  int num_coarse_blocks = 4;
  int num_fine_blocks = 1;
  int coarse_dim = 64;
  int fine_dim = 32;
  VariantSpec variant;
  uint64_t seed = 0;
};

struct TransformerDiag {
  int dwconv_disabled = 0;
};

// 2-D sinusoidal encoding: dim/4 frequency bands per axis, sin and cos.
// dim must be divisible by 4.
Mat positional_encoding(GridShape grid, int dim);

// Row-wise layer norm; each output row has mean 0 and unit variance before
// the per-channel scale/offset is applied.
Mat layer_norm(const Mat& x, const std::vector<double>& scale, const std::vector<double>& offset);

// One pre-projection encoder layer:
//   y   = LN1(x + Att(x Wq, src Wk, src Wv) Wo)
//   out = LN2(y + MLP(y))
// Self-attention when &x == &source semantics is achieved by passing the
// same token set for both.
TokenSet encoder_layer(const TokenSet& x, const TokenSet& source, const EncoderLayerParams& params,
                       const VariantSpec& spec, TransformerDiag* diag = nullptr);

// Adds positional encoding once at entry, then runs blocks of
// (self A, self B, cross A<-B, cross B<-A) with shared weights. Swapping the
// inputs swaps the outputs bit-identically.
std::pair<TokenSet, TokenSet> feature_transformer(const TokenSet& fa, const TokenSet& fb,
                                                  const VariantSpec& spec, const StackWeights& weights,
                                                  TransformerDiag* diag = nullptr);

// Runs the coarse schedule independently on each matched window pair.
std::vector<std::pair<TokenSet, TokenSet>> fine_transformer(
    const std::vector<std::pair<TokenSet, TokenSet>>& window_pairs, const VariantSpec& spec,
    const StackWeights& weights, TransformerDiag* diag = nullptr, int threads = 1);

// Seeded uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] initialization.
StackWeights init_stack_weights(int num_blocks, int dim, uint64_t seed);

}  // namespace flam
