#include "flam/transformer.hpp"

#include <atomic>
#include <cmath>
#include <thread>

#include "flam/errors.hpp"
#include "flam/rng.hpp"

namespace flam {

void TokenSet::validate() const {
  if (tokens.rows() != grid.cells()) throw ShapeError("TokenSet: token count does not match grid");
}

Mat positional_encoding(GridShape grid, int dim) {
  if (dim % 4 != 0) throw ConfigError("positional_encoding: dim must be divisible by 4");
  const int bands = dim / 4;
  Mat pe(grid.cells(), dim);
  for (int y = 0; y < grid.height; ++y) {
    for (int x = 0; x < grid.width; ++x) {
      double* row = pe.row_ptr(y * grid.width + x);
      for (int b = 0; b < bands; ++b) {
        const double freq = std::pow(10000.0, -static_cast<double>(b) / bands);
        row[4 * b + 0] = std::sin(x * freq);
        row[4 * b + 1] = std::cos(x * freq);
        row[4 * b + 2] = std::sin(y * freq);
        row[4 * b + 3] = std::cos(y * freq);
      }
    }
  }
  return pe;
}

Mat layer_norm(const Mat& x, const std::vector<double>& scale, const std::vector<double>& offset) {
  const int d = x.cols();
  if (static_cast<int>(scale.size()) != d || static_cast<int>(offset.size()) != d)
    throw ShapeError("layer_norm: scale/offset length mismatch");
  Mat out(x.rows(), d);
  for (int i = 0; i < x.rows(); ++i) {
    const double* row = x.row_ptr(i);
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += row[j];
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = row[j] - mean;
      var += c * c;
    }
    var /= d;
    const double inv = 1.0 / std::sqrt(var + 1e-15);
    double* orow = out.row_ptr(i);
    for (int j = 0; j < d; ++j) orow[j] = (row[j] - mean) * inv * scale[j] + offset[j];
  }
  return out;
}

static AttentionVariant materialize_variant(const VariantSpec& spec, const EncoderLayerParams& params,
                                            GridShape source_grid, int n_q, int n_kv, int dim,
                                            TransformerDiag* diag) {
  switch (spec.kind) {
    case VariantSpec::Kind::Softmax: {
      const double scale = spec.scale_override != 0.0 ? spec.scale_override : 1.0 / std::sqrt(double(dim));
      return SoftmaxParams{scale};
    }
    case VariantSpec::Kind::Linear:
      return LinearParams{spec.kernel, spec.normalized, spec.eps};
    case VariantSpec::Kind::Focused: {
      FocusParams fp;
      fp.p = spec.p;
      fp.eps = spec.eps;
      fp.normalized = spec.normalized;
      fp.use_dwconv = spec.use_dwconv && n_q == n_kv;
      if (spec.use_dwconv && !fp.use_dwconv && diag) ++diag->dwconv_disabled;
      if (fp.use_dwconv) {
        fp.v_grid = source_grid;
        fp.dw_kernel.size = 3;
        fp.dw_kernel.weights = params.dw_kernel;
      }
      return fp;
    }
  }
  throw ConfigError("unknown attention variant");
}

TokenSet encoder_layer(const TokenSet& x, const TokenSet& source, const EncoderLayerParams& params,
                       const VariantSpec& spec, TransformerDiag* diag) {
  x.validate();
  source.validate();
  const int d = x.tokens.cols();
  if (source.tokens.cols() != d) throw ShapeError("encoder_layer: channel mismatch");
  if (params.w_q.rows() != d) throw ShapeError("encoder_layer: weight dims do not match tokens");

  AttentionInputs in{matmul(x.tokens, params.w_q), matmul(source.tokens, params.w_k),
                     matmul(source.tokens, params.w_v)};
  AttentionVariant variant =
      materialize_variant(spec, params, source.grid, x.tokens.rows(), source.tokens.rows(), d, diag);
  Mat att = matmul(attention_forward(variant, in), params.w_o);

  Mat y = layer_norm(add(x.tokens, att), params.norm1_scale, params.norm1_offset);

  // two-layer MLP, hidden width 2d, ReLU
  Mat h = matmul(y, params.mlp_w1);
  for (int i = 0; i < h.rows(); ++i) {
    double* row = h.row_ptr(i);
    for (int j = 0; j < h.cols(); ++j) {
      row[j] += params.mlp_b1[j];
      if (row[j] < 0.0) row[j] = 0.0;
    }
  }
  Mat m = matmul(h, params.mlp_w2);
  for (int i = 0; i < m.rows(); ++i) {
    double* row = m.row_ptr(i);
    for (int j = 0; j < m.cols(); ++j) row[j] += params.mlp_b2[j];
  }

  TokenSet out;
  out.grid = x.grid;
  out.tokens = layer_norm(add(y, m), params.norm2_scale, params.norm2_offset);
  return out;
}

std::pair<TokenSet, TokenSet> feature_transformer(const TokenSet& fa, const TokenSet& fb,
                                                  const VariantSpec& spec, const StackWeights& weights,
                                                  TransformerDiag* diag) {
  fa.validate();
  fb.validate();
  if (fa.tokens.cols() != fb.tokens.cols()) throw ShapeError("feature_transformer: channel mismatch");

  TokenSet a{add(fa.tokens, positional_encoding(fa.grid, fa.tokens.cols())), fa.grid};
  TokenSet b{add(fb.tokens, positional_encoding(fb.grid, fb.tokens.cols())), fb.grid};

  for (const BlockParams& block : weights.blocks) {
    TokenSet a_s = encoder_layer(a, a, block.self_attn, spec, diag);
    TokenSet b_s = encoder_layer(b, b, block.self_attn, spec, diag);
    // cross updates read the post-self tokens of both sides so that swapping
    // (A, B) swaps the outputs exactly
    TokenSet a_c = encoder_layer(a_s, b_s, block.cross_attn, spec, diag);
    TokenSet b_c = encoder_layer(b_s, a_s, block.cross_attn, spec, diag);
    a = std::move(a_c);
    b = std::move(b_c);
  }
  return {a, b};
}

std::vector<std::pair<TokenSet, TokenSet>> fine_transformer(
    const std::vector<std::pair<TokenSet, TokenSet>>& window_pairs, const VariantSpec& spec,
    const StackWeights& weights, TransformerDiag* diag, int threads) {
  std::vector<std::pair<TokenSet, TokenSet>> out(window_pairs.size());
  std::vector<TransformerDiag> diags(window_pairs.size());

  auto work = [&](std::size_t i) { out[i] = feature_transformer(window_pairs[i].first, window_pairs[i].second, spec, weights, &diags[i]); };

  if (threads <= 1 || window_pairs.size() <= 1) {
    for (std::size_t i = 0; i < window_pairs.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (std::size_t i = next.fetch_add(1); i < window_pairs.size(); i = next.fetch_add(1)) work(i);
    };
    std::vector<std::thread> pool;
    const int n = std::min<int>(threads, static_cast<int>(window_pairs.size()));
    pool.reserve(n);
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (diag)
    for (const auto& d : diags) diag->dwconv_disabled += d.dwconv_disabled;
  return out;
}

static Mat seeded_uniform(Rng& rng, int rows, int cols, double limit) {
  Mat m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(-limit, limit);
  return m;
}

static EncoderLayerParams init_layer(Rng& rng, int dim) {
  EncoderLayerParams p;
  const double lim = 1.0 / std::sqrt(static_cast<double>(dim));
  p.w_q = seeded_uniform(rng, dim, dim, lim);
  p.w_k = seeded_uniform(rng, dim, dim, lim);
  p.w_v = seeded_uniform(rng, dim, dim, lim);
  p.w_o = seeded_uniform(rng, dim, dim, lim);
  p.mlp_w1 = seeded_uniform(rng, dim, 2 * dim, lim);
  p.mlp_w2 = seeded_uniform(rng, 2 * dim, dim, 1.0 / std::sqrt(2.0 * dim));
  p.mlp_b1.assign(2 * dim, 0.0);
  p.mlp_b2.assign(dim, 0.0);
  p.norm1_scale.assign(dim, 1.0);
  p.norm1_offset.assign(dim, 0.0);
  p.norm2_scale.assign(dim, 1.0);
  p.norm2_offset.assign(dim, 0.0);
  p.dw_kernel = seeded_uniform(rng, dim, 9, 1.0 / 3.0);
  return p;
}

StackWeights init_stack_weights(int num_blocks, int dim, uint64_t seed) {
  if (num_blocks < 0 || dim < 1) throw ConfigError("init_stack_weights: bad block count or dim");
  Rng rng(seed);
  StackWeights w;
  w.blocks.reserve(num_blocks);
  for (int b = 0; b < num_blocks; ++b) {
    BlockParams bp;
    bp.self_attn = init_layer(rng, dim);
    bp.cross_attn = init_layer(rng, dim);
    w.blocks.push_back(std::move(bp));
  }
  return w;
}

}  // namespace flam
