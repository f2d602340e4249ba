#pragma once

#include <functional>
#include <optional>
#include <variant>

#include "flam/grid.hpp"
#include "flam/mat.hpp"

namespace flam {

// Q, K, V token matrices. Rows are tokens, columns are channels.
struct AttentionInputs {
  Mat q;  // N_q x d
  Mat k;  // N_k x d
  Mat v;  // N_k x d_v
  void validate() const;
};

enum class LinearKernel { ReLU, EluPlusOne };

struct SoftmaxParams {
  double scale = 1.0;  // multiplies the raw scores before the softmax
};

struct LinearParams {
  LinearKernel kernel = LinearKernel::ReLU;
  bool normalized = true;
  double eps = 1e-6;
};

struct FocusParams {
  double p = 3.0;
  double eps = 1e-6;
  bool normalized = true;
  bool use_dwconv = true;
  DepthwiseKernel dw_kernel;  // per-channel 3x3 over V's grid layout
  GridShape v_grid;           // how V rows tile into an image grid
};

using AttentionVariant = std::variant<SoftmaxParams, LinearParams, FocusParams>;

// softmax(scale * QK^T) V. Each output row is a convex combination of V rows.
Mat softmax_attention(const AttentionInputs& in, double scale);

// phi(Q) (phi(K)^T V), evaluated in the O(N d d_v) association order.
// Normalized mode divides each row by phi(Q) (phi(K)^T 1) + eps.
Mat linear_attention(const AttentionInputs& in, LinearKernel kernel, bool normalized, double eps);

// Row-wise focused mapping: r = ReLU(row); (||r|| / ||r^p||) * r^p.
// Rows whose powered image has norm <= eps map to the zero row.
Mat focused_map(const Mat& x, double p, double eps);

// Focused linear attention: linear attention with the focused kernel plus a
// depth-wise convolution of V laid out on fp.v_grid, added token-wise.
// Requires N_q == N_k when the convolution branch is enabled.
Mat focused_linear_attention(const AttentionInputs& in, const FocusParams& fp);

Mat attention_forward(const AttentionVariant& variant, const AttentionInputs& in);

struct AttentionGrads {
  Mat dq;
  Mat dk;
  Mat dv;
  std::optional<Mat> d_dw_kernel;  // focused variant with DWConv only
};

// Vector-Jacobian products of <upstream, forward(variant, in)> with respect
// to Q, K, V and (for the focused variant) the DWConv kernel weights.
// ReLU takes subgradient 0 at 0.
AttentionGrads attention_grads(const AttentionVariant& variant, const AttentionInputs& in, const Mat& upstream);

// Central finite differences of a scalar loss with respect to x's entries.
// Perturbs x in place and restores it; the loss closure must observe x.
Mat finite_diff_grad(const std::function<double()>& loss, Mat& x, double h);

}  // namespace flam
