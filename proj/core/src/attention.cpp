#include "flam/attention.hpp"

#include <cmath>

#include "flam/errors.hpp"

namespace flam {

void AttentionInputs::validate() const {
  if (q.cols() != k.cols()) throw ShapeError("attention: Q and K channel counts differ");
  if (k.rows() != v.rows()) throw ShapeError("attention: K and V token counts differ");
}

Mat softmax_attention(const AttentionInputs& in, double scale) {
  in.validate();
  Mat scores = matmul_nt(in.q, in.k);
  return matmul(row_softmax(scores, scale), in.v);
}

static double kernel_apply(double x, LinearKernel k) {
  switch (k) {
    case LinearKernel::ReLU:
      return x > 0.0 ? x : 0.0;
    case LinearKernel::EluPlusOne:
      return x > 0.0 ? x + 1.0 : std::exp(x);
  }
  throw ConfigError("linear_attention: unknown kernel");
}

static double kernel_deriv(double x, LinearKernel k) {
  switch (k) {
    case LinearKernel::ReLU:
      return x > 0.0 ? 1.0 : 0.0;
    case LinearKernel::EluPlusOne:
      return x > 0.0 ? 1.0 : std::exp(x);
  }
  throw ConfigError("linear_attention: unknown kernel");
}

static Mat map_kernel(const Mat& x, LinearKernel k) {
  Mat y = x;
  for (double& v : y.data()) v = kernel_apply(v, k);
  return y;
}

// Shared linear-attention core on already-mapped features.
// out_i = A_i (B^T V) [/ (A_i (B^T 1) + eps)]
static Mat linear_core(const Mat& a, const Mat& b, const Mat& v, bool normalized, double eps) {
  Mat kv = matmul(b.transposed(), v);  // d x d_v
  Mat out = matmul(a, kv);             // N_q x d_v
  if (!normalized) return out;

  const int d = b.cols();
  std::vector<double> colsum(d, 0.0);
  for (int i = 0; i < b.rows(); ++i) {
    const double* row = b.row_ptr(i);
    for (int j = 0; j < d; ++j) colsum[j] += row[j];
  }
  for (int i = 0; i < a.rows(); ++i) {
    const double* arow = a.row_ptr(i);
    double z = eps;
    for (int j = 0; j < d; ++j) z += arow[j] * colsum[j];
    double* orow = out.row_ptr(i);
    for (int c = 0; c < out.cols(); ++c) orow[c] /= z;
  }
  return out;
}

Mat linear_attention(const AttentionInputs& in, LinearKernel kernel, bool normalized, double eps) {
  in.validate();
  if (eps <= 0.0) throw ConfigError("linear_attention: eps must be positive");
  return linear_core(map_kernel(in.q, kernel), map_kernel(in.k, kernel), in.v, normalized, eps);
}

Mat focused_map(const Mat& x, double p, double eps) {
  if (p < 1.0) throw ConfigError("focused_map: exponent must be >= 1");
  const int n = x.cols();
  Mat out(x.rows(), n);
  std::vector<double> powed(n);
  for (int i = 0; i < x.rows(); ++i) {
    const double* row = x.row_ptr(i);
    double norm_sq = 0.0, pow_sq = 0.0;
    for (int j = 0; j < n; ++j) {
      const double r = row[j] > 0.0 ? row[j] : 0.0;
      powed[j] = std::pow(r, p);
      norm_sq += r * r;
      pow_sq += powed[j] * powed[j];
    }
    const double pnorm = std::sqrt(pow_sq);
    if (pnorm <= eps) continue;  // degenerate row maps to zero
    const double ratio = std::sqrt(norm_sq) / pnorm;
    double* orow = out.row_ptr(i);
    for (int j = 0; j < n; ++j) orow[j] = ratio * powed[j];
  }
  return out;
}

static void check_focus_shapes(const AttentionInputs& in, const FocusParams& fp) {
  if (fp.use_dwconv) {
    if (in.q.rows() != in.k.rows())
      throw ShapeError("focused_linear_attention: DWConv branch requires N_q == N_k");
    if (fp.v_grid.cells() != in.v.rows())
      throw ShapeError("focused_linear_attention: v_grid does not tile V's rows");
    if (fp.dw_kernel.channels() != in.v.cols())
      throw ShapeError("focused_linear_attention: DWConv kernel channel mismatch");
  }
}

Mat focused_linear_attention(const AttentionInputs& in, const FocusParams& fp) {
  in.validate();
  if (fp.eps <= 0.0) throw ConfigError("focused_linear_attention: eps must be positive");
  check_focus_shapes(in, fp);

  Mat out = linear_core(focused_map(in.q, fp.p, fp.eps), focused_map(in.k, fp.p, fp.eps), in.v,
                        fp.normalized, fp.eps);
  if (fp.use_dwconv) {
    FeatureGrid vg(fp.v_grid, in.v);
    out = add(out, depthwise_conv2d(vg, fp.dw_kernel).tokens);
  }
  return out;
}

Mat attention_forward(const AttentionVariant& variant, const AttentionInputs& in) {
  return std::visit(
      [&](const auto& params) -> Mat {
        using T = std::decay_t<decltype(params)>;
        if constexpr (std::is_same_v<T, SoftmaxParams>) {
          return softmax_attention(in, params.scale);
        } else if constexpr (std::is_same_v<T, LinearParams>) {
          return linear_attention(in, params.kernel, params.normalized, params.eps);
        } else {
          return focused_linear_attention(in, params);
        }
      },
      variant);
}

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

static AttentionGrads softmax_grads(const AttentionInputs& in, double scale, const Mat& g) {
  const Mat scores = matmul_nt(in.q, in.k);
  const Mat p = row_softmax(scores, scale);

  AttentionGrads out;
  out.dv = matmul(p.transposed(), g);
  Mat dp = matmul_nt(g, in.v);  // g * V^T

  // Per-row softmax VJP: dS_ij = P_ij (dP_ij - sum_k dP_ik P_ik)
  Mat ds(p.rows(), p.cols());
  for (int i = 0; i < p.rows(); ++i) {
    const double* prow = p.row_ptr(i);
    const double* dprow = dp.row_ptr(i);
    double dot = 0.0;
    for (int j = 0; j < p.cols(); ++j) dot += prow[j] * dprow[j];
    double* dsrow = ds.row_ptr(i);
    for (int j = 0; j < p.cols(); ++j) dsrow[j] = scale * prow[j] * (dprow[j] - dot);
  }
  out.dq = matmul(ds, in.k);
  out.dk = matmul(ds.transposed(), in.q);
  return out;
}

// Backward of linear_core through already-mapped features a, b.
// Returns gradients w.r.t. a, b and v.
struct LinearCoreGrads {
  Mat da, db, dv;
};

static LinearCoreGrads linear_core_grads(const Mat& a, const Mat& b, const Mat& v, bool normalized,
                                         double eps, const Mat& g) {
  const int d = a.cols(), dv_cols = v.cols();
  Mat kv = matmul(b.transposed(), v);  // d x d_v

  LinearCoreGrads out;
  Mat du = g;  // becomes G/z in the normalized path
  std::vector<double> dz;

  if (normalized) {
    std::vector<double> colsum(d, 0.0);
    for (int i = 0; i < b.rows(); ++i) {
      const double* row = b.row_ptr(i);
      for (int j = 0; j < d; ++j) colsum[j] += row[j];
    }
    Mat u = matmul(a, kv);
    dz.assign(a.rows(), 0.0);
    for (int i = 0; i < a.rows(); ++i) {
      const double* arow = a.row_ptr(i);
      double z = eps;
      for (int j = 0; j < d; ++j) z += arow[j] * colsum[j];
      const double* grow = g.row_ptr(i);
      const double* urow = u.row_ptr(i);
      double* durow = du.row_ptr(i);
      double acc = 0.0;
      for (int c = 0; c < dv_cols; ++c) {
        durow[c] = grow[c] / z;
        acc += grow[c] * urow[c];
      }
      dz[i] = -acc / (z * z);
    }
    // dA = dU KV^T + dz s^T ; ds = A^T dz ; dB += 1 ds^T
    out.da = matmul_nt(du, kv);
    for (int i = 0; i < a.rows(); ++i) {
      double* darow = out.da.row_ptr(i);
      for (int j = 0; j < d; ++j) darow[j] += dz[i] * colsum[j];
    }
    std::vector<double> ds(d, 0.0);
    for (int i = 0; i < a.rows(); ++i) {
      const double* arow = a.row_ptr(i);
      for (int j = 0; j < d; ++j) ds[j] += arow[j] * dz[i];
    }
    Mat dkv = matmul(a.transposed(), du);  // d x d_v
    out.db = matmul_nt(v, dkv);            // V dKV^T : N_k x d
    for (int i = 0; i < b.rows(); ++i) {
      double* dbrow = out.db.row_ptr(i);
      for (int j = 0; j < d; ++j) dbrow[j] += ds[j];
    }
    out.dv = matmul(b, dkv);
  } else {
    out.da = matmul_nt(du, kv);
    Mat dkv = matmul(a.transposed(), du);
    out.db = matmul_nt(v, dkv);
    out.dv = matmul(b, dkv);
  }
  return out;
}

static Mat kernel_backward(const Mat& x, LinearKernel k, const Mat& upstream) {
  Mat dx = upstream;
  for (std::size_t i = 0; i < dx.size(); ++i) dx.data()[i] *= kernel_deriv(x.data()[i], k);
  return dx;
}

// VJP through the focused mapping, row by row.
static Mat focused_map_grad(const Mat& x, double p, double eps, const Mat& upstream) {
  const int n = x.cols();
  Mat dx(x.rows(), n);
  std::vector<double> r(n), u(n);
  for (int i = 0; i < x.rows(); ++i) {
    const double* row = x.row_ptr(i);
    const double* grow = upstream.row_ptr(i);
    double norm_sq = 0.0, pow_sq = 0.0;
    for (int j = 0; j < n; ++j) {
      r[j] = row[j] > 0.0 ? row[j] : 0.0;
      u[j] = std::pow(r[j], p);
      norm_sq += r[j] * r[j];
      pow_sq += u[j] * u[j];
    }
    const double b = std::sqrt(pow_sq);
    if (b <= eps) continue;  // zero output row, zero gradient
    const double a = std::sqrt(norm_sq);

    double gu = 0.0;
    for (int j = 0; j < n; ++j) gu += grow[j] * u[j];
    const double dL_da = gu / b;
    const double dL_db = -a * gu / (b * b);

    double* dxrow = dx.row_ptr(i);
    for (int j = 0; j < n; ++j) {
      if (!(row[j] > 0.0)) continue;  // ReLU subgradient 0 at and below 0
      const double du_j = (a / b) * grow[j] + dL_db * (u[j] / b);
      const double dr_j = dL_da * (r[j] / a) + du_j * p * std::pow(r[j], p - 1.0);
      dxrow[j] = dr_j;
    }
  }
  return dx;
}

AttentionGrads attention_grads(const AttentionVariant& variant, const AttentionInputs& in, const Mat& upstream) {
  in.validate();
  if (upstream.rows() != in.q.rows() || upstream.cols() != in.v.cols())
    throw ShapeError("attention_grads: upstream shape does not match forward output");

  return std::visit(
      [&](const auto& params) -> AttentionGrads {
        using T = std::decay_t<decltype(params)>;
        if constexpr (std::is_same_v<T, SoftmaxParams>) {
          return softmax_grads(in, params.scale, upstream);
        } else if constexpr (std::is_same_v<T, LinearParams>) {
          const Mat a = map_kernel(in.q, params.kernel);
          const Mat b = map_kernel(in.k, params.kernel);
          LinearCoreGrads core = linear_core_grads(a, b, in.v, params.normalized, params.eps, upstream);
          AttentionGrads out;
          out.dq = kernel_backward(in.q, params.kernel, core.da);
          out.dk = kernel_backward(in.k, params.kernel, core.db);
          out.dv = std::move(core.dv);
          return out;
        } else {
          const FocusParams& fp = params;
          check_focus_shapes(in, fp);
          const Mat a = focused_map(in.q, fp.p, fp.eps);
          const Mat b = focused_map(in.k, fp.p, fp.eps);
          LinearCoreGrads core = linear_core_grads(a, b, in.v, fp.normalized, fp.eps, upstream);
          AttentionGrads out;
          out.dq = focused_map_grad(in.q, fp.p, fp.eps, core.da);
          out.dk = focused_map_grad(in.k, fp.p, fp.eps, core.db);
          out.dv = std::move(core.dv);
          if (fp.use_dwconv) {
            FeatureGrid gg(fp.v_grid, upstream);
            out.dv = add(out.dv, depthwise_conv2d_input_grad(gg, fp.dw_kernel).tokens);
            FeatureGrid vg(fp.v_grid, in.v);
            out.d_dw_kernel = depthwise_conv2d_kernel_grad(gg, vg, fp.dw_kernel.size);
          }
          return out;
        }
      },
      variant);
}

Mat finite_diff_grad(const std::function<double()>& loss, Mat& x, double h) {
  if (h <= 0.0) throw ConfigError("finite_diff_grad: h must be positive");
  Mat g(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + h;
    const double up = loss();
    x.data()[i] = saved - h;
    const double down = loss();
    x.data()[i] = saved;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace flam
