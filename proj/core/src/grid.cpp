#include "flam/grid.hpp"

#include "flam/errors.hpp"

namespace flam {

FeatureGrid::FeatureGrid(GridShape g, int d) : grid(g), dim(d), tokens(g.cells(), d) {
  if (g.height < 1 || g.width < 1) throw ShapeError("FeatureGrid: grid dimensions must be >= 1");
}

FeatureGrid::FeatureGrid(GridShape g, Mat t) : grid(g), dim(t.cols()), tokens(std::move(t)) {
  validate();
}

void FeatureGrid::validate() const {
  if (grid.height < 1 || grid.width < 1) throw ShapeError("FeatureGrid: grid dimensions must be >= 1");
  if (tokens.rows() != grid.cells() || tokens.cols() != dim)
    throw ShapeError("FeatureGrid: token matrix does not match grid shape");
}

DepthwiseKernel DepthwiseKernel::delta(int channels, int size) {
  DepthwiseKernel k;
  k.size = size;
  k.weights = Mat(channels, size * size);
  const int center = (size / 2) * size + size / 2;
  for (int c = 0; c < channels; ++c) k.weights(c, center) = 1.0;
  return k;
}

DepthwiseKernel DepthwiseKernel::zero(int channels, int size) {
  DepthwiseKernel k;
  k.size = size;
  k.weights = Mat(channels, size * size);
  return k;
}

static void check_kernel(const FeatureGrid& grid, const DepthwiseKernel& kernel) {
  if (kernel.size % 2 == 0 || kernel.size < 1) throw ConfigError("depthwise_conv2d: kernel size must be odd");
  if (kernel.weights.rows() != grid.dim) throw ShapeError("depthwise_conv2d: kernel channel count mismatch");
  if (kernel.weights.cols() != kernel.size * kernel.size)
    throw ShapeError("depthwise_conv2d: kernel weight length mismatch");
}

FeatureGrid depthwise_conv2d(const FeatureGrid& grid, const DepthwiseKernel& kernel) {
  grid.validate();
  check_kernel(grid, kernel);
  const int h = grid.grid.height, w = grid.grid.width, d = grid.dim;
  const int k = kernel.size, half = k / 2;

  FeatureGrid out(grid.grid, d);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double* orow = out.tokens.row_ptr(y * w + x);
      for (int dy = -half; dy <= half; ++dy) {
        const int sy = y + dy;
        if (sy < 0 || sy >= h) continue;
        for (int dx = -half; dx <= half; ++dx) {
          const int sx = x + dx;
          if (sx < 0 || sx >= w) continue;
          const int tap = (dy + half) * k + (dx + half);
          const double* irow = grid.tokens.row_ptr(sy * w + sx);
          for (int c = 0; c < d; ++c) orow[c] += kernel.weights(c, tap) * irow[c];
        }
      }
    }
  }
  return out;
}

FeatureGrid depthwise_conv2d_input_grad(const FeatureGrid& upstream, const DepthwiseKernel& kernel) {
  upstream.validate();
  check_kernel(upstream, kernel);
  const int h = upstream.grid.height, w = upstream.grid.width, d = upstream.dim;
  const int k = kernel.size, half = k / 2;

  // out(y,x) = sum_{dy,dx} w(dy,dx) * in(y+dy, x+dx)  =>
  // din(y,x) = sum_{dy,dx} w(dy,dx) * g(y-dy, x-dx)
  FeatureGrid din(upstream.grid, d);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double* drow = din.tokens.row_ptr(y * w + x);
      for (int dy = -half; dy <= half; ++dy) {
        const int gy = y - dy;
        if (gy < 0 || gy >= h) continue;
        for (int dx = -half; dx <= half; ++dx) {
          const int gx = x - dx;
          if (gx < 0 || gx >= w) continue;
          const int tap = (dy + half) * k + (dx + half);
          const double* grow = upstream.tokens.row_ptr(gy * w + gx);
          for (int c = 0; c < d; ++c) drow[c] += kernel.weights(c, tap) * grow[c];
        }
      }
    }
  }
  return din;
}

Mat depthwise_conv2d_kernel_grad(const FeatureGrid& upstream, const FeatureGrid& input, int kernel_size) {
  upstream.validate();
  input.validate();
  if (!(upstream.grid == input.grid) || upstream.dim != input.dim)
    throw ShapeError("depthwise_conv2d_kernel_grad: grid mismatch");
  if (kernel_size % 2 == 0 || kernel_size < 1)
    throw ConfigError("depthwise_conv2d_kernel_grad: kernel size must be odd");

  const int h = input.grid.height, w = input.grid.width, d = input.dim;
  const int k = kernel_size, half = k / 2;

  Mat dw(d, k * k);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double* grow = upstream.tokens.row_ptr(y * w + x);
      for (int dy = -half; dy <= half; ++dy) {
        const int sy = y + dy;
        if (sy < 0 || sy >= h) continue;
        for (int dx = -half; dx <= half; ++dx) {
          const int sx = x + dx;
          if (sx < 0 || sx >= w) continue;
          const int tap = (dy + half) * k + (dx + half);
          const double* irow = input.tokens.row_ptr(sy * w + sx);
          for (int c = 0; c < d; ++c) dw(c, tap) += grow[c] * irow[c];
        }
      }
    }
  }
  return dw;
}

}  // namespace flam
