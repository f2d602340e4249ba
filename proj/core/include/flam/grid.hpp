#pragma once

#include "flam/mat.hpp"

namespace flam {

struct GridShape {
  int height = 0;
  int width = 0;
  int cells() const { return height * width; }
  bool operator==(const GridShape&) const = default;
};

// H x W grid of d-dimensional descriptors. Tokens are stored row-major:
// token index = y*width + x, one token per matrix row.
struct FeatureGrid {
  GridShape grid;
  int dim = 0;
  Mat tokens;  // (height*width) x dim

  FeatureGrid() = default;
  FeatureGrid(GridShape g, int d);
  FeatureGrid(GridShape g, Mat t);

  int index(int x, int y) const { return y * grid.width + x; }
  double& at(int x, int y, int c) { return tokens(index(x, y), c); }
  double at(int x, int y, int c) const { return tokens(index(x, y), c); }

  void validate() const;  // throws ShapeError if tokens disagree with grid/dim
};

// Per-channel k x k weights for depth-wise convolution; row c of `weights`
// holds channel c's kernel flattened row-major (k*k values).
struct DepthwiseKernel {
  int size = 3;
  Mat weights;  // channels x size*size

  static DepthwiseKernel delta(int channels, int size = 3);
  static DepthwiseKernel zero(int channels, int size = 3);
  int channels() const { return weights.rows(); }
};

// Depth-wise 2-D convolution, zero padding, stride 1, odd kernels only.
FeatureGrid depthwise_conv2d(const FeatureGrid& grid, const DepthwiseKernel& kernel);

// Adjoints for the gradient path: d(conv)/d(input) applied to an upstream
// grid, and d(conv)/d(kernel) accumulated against the forward input.
FeatureGrid depthwise_conv2d_input_grad(const FeatureGrid& upstream, const DepthwiseKernel& kernel);
Mat depthwise_conv2d_kernel_grad(const FeatureGrid& upstream, const FeatureGrid& input, int kernel_size);

}  // namespace flam
