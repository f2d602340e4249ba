#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "flam/grid.hpp"
#include "flam/image.hpp"
#include "flam/transformer.hpp"

namespace flam {

// One 2-D convolution stage; weights are (out_ch) x (in_ch * k * k) with the
// tap index laid out as (ci * k + ky) * k + kx.
struct ConvStage {
  Mat w;
  int ksize = 3;
  int stride = 1;
  int in_ch = 0;
  int out_ch = 0;
};

// Small strided conv pyramid: a stride-2 stem feeds the 1/2-resolution map,
// two more stride-2 stages and a stride-1 head produce the 1/8 map. The
// fine map merges upsampled coarse context through 1x1 laterals.
struct BackboneWeights {
  ConvStage stem;  // in_ch -> 16, stride 2
  ConvStage s1;    // 16 -> 32, stride 2
  ConvStage s2;    // 32 -> 64, stride 2
  ConvStage s3;    // 64 -> 64, stride 1
  Mat lat_fine;    // 32 x 16 (1x1 on the stem output)
  Mat lat_top;     // 32 x 64 (1x1 on upsampled coarse)
  int in_channels = 1;
};

inline constexpr int kCoarseDim = 64;
inline constexpr int kFineDim = 32;

// Deterministic He-style init: uniform in +/- sqrt(3 / fan_in).
BackboneWeights backbone_init_seeded(uint64_t seed, int in_channels = 1);

// (coarse, fine) feature grids at 1/8 and 1/2 of the (padded) image size.
std::pair<FeatureGrid, FeatureGrid> extract_pyramid(const Image& img, const BackboneWeights& w);

// General zero-padded convolution over a grid; used by the pyramid and handy
// for tests.
FeatureGrid conv2d_grid(const FeatureGrid& in, const ConvStage& stage, bool relu_after);
FeatureGrid upsample_nearest(const FeatureGrid& in, int factor);

// Everything the matching pipeline needs, serialized in one weight file.
struct ModelWeights {
  BackboneWeights backbone;
  StackWeights coarse_xf;
  StackWeights fine_xf;
};

ModelWeights model_init_seeded(uint64_t seed, int in_channels, const TransformerConfig& cfg);

// Round-trips are bit-exact. Section names: backbone.*, coarse_xf.*, fine_xf.*.
void save_model(const std::string& path, const ModelWeights& w);
ModelWeights load_model(const std::string& path);

}  // namespace flam
