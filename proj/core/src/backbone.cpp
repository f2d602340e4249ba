#include "flam/backbone.hpp"

#include <cmath>
#include <map>

#include "flam/errors.hpp"
#include "flam/rng.hpp"
#include "flam/weights_io.hpp"

namespace flam {

FeatureGrid conv2d_grid(const FeatureGrid& in, const ConvStage& stage, bool relu_after) {
  in.validate();
  if (in.dim != stage.in_ch) throw ConfigError("conv2d_grid: input channel mismatch");
  if (stage.w.rows() != stage.out_ch || stage.w.cols() != stage.in_ch * stage.ksize * stage.ksize)
    throw ShapeError("conv2d_grid: weight shape mismatch");

  const int h = in.grid.height, w = in.grid.width;
  const int k = stage.ksize, half = k / 2, s = stage.stride;
  const int oh = (h + 2 * half - k) / s + 1;
  const int ow = (w + 2 * half - k) / s + 1;

  FeatureGrid out({oh, ow}, stage.out_ch);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      double* orow = out.tokens.row_ptr(oy * ow + ox);
      const int base_y = oy * s - half, base_x = ox * s - half;
      for (int ky = 0; ky < k; ++ky) {
        const int sy = base_y + ky;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int sx = base_x + kx;
          if (sx < 0 || sx >= w) continue;
          const double* irow = in.tokens.row_ptr(sy * w + sx);
          for (int ci = 0; ci < stage.in_ch; ++ci) {
            const double val = irow[ci];
            if (val == 0.0) continue;
            const int tap = (ci * k + ky) * k + kx;
            for (int co = 0; co < stage.out_ch; ++co) orow[co] += stage.w(co, tap) * val;
          }
        }
      }
      if (relu_after)
        for (int co = 0; co < stage.out_ch; ++co)
          if (orow[co] < 0.0) orow[co] = 0.0;
    }
  }
  return out;
}

FeatureGrid upsample_nearest(const FeatureGrid& in, int factor) {
  in.validate();
  FeatureGrid out({in.grid.height * factor, in.grid.width * factor}, in.dim);
  for (int y = 0; y < out.grid.height; ++y)
    for (int x = 0; x < out.grid.width; ++x) {
      const double* src = in.tokens.row_ptr((y / factor) * in.grid.width + x / factor);
      double* dst = out.tokens.row_ptr(y * out.grid.width + x);
      for (int c = 0; c < in.dim; ++c) dst[c] = src[c];
    }
  return out;
}

static ConvStage init_stage(Rng& rng, int in_ch, int out_ch, int ksize, int stride) {
  ConvStage s;
  s.in_ch = in_ch;
  s.out_ch = out_ch;
  s.ksize = ksize;
  s.stride = stride;
  const double limit = std::sqrt(3.0 / (in_ch * ksize * ksize));
  s.w = Mat(out_ch, in_ch * ksize * ksize);
  for (double& v : s.w.data()) v = rng.uniform(-limit, limit);
  return s;
}

BackboneWeights backbone_init_seeded(uint64_t seed, int in_channels) {
  if (in_channels != 1 && in_channels != 3) throw ConfigError("backbone: images must have 1 or 3 channels");
  Rng rng(seed);
  BackboneWeights w;
  w.in_channels = in_channels;
  w.stem = init_stage(rng, in_channels, 16, 3, 2);
  w.s1 = init_stage(rng, 16, 32, 3, 2);
  w.s2 = init_stage(rng, 32, 64, 3, 2);
  w.s3 = init_stage(rng, 64, kCoarseDim, 3, 1);
  const double lim_fine = std::sqrt(3.0 / 16.0), lim_top = std::sqrt(3.0 / 64.0);
  w.lat_fine = Mat(kFineDim, 16);
  for (double& v : w.lat_fine.data()) v = rng.uniform(-lim_fine, lim_fine);
  w.lat_top = Mat(kFineDim, 64);
  for (double& v : w.lat_top.data()) v = rng.uniform(-lim_top, lim_top);
  return w;
}

std::pair<FeatureGrid, FeatureGrid> extract_pyramid(const Image& img_in, const BackboneWeights& w) {
  const Image img = pad_to_multiple_of_8(img_in);
  if (img.channels != w.in_channels) throw ConfigError("extract_pyramid: image channel count mismatch");

  FeatureGrid pixels({img.height, img.width}, img.channels);
  pixels.tokens = Mat(img.height * img.width, img.channels, std::vector<double>(img.pixels));

  FeatureGrid f2 = conv2d_grid(pixels, w.stem, true);  // 1/2
  FeatureGrid f4 = conv2d_grid(f2, w.s1, true);        // 1/4
  FeatureGrid f8 = conv2d_grid(f4, w.s2, true);        // 1/8
  ConvStage head = w.s3;
  FeatureGrid coarse = conv2d_grid(f8, head, false);   // 1/8, 64 ch

  // FPN-style top-down merge onto the 1/2 map
  FeatureGrid top = upsample_nearest(coarse, 4);
  Mat fine_tokens = matmul_nt(f2.tokens, w.lat_fine);  // (H/2*W/2) x 32
  Mat top_tokens = matmul_nt(top.tokens, w.lat_top);
  FeatureGrid fine(f2.grid, add(fine_tokens, top_tokens));
  return {coarse, fine};
}

ModelWeights model_init_seeded(uint64_t seed, int in_channels, const TransformerConfig& cfg) {
  ModelWeights w;
  w.backbone = backbone_init_seeded(seed, in_channels);
  w.coarse_xf = init_stack_weights(cfg.num_coarse_blocks, cfg.coarse_dim, seed + 0x100001);
  w.fine_xf = init_stack_weights(cfg.num_fine_blocks, cfg.fine_dim, seed + 0x200003);
  return w;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

WeightSection mat_section(const std::string& name, const Mat& m, std::vector<uint32_t> dims) {
  WeightSection s;
  s.name = name;
  s.dims = std::move(dims);
  s.values = m.data();
  if (s.count() != m.size()) throw ShapeError("mat_section: dims disagree with matrix: " + name);
  return s;
}

WeightSection vec_section(const std::string& name, const std::vector<double>& v) {
  WeightSection s;
  s.name = name;
  s.dims = {static_cast<uint32_t>(v.size())};
  s.values = v;
  return s;
}

void pack_stage(std::vector<WeightSection>& out, const std::string& name, const ConvStage& st) {
  out.push_back(mat_section(name, st.w,
                            {static_cast<uint32_t>(st.out_ch), static_cast<uint32_t>(st.in_ch),
                             static_cast<uint32_t>(st.ksize), static_cast<uint32_t>(st.ksize)}));
}

void pack_layer(std::vector<WeightSection>& out, const std::string& prefix, const EncoderLayerParams& p) {
  const uint32_t d = static_cast<uint32_t>(p.w_q.rows());
  out.push_back(mat_section(prefix + ".w_q", p.w_q, {d, d}));
  out.push_back(mat_section(prefix + ".w_k", p.w_k, {d, d}));
  out.push_back(mat_section(prefix + ".w_v", p.w_v, {d, d}));
  out.push_back(mat_section(prefix + ".w_o", p.w_o, {d, d}));
  out.push_back(mat_section(prefix + ".mlp_w1", p.mlp_w1, {d, 2 * d}));
  out.push_back(mat_section(prefix + ".mlp_w2", p.mlp_w2, {2 * d, d}));
  out.push_back(vec_section(prefix + ".mlp_b1", p.mlp_b1));
  out.push_back(vec_section(prefix + ".mlp_b2", p.mlp_b2));
  out.push_back(vec_section(prefix + ".norm1_scale", p.norm1_scale));
  out.push_back(vec_section(prefix + ".norm1_offset", p.norm1_offset));
  out.push_back(vec_section(prefix + ".norm2_scale", p.norm2_scale));
  out.push_back(vec_section(prefix + ".norm2_offset", p.norm2_offset));
  out.push_back(mat_section(prefix + ".dw_kernel", p.dw_kernel, {d, 9}));
}

void pack_stack(std::vector<WeightSection>& out, const std::string& prefix, const StackWeights& w) {
  for (std::size_t b = 0; b < w.blocks.size(); ++b) {
    pack_layer(out, prefix + ".b" + std::to_string(b) + ".self", w.blocks[b].self_attn);
    pack_layer(out, prefix + ".b" + std::to_string(b) + ".cross", w.blocks[b].cross_attn);
  }
}

struct SectionMap {
  std::map<std::string, WeightSection> by_name;
  const std::string& path;

  const WeightSection& get(const std::string& name) const {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError(path + ": missing weight section " + name, 0);
    return it->second;
  }
  Mat mat(const std::string& name, int rows, int cols) const {
    const WeightSection& s = get(name);
    if (s.count() != static_cast<std::size_t>(rows) * cols)
      throw FormatError(path + ": section " + name + " has wrong element count", 0);
    return Mat(rows, cols, s.values);
  }
  std::vector<double> vec(const std::string& name, int n) const {
    const WeightSection& s = get(name);
    if (s.count() != static_cast<std::size_t>(n))
      throw FormatError(path + ": section " + name + " has wrong element count", 0);
    return s.values;
  }
  bool has(const std::string& name) const { return by_name.count(name) > 0; }
};

ConvStage unpack_stage(const SectionMap& map, const std::string& name, int stride) {
  const WeightSection& s = map.get(name);
  if (s.dims.size() != 4 || s.dims[2] != s.dims[3])
    throw FormatError(map.path + ": section " + name + " must be rank-4 conv weights", 0);
  ConvStage st;
  st.out_ch = static_cast<int>(s.dims[0]);
  st.in_ch = static_cast<int>(s.dims[1]);
  st.ksize = static_cast<int>(s.dims[2]);
  st.stride = stride;
  st.w = Mat(st.out_ch, st.in_ch * st.ksize * st.ksize, s.values);
  return st;
}

EncoderLayerParams unpack_layer(const SectionMap& map, const std::string& prefix) {
  const WeightSection& wq = map.get(prefix + ".w_q");
  if (wq.dims.size() != 2 || wq.dims[0] != wq.dims[1])
    throw FormatError(map.path + ": section " + prefix + ".w_q must be square", 0);
  const int d = static_cast<int>(wq.dims[0]);

  EncoderLayerParams p;
  p.w_q = map.mat(prefix + ".w_q", d, d);
  p.w_k = map.mat(prefix + ".w_k", d, d);
  p.w_v = map.mat(prefix + ".w_v", d, d);
  p.w_o = map.mat(prefix + ".w_o", d, d);
  p.mlp_w1 = map.mat(prefix + ".mlp_w1", d, 2 * d);
  p.mlp_w2 = map.mat(prefix + ".mlp_w2", 2 * d, d);
  p.mlp_b1 = map.vec(prefix + ".mlp_b1", 2 * d);
  p.mlp_b2 = map.vec(prefix + ".mlp_b2", d);
  p.norm1_scale = map.vec(prefix + ".norm1_scale", d);
  p.norm1_offset = map.vec(prefix + ".norm1_offset", d);
  p.norm2_scale = map.vec(prefix + ".norm2_scale", d);
  p.norm2_offset = map.vec(prefix + ".norm2_offset", d);
  p.dw_kernel = map.mat(prefix + ".dw_kernel", d, 9);
  return p;
}

StackWeights unpack_stack(const SectionMap& map, const std::string& prefix) {
  StackWeights w;
  for (int b = 0;; ++b) {
    const std::string base = prefix + ".b" + std::to_string(b);
    if (!map.has(base + ".self.w_q")) break;
    BlockParams bp;
    bp.self_attn = unpack_layer(map, base + ".self");
    bp.cross_attn = unpack_layer(map, base + ".cross");
    w.blocks.push_back(std::move(bp));
  }
  return w;
}

}  // namespace

void save_model(const std::string& path, const ModelWeights& w) {
  std::vector<WeightSection> sections;
  pack_stage(sections, "backbone.stem.w", w.backbone.stem);
  pack_stage(sections, "backbone.s1.w", w.backbone.s1);
  pack_stage(sections, "backbone.s2.w", w.backbone.s2);
  pack_stage(sections, "backbone.s3.w", w.backbone.s3);
  sections.push_back(mat_section("backbone.lat_fine.w", w.backbone.lat_fine, {kFineDim, 16, 1, 1}));
  sections.push_back(mat_section("backbone.lat_top.w", w.backbone.lat_top, {kFineDim, 64, 1, 1}));
  pack_stack(sections, "coarse_xf", w.coarse_xf);
  pack_stack(sections, "fine_xf", w.fine_xf);
  save_sections(path, sections);
}

ModelWeights load_model(const std::string& path) {
  std::vector<WeightSection> sections = load_sections(path);
  SectionMap map{{}, path};
  for (WeightSection& s : sections) {
    if (!map.by_name.emplace(s.name, std::move(s)).second)
      throw FormatError(path + ": duplicate weight section", 0);
  }

  ModelWeights w;
  w.backbone.stem = unpack_stage(map, "backbone.stem.w", 2);
  w.backbone.s1 = unpack_stage(map, "backbone.s1.w", 2);
  w.backbone.s2 = unpack_stage(map, "backbone.s2.w", 2);
  w.backbone.s3 = unpack_stage(map, "backbone.s3.w", 1);
  w.backbone.in_channels = w.backbone.stem.in_ch;
  w.backbone.lat_fine = map.mat("backbone.lat_fine.w", kFineDim, 16);
  w.backbone.lat_top = map.mat("backbone.lat_top.w", kFineDim, 64);
  w.coarse_xf = unpack_stack(map, "coarse_xf");
  w.fine_xf = unpack_stack(map, "fine_xf");
  if (w.coarse_xf.blocks.empty() || w.fine_xf.blocks.empty())
    throw FormatError(path + ": weight file lacks transformer sections", 0);
  return w;
}

}  // namespace flam
