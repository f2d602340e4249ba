#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "flam/backbone.hpp"
#include "flam/errors.hpp"
#include "flam/rng.hpp"
#include "flam/weights_io.hpp"

using namespace flam;

namespace {

std::filesystem::path tmp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "flam_backbone_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

Image random_image(Rng& rng, int h, int w, int channels = 1) {
  Image img;
  img.height = h;
  img.width = w;
  img.channels = channels;
  img.orig_height = h;
  img.orig_width = w;
  img.pixels.resize(static_cast<std::size_t>(h) * w * channels);
  for (double& v : img.pixels) v = rng.uniform();
  return img;
}

}  // namespace

TEST_CASE("pyramid output shapes for a 64x64 input") {
  Rng rng(1);
  Image img = random_image(rng, 64, 64);
  BackboneWeights w = backbone_init_seeded(3);
  auto [coarse, fine] = extract_pyramid(img, w);
  CHECK(coarse.grid.height == 8);
  CHECK(coarse.grid.width == 8);
  CHECK(coarse.dim == 64);
  CHECK(fine.grid.height == 32);
  CHECK(fine.grid.width == 32);
  CHECK(fine.dim == 32);
  CHECK(coarse.tokens.all_finite());
  CHECK(fine.tokens.all_finite());
}

TEST_CASE("non-multiple-of-8 images are padded before extraction") {
  Rng rng(2);
  Image img = random_image(rng, 50, 45);
  BackboneWeights w = backbone_init_seeded(3);
  auto [coarse, fine] = extract_pyramid(img, w);
  CHECK(coarse.grid.height == 7);  // 56/8
  CHECK(coarse.grid.width == 6);   // 48/8
  CHECK(fine.grid.height == 28);
  CHECK(fine.grid.width == 24);
}

TEST_CASE("constant image gives spatially constant interior coarse features") {
  Image img;
  img.height = img.width = 64;
  img.orig_height = img.orig_width = 64;
  img.channels = 1;
  img.pixels.assign(64 * 64, 0.6);
  BackboneWeights w = backbone_init_seeded(5);
  auto [coarse, fine] = extract_pyramid(img, w);

  // interior cells all equal (borders see zero padding)
  const double* ref = coarse.tokens.row_ptr(coarse.index(3, 3));
  for (int y = 2; y <= 5; ++y)
    for (int x = 2; x <= 5; ++x) {
      const double* row = coarse.tokens.row_ptr(coarse.index(x, y));
      for (int c = 0; c < coarse.dim; ++c) CHECK(std::abs(row[c] - ref[c]) < 1e-10);
    }
}

TEST_CASE("translating the input by 8 pixels shifts interior coarse tokens by one cell") {
  Rng rng(7);
  const int n = 96;
  Image base = random_image(rng, n + 8, n + 8);

  Image a, b;  // a = crop at (0,0), b = crop at (8,8): b's content is a's shifted
  a.height = a.width = n;
  a.orig_height = a.orig_width = n;
  a.channels = 1;
  a.pixels.resize(n * n);
  b = a;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      a.at(x, y) = base.at(x + 8, y + 8);
      b.at(x, y) = base.at(x, y);
    }

  BackboneWeights w = backbone_init_seeded(11);
  auto [ca, fa] = extract_pyramid(a, w);
  auto [cb, fb] = extract_pyramid(b, w);

  // a(x, y) == b(x+8, y+8), so coarse_a(cx, cy) == coarse_b(cx+1, cy+1) away
  // from borders (receptive field ~31 px => keep 3 cells of margin)
  double worst = 0.0;
  for (int cy = 3; cy <= 7; ++cy)
    for (int cx = 3; cx <= 7; ++cx)
      for (int c = 0; c < ca.dim; ++c)
        worst = std::max(worst, std::abs(ca.at(cx, cy, c) - cb.at(cx + 1, cy + 1, c)));
  CHECK(worst < 1e-8);
}

TEST_CASE("seeded backbone init is reproducible, seed-sensitive and bounded") {
  BackboneWeights a = backbone_init_seeded(42);
  BackboneWeights b = backbone_init_seeded(42);
  BackboneWeights c = backbone_init_seeded(43);
  CHECK(max_abs_diff(a.stem.w, b.stem.w) == 0.0);
  CHECK(max_abs_diff(a.s2.w, c.s2.w) > 0.0);

  auto check_bound = [](const ConvStage& st) {
    const double limit = std::sqrt(3.0 / (st.in_ch * st.ksize * st.ksize)) * (1.0 + 1e-12);
    for (double v : st.w.data()) CHECK(std::abs(v) <= limit);
  };
  check_bound(a.stem);
  check_bound(a.s1);
  check_bound(a.s2);
  check_bound(a.s3);
}

TEST_CASE("model weight file round trip is bit-exact") {
  TransformerConfig cfg;
  cfg.num_coarse_blocks = 2;
  cfg.num_fine_blocks = 1;
  ModelWeights w = model_init_seeded(123, 1, cfg);
  auto path = (tmp_dir() / "roundtrip.flatw").string();
  save_model(path, w);
  ModelWeights r = load_model(path);

  CHECK(max_abs_diff(r.backbone.stem.w, w.backbone.stem.w) == 0.0);
  CHECK(max_abs_diff(r.backbone.s3.w, w.backbone.s3.w) == 0.0);
  CHECK(max_abs_diff(r.backbone.lat_top, w.backbone.lat_top) == 0.0);
  REQUIRE(r.coarse_xf.blocks.size() == 2);
  REQUIRE(r.fine_xf.blocks.size() == 1);
  CHECK(max_abs_diff(r.coarse_xf.blocks[1].cross_attn.mlp_w2, w.coarse_xf.blocks[1].cross_attn.mlp_w2) == 0.0);
  CHECK(max_abs_diff(r.fine_xf.blocks[0].self_attn.dw_kernel, w.fine_xf.blocks[0].self_attn.dw_kernel) == 0.0);
  CHECK(r.coarse_xf.blocks[0].self_attn.norm1_scale == w.coarse_xf.blocks[0].self_attn.norm1_scale);

  // identical bytes when saved again
  auto path2 = (tmp_dir() / "roundtrip2.flatw").string();
  save_model(path2, r);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
}

TEST_CASE("corrupted magic is a format error at offset 0") {
  TransformerConfig cfg;
  cfg.num_coarse_blocks = 1;
  ModelWeights w = model_init_seeded(5, 1, cfg);
  auto path = (tmp_dir() / "badmagic.flatw").string();
  save_model(path, w);

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
  }
  try {
    load_model(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset == 0);
  }
}

TEST_CASE("truncated weight file reports a truncation error with offset") {
  TransformerConfig cfg;
  cfg.num_coarse_blocks = 1;
  ModelWeights w = model_init_seeded(6, 1, cfg);
  auto path = (tmp_dir() / "trunc.flatw").string();
  save_model(path, w);

  auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size / 2);
  CHECK_THROWS_AS(load_model(path), FormatError);
}

TEST_CASE("payload length mismatch against declared dims is caught") {
  // hand-build a file whose section declares more data than it carries
  WeightSection s;
  s.name = "backbone.stem.w";
  s.dims = {16, 1, 3, 3};
  s.values.assign(16 * 9, 0.5);
  auto path = (tmp_dir() / "shortpayload.flatw").string();
  save_sections(path, {s});

  // chop 8 bytes off the payload but keep the CRC consistent by rewriting
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  std::string cut = bytes.substr(0, bytes.size() - 4 - 8);  // drop CRC + one value
  const uint32_t crc = crc32_ieee(reinterpret_cast<const uint8_t*>(cut.data()) + 8, cut.size() - 8);
  for (int i = 0; i < 4; ++i) cut.push_back(static_cast<char>((crc >> (8 * i)) & 0xff));
  std::ofstream out(path, std::ios::binary);
  out.write(cut.data(), static_cast<std::streamsize>(cut.size()));
  out.close();

  CHECK_THROWS_AS(load_sections(path), FormatError);
}

TEST_CASE("checksum mismatch is detected") {
  TransformerConfig cfg;
  cfg.num_coarse_blocks = 1;
  ModelWeights w = model_init_seeded(7, 1, cfg);
  auto path = (tmp_dir() / "badcrc.flatw").string();
  save_model(path, w);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(100);
    f.put('\x7f');
  }
  CHECK_THROWS_AS(load_model(path), FormatError);
}

TEST_CASE("deterministic extraction: same seed, same image, same features") {
  Rng rng(9);
  Image img = random_image(rng, 64, 64);
  BackboneWeights w1 = backbone_init_seeded(77);
  BackboneWeights w2 = backbone_init_seeded(77);
  auto [c1, f1] = extract_pyramid(img, w1);
  auto [c2, f2] = extract_pyramid(img, w2);
  CHECK(max_abs_diff(c1.tokens, c2.tokens) == 0.0);
  CHECK(max_abs_diff(f1.tokens, f2.tokens) == 0.0);
}

TEST_CASE("channel mismatch raises a config error") {
  Rng rng(10);
  Image rgb = random_image(rng, 16, 16, 3);
  BackboneWeights gray = backbone_init_seeded(1, 1);
  CHECK_THROWS_AS(extract_pyramid(rgb, gray), ConfigError);
}
