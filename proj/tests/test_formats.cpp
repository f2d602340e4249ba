#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "flam/errors.hpp"
#include "flam/image.hpp"
#include "flam/rng.hpp"
#include "flam/weights_io.hpp"

using namespace flam;

namespace {

std::filesystem::path tmp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "flam_format_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("crc32 known vector") {
  // IEEE CRC-32 of "123456789"
  const char* s = "123456789";
  CHECK(crc32_ieee(reinterpret_cast<const uint8_t*>(s), 9) == 0xcbf43926u);
}

TEST_CASE("pgm round trip preserves 8-bit quantized pixels") {
  Rng rng(1);
  Image img;
  img.height = img.width = 16;
  img.orig_height = img.orig_width = 16;
  img.channels = 1;
  img.pixels.resize(256);
  for (double& v : img.pixels) v = rng.uniform();

  auto path = (tmp_dir() / "t.pgm").string();
  save_pgm(path, img);
  Image back = load_image(path);
  CHECK(back.height == 16);
  CHECK(back.width == 16);
  for (int i = 0; i < 256; ++i) {
    double q = std::round(img.pixels[i] * 255.0) / 255.0;
    CHECK(std::abs(back.pixels[i] - q) < 1e-12);
  }
}

TEST_CASE("raw f64 image round trip is exact") {
  Rng rng(2);
  Image img;
  img.height = 24;
  img.width = 16;
  img.orig_height = 24;
  img.orig_width = 16;
  img.channels = 1;
  img.pixels.resize(24 * 16);
  for (double& v : img.pixels) v = rng.uniform();

  auto path = (tmp_dir() / "t.f64").string();
  save_f64(path, img);
  Image back = load_image(path);
  CHECK(back.pixels == img.pixels);
}

TEST_CASE("ppm loads as 3-channel image") {
  auto path = (tmp_dir() / "t.ppm").string();
  {
    std::ofstream out(path, std::ios::binary);
    out << "P6\n# a comment\n8 8\n255\n";
    for (int i = 0; i < 8 * 8 * 3; ++i) out.put(static_cast<char>(i & 0xff));
  }
  Image img = load_image(path);
  CHECK(img.channels == 3);
  CHECK(img.height == 8);
  CHECK(img.width == 8);
}

TEST_CASE("image loading errors carry paths and offsets") {
  CHECK_THROWS_AS(load_image((tmp_dir() / "missing.pgm").string()), IoError);

  auto bad = (tmp_dir() / "bad.pgm").string();
  {
    std::ofstream out(bad, std::ios::binary);
    out << "QZ nonsense";
  }
  CHECK_THROWS_AS(load_image(bad), FormatError);

  auto trunc = (tmp_dir() / "trunc.pgm").string();
  {
    std::ofstream out(trunc, std::ios::binary);
    out << "P5\n16 16\n255\n";
    out.put('\x10');  // only one of 256 pixels
  }
  CHECK_THROWS_AS(load_image(trunc), FormatError);
}

TEST_CASE("odd-sized images are reflect-padded to multiples of 8") {
  Rng rng(3);
  Image img;
  img.height = 10;
  img.width = 13;
  img.orig_height = 10;
  img.orig_width = 13;
  img.channels = 1;
  img.pixels.resize(10 * 13);
  for (double& v : img.pixels) v = rng.uniform();

  Image padded = pad_to_multiple_of_8(img);
  CHECK(padded.height == 16);
  CHECK(padded.width == 16);
  CHECK(padded.orig_height == 10);
  CHECK(padded.orig_width == 13);
  // reflected column: x=13 mirrors x=12
  CHECK(padded.at(13, 4) == img.at(12, 4));
  CHECK(padded.at(15, 0) == img.at(10, 0));
  // original region untouched
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 13; ++x) CHECK(padded.at(x, y) == img.at(x, y));
}

TEST_CASE("weight sections preserve order, names and dims") {
  std::vector<WeightSection> sections;
  WeightSection a;
  a.name = "alpha";
  a.dims = {2, 3};
  a.values = {1, 2, 3, 4, 5, 6};
  WeightSection b;
  b.name = "beta.gamma";
  b.dims = {4};
  b.values = {0.25, -0.5, 1e-300, 3.25};
  sections = {a, b};

  auto path = (tmp_dir() / "sections.flatw").string();
  save_sections(path, sections);
  auto back = load_sections(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].name == "alpha");
  CHECK(back[0].dims == std::vector<uint32_t>{2, 3});
  CHECK(back[0].values == a.values);
  CHECK(back[1].name == "beta.gamma");
  CHECK(back[1].values == b.values);
}
