#include "flam/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "flam/errors.hpp"

namespace flam {

namespace {

constexpr char kRawMagic[8] = {'F', 'L', 'A', 'T', 'I', '1', '\0', '\0'};

int reflect_index(int i, int n) {
  if (i < n) return i;
  return 2 * n - 1 - i;  // pads are < 8 and n >= 1, so one reflection suffices
}

// Reads a PNM token, skipping whitespace and '#' comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (!std::isspace(c)) {
      tok.push_back(static_cast<char>(c));
      break;
    }
  }
  while ((c = in.get()) != EOF && !std::isspace(c)) tok.push_back(static_cast<char>(c));
  return tok;
}

Image load_pnm(std::ifstream& in, const std::string& path, bool color) {
  Image img;
  img.channels = color ? 3 : 1;
  try {
    img.width = std::stoi(pnm_token(in));
    img.height = std::stoi(pnm_token(in));
  } catch (const std::exception&) {
    throw FormatError(path + ": malformed PNM header", static_cast<std::size_t>(in.tellg()));
  }
  int maxval = 0;
  try {
    maxval = std::stoi(pnm_token(in));
  } catch (const std::exception&) {
    throw FormatError(path + ": malformed PNM maxval", static_cast<std::size_t>(in.tellg()));
  }
  if (img.width < 1 || img.height < 1) throw FormatError(path + ": non-positive PNM dimensions", 2);
  if (maxval < 1 || maxval > 65535) throw FormatError(path + ": unsupported PNM maxval", 2);

  const int bytes_per = maxval > 255 ? 2 : 1;
  const std::size_t count = static_cast<std::size_t>(img.width) * img.height * img.channels;
  std::vector<unsigned char> raw(count * bytes_per);
  const std::size_t data_off = static_cast<std::size_t>(in.tellg());
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw FormatError(path + ": truncated PNM payload", data_off + static_cast<std::size_t>(in.gcount()));

  img.pixels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    unsigned v = bytes_per == 1 ? raw[i] : (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1];
    img.pixels[i] = static_cast<double>(v) / maxval;
  }
  img.orig_height = img.height;
  img.orig_width = img.width;
  return img;
}

Image load_raw_f64(std::ifstream& in, const std::string& path) {
  char magic[8];
  in.seekg(0);
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kRawMagic, 8) != 0)
    throw FormatError(path + ": bad raw-image magic", 0);
  uint32_t h = 0, w = 0;
  in.read(reinterpret_cast<char*>(&h), 4);
  in.read(reinterpret_cast<char*>(&w), 4);
  if (!in) throw FormatError(path + ": truncated raw-image header", 8);
  if (h < 1 || w < 1 || h > 1u << 20 || w > 1u << 20)
    throw FormatError(path + ": implausible raw-image dimensions", 8);

  Image img;
  img.height = static_cast<int>(h);
  img.width = static_cast<int>(w);
  img.channels = 1;
  img.pixels.resize(static_cast<std::size_t>(h) * w);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size() * 8));
  if (static_cast<std::size_t>(in.gcount()) != img.pixels.size() * 8)
    throw FormatError(path + ": truncated raw-image payload", 16 + static_cast<std::size_t>(in.gcount()));
  for (double v : img.pixels)
    if (!std::isfinite(v)) throw FormatError(path + ": non-finite pixel value", 16);
  img.orig_height = img.height;
  img.orig_width = img.width;
  return img;
}

}  // namespace

Image pad_to_multiple_of_8(const Image& img) {
  const int ph = (img.height + 7) / 8 * 8;
  const int pw = (img.width + 7) / 8 * 8;
  if (ph == img.height && pw == img.width) return img;

  Image out;
  out.height = ph;
  out.width = pw;
  out.channels = img.channels;
  out.orig_height = img.orig_height ? img.orig_height : img.height;
  out.orig_width = img.orig_width ? img.orig_width : img.width;
  out.pixels.resize(static_cast<std::size_t>(ph) * pw * img.channels);
  for (int y = 0; y < ph; ++y) {
    const int sy = reflect_index(y, img.height);
    for (int x = 0; x < pw; ++x) {
      const int sx = reflect_index(x, img.width);
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  }
  return out;
}

Image load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image file: " + path);

  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (!in) throw FormatError(path + ": file too short for a magic", 0);

  Image img;
  if (m0 == 'P' && m1 == '5') {
    img = load_pnm(in, path, false);
  } else if (m0 == 'P' && m1 == '6') {
    img = load_pnm(in, path, true);
  } else if (m0 == 'F' && m1 == 'L') {
    img = load_raw_f64(in, path);
  } else {
    throw FormatError(path + ": unrecognized image magic", 0);
  }
  return pad_to_multiple_of_8(img);
}

void save_pgm(const std::string& path, const Image& img) {
  if (img.channels != 1) throw ConfigError("save_pgm: grayscale images only");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image file: " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double v = std::clamp(img.at(x, y), 0.0, 1.0);
      out.put(static_cast<char>(std::lround(v * 255.0)));
    }
  if (!out) throw IoError("failed writing image file: " + path);
}

void save_f64(const std::string& path, const Image& img) {
  if (img.channels != 1) throw ConfigError("save_f64: grayscale images only");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image file: " + path);
  out.write(kRawMagic, 8);
  const uint32_t h = static_cast<uint32_t>(img.height), w = static_cast<uint32_t>(img.width);
  out.write(reinterpret_cast<const char*>(&h), 4);
  out.write(reinterpret_cast<const char*>(&w), 4);
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size() * 8));
  if (!out) throw IoError("failed writing image file: " + path);
}

}  // namespace flam
