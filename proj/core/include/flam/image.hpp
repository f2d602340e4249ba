#pragma once

#include <string>
#include <vector>

namespace flam {

// Grayscale or RGB raster with values in [0, 1]. Loaders pad height and
// width up to multiples of 8 (reflected borders); orig_* keep the
// pre-padding extent.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<double> pixels;  // row-major (y, x, c)
  int orig_height = 0;
  int orig_width = 0;

  double& at(int x, int y, int c = 0) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double at(int x, int y, int c = 0) const { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
};

// Reflect-pads to the next multiples of 8. No-op when already aligned.
Image pad_to_multiple_of_8(const Image& img);

// Dispatches on file magic: P5 (PGM), P6 (PPM) or FLATI1 raw float64.
Image load_image(const std::string& path);

void save_pgm(const std::string& path, const Image& img);
void save_f64(const std::string& path, const Image& img);  // grayscale only

}  // namespace flam
