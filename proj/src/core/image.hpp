#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fsr {

// One labeled square RGB image. Pixels are kept 8-bit (what PNG ingestion
// produces); consumers read them as values in [0,1] via pixel01.
struct ImageSample {
  int side = 0;
  std::vector<std::uint8_t> pixels;  // side*side*3, interleaved RGB
  int label = 0;                     // 1 = cracked, 0 = uncracked
  std::string source_id;

  double pixel01(std::size_t i) const { return pixels[i] / 255.0; }
};

// Working representation for resizing and augmentation.
struct FloatImage {
  int width = 0, height = 0;
  std::vector<float> rgb;  // interleaved, [0,1]

  float at(int x, int y, int c) const {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  float& at(int x, int y, int c) {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
};

FloatImage to_float(const ImageSample& s);
// Clamps to [0,1] and quantizes back to 8 bits. Requires a square image.
ImageSample to_sample(const FloatImage& img, int label, std::string source_id);

FloatImage resize_bilinear(const FloatImage& img, int out_width, int out_height);

// Decodes a PNG of any color type to 8-bit RGB and resizes to side x side.
ImageSample read_png(const std::filesystem::path& path, int side, int label, std::string source_id);
void write_png(const ImageSample& s, const std::filesystem::path& path);

}  // namespace fsr
