#include "core/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace fsr {

FloatImage to_float(const ImageSample& s) {
  FloatImage img;
  img.width = img.height = s.side;
  img.rgb.resize(s.pixels.size());
  for (std::size_t i = 0; i < s.pixels.size(); ++i) img.rgb[i] = s.pixels[i] / 255.0f;
  return img;
}

ImageSample to_sample(const FloatImage& img, int label, std::string source_id) {
  if (img.width != img.height)
    throw std::invalid_argument("to_sample: image must be square, got " + std::to_string(img.width) +
                                "x" + std::to_string(img.height));
  ImageSample s;
  s.side = img.width;
  s.label = label;
  s.source_id = std::move(source_id);
  s.pixels.resize(img.rgb.size());
  for (std::size_t i = 0; i < img.rgb.size(); ++i) {
    const float v = std::clamp(img.rgb[i], 0.0f, 1.0f);
    s.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  return s;
}

FloatImage resize_bilinear(const FloatImage& img, int out_width, int out_height) {
  if (out_width == img.width && out_height == img.height) return img;
  FloatImage out;
  out.width = out_width;
  out.height = out_height;
  out.rgb.resize(static_cast<std::size_t>(out_width) * out_height * 3);
  const float sx = static_cast<float>(img.width) / out_width;
  const float sy = static_cast<float>(img.height) / out_height;
  for (int y = 0; y < out_height; ++y) {
    const float fy = std::clamp((y + 0.5f) * sy - 0.5f, 0.0f, static_cast<float>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const float wy = fy - y0;
    for (int x = 0; x < out_width; ++x) {
      const float fx = std::clamp((x + 0.5f) * sx - 0.5f, 0.0f, static_cast<float>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const float wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const float top = img.at(x0, y0, c) * (1.0f - wx) + img.at(x1, y0, c) * wx;
        const float bot = img.at(x0, y1, c) * (1.0f - wx) + img.at(x1, y1, c) * wx;
        out.at(x, y, c) = top * (1.0f - wy) + bot * wy;
      }
    }
  }
  return out;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

ImageSample read_png(const std::filesystem::path& path, int side, int label, std::string source_id) {
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw std::runtime_error("png: cannot open " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png: out of memory");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png: out of memory");
  }

  std::vector<std::uint8_t> data;
  std::vector<png_bytep> rows;
  int width = 0, height = 0;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png: corrupt file " + path.string());
  }

  png_init_io(png, file.get());
  png_read_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS))
    png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const std::size_t rowbytes = png_get_rowbytes(png, info);
  if (rowbytes != static_cast<std::size_t>(width) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("png: unexpected row layout in " + path.string());
  }
  data.resize(static_cast<std::size_t>(height) * rowbytes);
  rows.resize(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = data.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  FloatImage img;
  img.width = width;
  img.height = height;
  img.rgb.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) img.rgb[i] = data[i] / 255.0f;
  return to_sample(resize_bilinear(img, side, side), label, std::move(source_id));
}

void write_png(const ImageSample& s, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw std::runtime_error("png: cannot write " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png: out of memory");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png: out of memory");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png: write failed for " + path.string());
  }

  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(s.side), static_cast<png_uint_32>(s.side), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<std::size_t>(s.side));
  for (int y = 0; y < s.side; ++y)
    rows[static_cast<std::size_t>(y)] =
        const_cast<png_bytep>(s.pixels.data() + static_cast<std::size_t>(y) * s.side * 3);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace fsr
