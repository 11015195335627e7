#include "fhgan/image_io.hpp"

#include <png.h>

#include <csetjmp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "fhgan/error.hpp"

namespace fhgan {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// libpng reports errors with longjmp; all C++ objects touched here are
// constructed before setjmp so none is skipped by the jump.
bool decode(std::FILE* file, Image8& image, std::vector<png_bytep>& rows) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    return false;
  }
  png_init_io(png, file);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const auto bit_depth = png_get_bit_depth(png, info);
  const auto color = png_get_color_type(png, info);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);
  image.width = static_cast<int>(png_get_image_width(png, info));
  image.height = static_cast<int>(png_get_image_height(png, info));
  if (png_get_rowbytes(png, info) != static_cast<std::size_t>(image.width) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  image.rgb.resize(static_cast<std::size_t>(image.width) * image.height * 3);
  rows.resize(static_cast<std::size_t>(image.height));
  for (int y = 0; y < image.height; ++y) rows[static_cast<std::size_t>(y)] = &image.at(y, 0, 0);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

bool encode(std::FILE* file, const Image8& image, std::vector<png_bytep>& rows) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    return false;
  }
  png_init_io(png, file);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace

Image8 read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw DataError("cannot open image " + path.string());
  png_byte header[8];
  if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw DataError("not a PNG file: " + path.string());
  }
  Image8 image;
  std::vector<png_bytep> rows;
  if (!decode(file.get(), image, rows)) throw DataError("failed to decode PNG " + path.string());
  return image;
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  if (image.width <= 0 || image.height <= 0) throw DataError("cannot write an empty image to " + path.string());
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw DataError("cannot create image " + path.string());
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
  auto* base = const_cast<std::uint8_t*>(image.rgb.data());
  for (int y = 0; y < image.height; ++y) rows[static_cast<std::size_t>(y)] = base + static_cast<std::size_t>(y) * image.width * 3;
  if (!encode(file.get(), image, rows)) throw DataError("failed to encode PNG " + path.string());
}

Tensor to_model_range(const Image8& image) {
  Tensor t({3, image.height, image.width});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) {
        t[(static_cast<std::int64_t>(c) * image.height + y) * image.width + x] = image.at(y, x, c) / 127.5 - 1.0;
      }
  return t;
}

Image8 to_image8(const Tensor& chw) {
  if (chw.rank() != 3 || chw.dim(0) != 3) throw ShapeError("to_image8 expects [3,H,W], got " + to_string(chw.shape()));
  Image8 image(static_cast<int>(chw.dim(2)), static_cast<int>(chw.dim(1)));
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) {
        const double v = (chw[(static_cast<std::int64_t>(c) * image.height + y) * image.width + x] + 1.0) * 127.5;
        image.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
      }
  return image;
}

}  // namespace fhgan
