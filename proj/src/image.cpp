#include "gleason/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace gleason {

RgbImage::RgbImage(Index height, Index width, Rgb fill) {
  if (height < 0 || width < 0) throw std::invalid_argument("RgbImage: negative dimension");
  data_.resize(height, 3 * width);
  for (Index c = 0; c < width; ++c) {
    data_.col(3 * c).setConstant(fill.r);
    data_.col(3 * c + 1).setConstant(fill.g);
    data_.col(3 * c + 2).setConstant(fill.b);
  }
}

RgbImage mask_to_rgb(const ClassMask& mask, const ClassMap& map) {
  RgbImage out(mask.rows(), mask.cols());
  for (Index r = 0; r < mask.rows(); ++r)
    for (Index c = 0; c < mask.cols(); ++c)
      out.set_pixel(r, c, map.color_for_grade(map.grade_from_class_index(mask(r, c))));
  return out;
}

ClassMask rgb_to_mask(const RgbImage& image, const ClassMap& map) {
  ClassMask mask(image.height(), image.width());
  for (Index r = 0; r < image.height(); ++r)
    for (Index c = 0; c < image.width(); ++c) {
      const Rgb px = image.pixel(r, c);
      const int idx = map.find_color(px);
      if (idx < 0) throw UnregisteredColorError(px, std::make_pair(long(r), long(c)));
      mask(r, c) = static_cast<std::uint8_t>(idx);
    }
  return mask;
}

RgbImage overlay_mask(const RgbImage& image, const ClassMask& mask, double opacity,
                      const ClassMap& map) {
  if (image.height() != mask.rows() || image.width() != mask.cols())
    throw std::invalid_argument("overlay_mask: image and mask sizes differ");
  RgbImage out = image;
  auto blend = [opacity](std::uint8_t a, std::uint8_t b) {
    return static_cast<std::uint8_t>(std::lround((1.0 - opacity) * a + opacity * b));
  };
  for (Index r = 0; r < mask.rows(); ++r)
    for (Index c = 0; c < mask.cols(); ++c) {
      if (mask(r, c) == 0) continue;
      const Rgb col = map.color_for_grade(map.grade_from_class_index(mask(r, c)));
      const Rgb px = image.pixel(r, c);
      out.set_pixel(r, c, {blend(px.r, col.r), blend(px.g, col.g), blend(px.b, col.b)});
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

[[noreturn]] void png_error_fn(png_structp, png_const_charp msg) { throw std::runtime_error(msg); }
void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace

RgbImage read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw std::runtime_error("cannot open image '" + path.string() + "'");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw std::runtime_error("'" + path.string() + "' is not a PNG file");

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
  png_infop info = png_create_info_struct(png);
  RgbImage image;
  try {
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const auto width = png_get_image_width(png, info);
    const auto height = png_get_image_height(png, info);
    const int color_type = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
      png_set_expand_gray_1_2_4_to_8(png);
      png_set_gray_to_rgb(png);
    }
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    if (png_get_rowbytes(png, info) != 3 * width)
      throw std::runtime_error("unsupported PNG layout");

    image = RgbImage(height, width);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 r = 0; r < height; ++r) rows[r] = image.storage().row(r).data();
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  } catch (const std::exception& e) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("failed to read '" + path.string() + "': " + e.what());
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  if (image.empty()) throw std::invalid_argument("write_png: empty image");
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw std::runtime_error("cannot write image '" + path.string() + "'");
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
  png_infop info = png_create_info_struct(png);
  try {
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()),
                 static_cast<png_uint_32>(image.height()), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (Index r = 0; r < image.height(); ++r)
      png_write_row(png, const_cast<png_bytep>(image.storage().row(r).data()));
    png_write_end(png, nullptr);
  } catch (const std::exception& e) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed to write '" + path.string() + "': " + e.what());
  }
  png_destroy_write_struct(&png, &info);
}

}  // namespace gleason
