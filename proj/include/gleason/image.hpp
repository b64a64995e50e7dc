#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>

#include "gleason/label_schema.hpp"

namespace gleason {

using Eigen::Index;

/// Per-pixel class indices, rows = image height.
using ClassMask = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// 8-bit RGB raster stored interleaved: a height x (3*width) row-major array.
class RgbImage {
 public:
  using Storage = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  RgbImage() = default;
  RgbImage(Index height, Index width, Rgb fill = {});

  Index height() const { return data_.rows(); }
  Index width() const { return data_.cols() / 3; }
  bool empty() const { return data_.size() == 0; }

  Rgb pixel(Index row, Index col) const {
    return {data_(row, 3 * col), data_(row, 3 * col + 1), data_(row, 3 * col + 2)};
  }
  void set_pixel(Index row, Index col, Rgb c) {
    data_(row, 3 * col) = c.r;
    data_(row, 3 * col + 1) = c.g;
    data_(row, 3 * col + 2) = c.b;
  }
  std::uint8_t& at(Index row, Index col, int channel) { return data_(row, 3 * col + channel); }
  std::uint8_t at(Index row, Index col, int channel) const { return data_(row, 3 * col + channel); }

  Storage& storage() { return data_; }
  const Storage& storage() const { return data_; }

  friend bool operator==(const RgbImage& a, const RgbImage& b) {
    return a.data_.rows() == b.data_.rows() && a.data_.cols() == b.data_.cols() &&
           (a.data_ == b.data_).all();
  }

 private:
  Storage data_;
};

RgbImage mask_to_rgb(const ClassMask& mask, const ClassMap& map = default_class_map());

/// Decodes a color-coded mask; throws UnregisteredColorError with the pixel
/// location on the first color that is not in the palette.
ClassMask rgb_to_mask(const RgbImage& image, const ClassMap& map = default_class_map());

/// Blends class colors over the image (Background pixels keep the image).
RgbImage overlay_mask(const RgbImage& image, const ClassMask& mask, double opacity = 0.5,
                      const ClassMap& map = default_class_map());

RgbImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& image);

}  // namespace gleason
