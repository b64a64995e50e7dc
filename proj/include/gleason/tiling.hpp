#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "gleason/image.hpp"

namespace gleason {

inline constexpr Index kDefaultPatchSize = 350;
inline constexpr Rgb kSlideBackground{255, 255, 255};

/// Geometry of a non-overlapping patch grid over a scan. The grid is padded
/// on the right and bottom up to a whole number of patches.
struct GridPlan {
  Index scan_width = 0;
  Index scan_height = 0;
  Index patch_size = kDefaultPatchSize;
  Index rows = 0;
  Index cols = 0;
  Index pad_right = 0;
  Index pad_bottom = 0;

  Index patch_count() const { return rows * cols; }
  friend bool operator==(const GridPlan&, const GridPlan&) = default;
};

void to_json(nlohmann::json& j, const GridPlan& plan);
void from_json(const nlohmann::json& j, GridPlan& plan);

GridPlan plan_grid(Index scan_width, Index scan_height, Index patch_size = kDefaultPatchSize);

struct PatchRecord {
  std::string scan_id;
  Index row = 0;
  Index col = 0;
  RgbImage pixels;
};

/// `{scan_id}_r{row}_c{col}.png`
std::string patch_file_name(const std::string& scan_id, Index row, Index col);

/// Row-major patches; padding is filled with `fill` (white slide background
/// by default). Patches lying entirely in the padding are still emitted.
std::vector<PatchRecord> extract_patches(const RgbImage& image, const GridPlan& plan,
                                         const std::string& scan_id = "scan",
                                         Rgb fill = kSlideBackground);

std::vector<ClassMask> extract_mask_patches(const ClassMask& mask, const GridPlan& plan,
                                            std::uint8_t fill = 0);

RgbImage stitch(const std::vector<RgbImage>& patches, const GridPlan& plan);
RgbImage stitch(const std::vector<PatchRecord>& patches, const GridPlan& plan);
ClassMask stitch(const std::vector<ClassMask>& patches, const GridPlan& plan);

}  // namespace gleason
