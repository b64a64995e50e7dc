#include "gleason/tiling.hpp"

#include <stdexcept>

namespace gleason {

void to_json(nlohmann::json& j, const GridPlan& p) {
  j = {{"scan_width", p.scan_width}, {"scan_height", p.scan_height},
       {"patch_size", p.patch_size}, {"rows", p.rows},
       {"cols", p.cols},             {"pad_right", p.pad_right},
       {"pad_bottom", p.pad_bottom}};
}

void from_json(const nlohmann::json& j, GridPlan& p) {
  p = plan_grid(j.at("scan_width").get<Index>(), j.at("scan_height").get<Index>(),
                j.at("patch_size").get<Index>());
  GridPlan stored;
  j.at("rows").get_to(stored.rows);
  j.at("cols").get_to(stored.cols);
  j.at("pad_right").get_to(stored.pad_right);
  j.at("pad_bottom").get_to(stored.pad_bottom);
  if (stored.rows != p.rows || stored.cols != p.cols || stored.pad_right != p.pad_right ||
      stored.pad_bottom != p.pad_bottom)
    throw std::invalid_argument("grid plan fields are inconsistent with the scan size");
}

GridPlan plan_grid(Index scan_width, Index scan_height, Index patch_size) {
  if (scan_width <= 0 || scan_height <= 0 || patch_size <= 0)
    throw std::invalid_argument("plan_grid: dimensions must be positive (got " +
                                std::to_string(scan_width) + "x" + std::to_string(scan_height) +
                                ", patch " + std::to_string(patch_size) + ")");
  GridPlan p;
  p.scan_width = scan_width;
  p.scan_height = scan_height;
  p.patch_size = patch_size;
  p.cols = (scan_width + patch_size - 1) / patch_size;
  p.rows = (scan_height + patch_size - 1) / patch_size;
  p.pad_right = p.cols * patch_size - scan_width;
  p.pad_bottom = p.rows * patch_size - scan_height;
  return p;
}

std::string patch_file_name(const std::string& scan_id, Index row, Index col) {
  return scan_id + "_r" + std::to_string(row) + "_c" + std::to_string(col) + ".png";
}

namespace {

void check_scan_size(Index height, Index width, const GridPlan& plan) {
  if (width != plan.scan_width || height != plan.scan_height)
    throw std::invalid_argument("image is " + std::to_string(width) + "x" +
                                std::to_string(height) + " but the grid plan expects " +
                                std::to_string(plan.scan_width) + "x" +
                                std::to_string(plan.scan_height));
}

void check_patch_count(std::size_t n, const GridPlan& plan) {
  if (static_cast<Index>(n) != plan.patch_count())
    throw std::invalid_argument("stitch: expected " + std::to_string(plan.patch_count()) +
                                " patches, got " + std::to_string(n));
}

void check_patch_extent(Index height, Index width, const GridPlan& plan, std::size_t i) {
  if (height != plan.patch_size || width != plan.patch_size)
    throw std::invalid_argument("stitch: patch " + std::to_string(i) + " is " +
                                std::to_string(width) + "x" + std::to_string(height) +
                                ", expected " + std::to_string(plan.patch_size) + " square");
}

// Valid extent of the patch at (r, c) once padding is cropped.
Index valid_rows(const GridPlan& p, Index r) {
  return std::min(p.patch_size, p.scan_height - r * p.patch_size);
}
Index valid_cols(const GridPlan& p, Index c) {
  return std::min(p.patch_size, p.scan_width - c * p.patch_size);
}

}  // namespace

std::vector<PatchRecord> extract_patches(const RgbImage& image, const GridPlan& plan,
                                         const std::string& scan_id, Rgb fill) {
  check_scan_size(image.height(), image.width(), plan);
  const Index s = plan.patch_size;
  std::vector<PatchRecord> out;
  out.reserve(static_cast<std::size_t>(plan.patch_count()));
  for (Index r = 0; r < plan.rows; ++r)
    for (Index c = 0; c < plan.cols; ++c) {
      PatchRecord rec{scan_id, r, c, RgbImage(s, s, fill)};
      const Index h = valid_rows(plan, r), w = valid_cols(plan, c);
      rec.pixels.storage().topLeftCorner(h, 3 * w) =
          image.storage().block(r * s, 3 * c * s, h, 3 * w);
      out.push_back(std::move(rec));
    }
  return out;
}

std::vector<ClassMask> extract_mask_patches(const ClassMask& mask, const GridPlan& plan,
                                            std::uint8_t fill) {
  check_scan_size(mask.rows(), mask.cols(), plan);
  const Index s = plan.patch_size;
  std::vector<ClassMask> out;
  out.reserve(static_cast<std::size_t>(plan.patch_count()));
  for (Index r = 0; r < plan.rows; ++r)
    for (Index c = 0; c < plan.cols; ++c) {
      ClassMask patch = ClassMask::Constant(s, s, fill);
      const Index h = valid_rows(plan, r), w = valid_cols(plan, c);
      patch.topLeftCorner(h, w) = mask.block(r * s, c * s, h, w);
      out.push_back(std::move(patch));
    }
  return out;
}

RgbImage stitch(const std::vector<RgbImage>& patches, const GridPlan& plan) {
  check_patch_count(patches.size(), plan);
  const Index s = plan.patch_size;
  RgbImage out(plan.scan_height, plan.scan_width);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    check_patch_extent(patches[i].height(), patches[i].width(), plan, i);
    const Index r = static_cast<Index>(i) / plan.cols, c = static_cast<Index>(i) % plan.cols;
    const Index h = valid_rows(plan, r), w = valid_cols(plan, c);
    out.storage().block(r * s, 3 * c * s, h, 3 * w) =
        patches[i].storage().topLeftCorner(h, 3 * w);
  }
  return out;
}

RgbImage stitch(const std::vector<PatchRecord>& patches, const GridPlan& plan) {
  check_patch_count(patches.size(), plan);
  std::vector<RgbImage> ordered(patches.size());
  std::vector<bool> seen(patches.size(), false);
  for (const auto& p : patches) {
    if (p.row < 0 || p.row >= plan.rows || p.col < 0 || p.col >= plan.cols)
      throw std::invalid_argument("stitch: patch (" + std::to_string(p.row) + ", " +
                                  std::to_string(p.col) + ") lies outside the grid");
    const auto idx = static_cast<std::size_t>(p.row * plan.cols + p.col);
    if (seen[idx])
      throw std::invalid_argument("stitch: duplicate patch (" + std::to_string(p.row) + ", " +
                                  std::to_string(p.col) + ")");
    seen[idx] = true;
    ordered[idx] = p.pixels;
  }
  return stitch(ordered, plan);
}

ClassMask stitch(const std::vector<ClassMask>& patches, const GridPlan& plan) {
  check_patch_count(patches.size(), plan);
  const Index s = plan.patch_size;
  ClassMask out(plan.scan_height, plan.scan_width);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    check_patch_extent(patches[i].rows(), patches[i].cols(), plan, i);
    const Index r = static_cast<Index>(i) / plan.cols, c = static_cast<Index>(i) % plan.cols;
    const Index h = valid_rows(plan, r), w = valid_cols(plan, c);
    out.block(r * s, c * s, h, w) = patches[i].topLeftCorner(h, w);
  }
  return out;
}

}  // namespace gleason
