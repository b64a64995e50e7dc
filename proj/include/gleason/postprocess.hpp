#pragma once

#include <nlohmann/json.hpp>

#include "gleason/image.hpp"

namespace gleason {

struct MorphologyConfig {
  Index max_hole_area = 64;
  Index min_blob_area = 32;
  int opening_radius = 1;
  int connectivity = 8;

  void validate() const;
};

void to_json(nlohmann::json& j, const MorphologyConfig& c);
void from_json(const nlohmann::json& j, MorphologyConfig& c);

/// Connected-component labels (0 = not part of the set, 1..n components).
struct Components {
  Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> labels;
  std::vector<Index> areas;  // areas[k - 1] for label k
  std::vector<bool> touches_border;
};

Components label_components(const ClassMask& mask, std::uint8_t cls, int connectivity);

/// Background components (4-connected) that are enclosed by `cls` and no
/// larger than max_hole_area become `cls`.
ClassMask fill_regions(const ClassMask& mask, int cls, Index max_hole_area);

/// Components of `cls` smaller than min_blob_area become Background.
ClassMask remove_small_blobs(const ClassMask& mask, int cls, Index min_blob_area, int connectivity = 8);

/// Binary opening of the `cls` indicator with a disc; removed pixels become Background.
ClassMask open_regions(const ClassMask& mask, int cls, int radius);

/// Opening then blob removal for every tumor class in ascending grade order,
/// then hole filling in the same order.
ClassMask postprocess_pipeline(const ClassMask& mask, const MorphologyConfig& cfg = {});

}  // namespace gleason
