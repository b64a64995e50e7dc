#include "gleason/postprocess.hpp"

#include <stdexcept>
#include <vector>

namespace gleason {

void MorphologyConfig::validate() const {
  if (max_hole_area < 0 || min_blob_area < 0) throw std::invalid_argument("morphology: areas must be >= 0");
  if (opening_radius < 0) throw std::invalid_argument("morphology: opening radius must be >= 0");
  if (connectivity != 4 && connectivity != 8) throw std::invalid_argument("morphology: connectivity must be 4 or 8");
}

void to_json(nlohmann::json& j, const MorphologyConfig& c) {
  j = {{"max_hole_area", c.max_hole_area},
       {"min_blob_area", c.min_blob_area},
       {"opening_radius", c.opening_radius},
       {"connectivity", c.connectivity}};
}

void from_json(const nlohmann::json& j, MorphologyConfig& c) {
  MorphologyConfig d;
  c.max_hole_area = j.value("max_hole_area", d.max_hole_area);
  c.min_blob_area = j.value("min_blob_area", d.min_blob_area);
  c.opening_radius = j.value("opening_radius", d.opening_radius);
  c.connectivity = j.value("connectivity", d.connectivity);
  c.validate();
}

namespace {

void check_class(int cls) {
  if (cls < 0 || cls >= kNumClasses)
    throw std::invalid_argument("morphology: class index " + std::to_string(cls) + " outside [0, " +
                                std::to_string(kNumClasses) + ")");
}

constexpr int kDy[8] = {-1, 1, 0, 0, -1, -1, 1, 1};
constexpr int kDx[8] = {0, 0, -1, 1, -1, 1, -1, 1};

}  // namespace

Components label_components(const ClassMask& mask, std::uint8_t cls, int connectivity) {
  if (connectivity != 4 && connectivity != 8) throw std::invalid_argument("connectivity must be 4 or 8");
  const Index h = mask.rows(), w = mask.cols();
  Components out;
  out.labels.setZero(h, w);
  std::vector<std::pair<Index, Index>> stack;
  int next = 0;
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      if (mask(y, x) != cls || out.labels(y, x) != 0) continue;
      ++next;
      Index area = 0;
      bool border = false;
      out.labels(y, x) = next;
      stack.push_back({y, x});
      while (!stack.empty()) {
        const auto [cy, cx] = stack.back();
        stack.pop_back();
        ++area;
        if (cy == 0 || cx == 0 || cy == h - 1 || cx == w - 1) border = true;
        for (int k = 0; k < connectivity; ++k) {
          const Index ny = cy + kDy[k], nx = cx + kDx[k];
          if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
          if (mask(ny, nx) == cls && out.labels(ny, nx) == 0) {
            out.labels(ny, nx) = next;
            stack.push_back({ny, nx});
          }
        }
      }
      out.areas.push_back(area);
      out.touches_border.push_back(border);
    }
  return out;
}

ClassMask fill_regions(const ClassMask& mask, int cls, Index max_hole_area) {
  check_class(cls);
  if (cls == 0) return mask;
  const Components holes = label_components(mask, 0, 4);
  const Index h = mask.rows(), w = mask.cols();
  std::vector<bool> enclosed(holes.areas.size());
  for (std::size_t k = 0; k < enclosed.size(); ++k)
    enclosed[k] = !holes.touches_border[k] && holes.areas[k] <= max_hole_area;
  // A hole is enclosed only if every 4-neighbour outside it belongs to cls.
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      const int label = holes.labels(y, x);
      if (label == 0 || !enclosed[static_cast<std::size_t>(label - 1)]) continue;
      for (int k = 0; k < 4; ++k) {
        const Index ny = y + kDy[k], nx = x + kDx[k];
        if (holes.labels(ny, nx) != label && mask(ny, nx) != cls) {
          enclosed[static_cast<std::size_t>(label - 1)] = false;
          break;
        }
      }
    }
  ClassMask out = mask;
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      const int label = holes.labels(y, x);
      if (label != 0 && enclosed[static_cast<std::size_t>(label - 1)]) out(y, x) = static_cast<std::uint8_t>(cls);
    }
  return out;
}

ClassMask remove_small_blobs(const ClassMask& mask, int cls, Index min_blob_area, int connectivity) {
  check_class(cls);
  if (min_blob_area <= 0 || cls == 0) return mask;
  const Components blobs = label_components(mask, static_cast<std::uint8_t>(cls), connectivity);
  ClassMask out = mask;
  for (Index y = 0; y < mask.rows(); ++y)
    for (Index x = 0; x < mask.cols(); ++x) {
      const int label = blobs.labels(y, x);
      if (label != 0 && blobs.areas[static_cast<std::size_t>(label - 1)] < min_blob_area) out(y, x) = 0;
    }
  return out;
}

ClassMask open_regions(const ClassMask& mask, int cls, int radius) {
  check_class(cls);
  if (radius < 0) throw std::invalid_argument("open_regions: radius must be >= 0");
  if (radius == 0 || cls == 0) return mask;
  std::vector<std::pair<int, int>> disc;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dy * dy + dx * dx <= radius * radius) disc.push_back({dy, dx});

  const Index h = mask.rows(), w = mask.cols();
  using Bits = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Bits inside = mask == static_cast<std::uint8_t>(cls);
  Bits eroded = Bits::Constant(h, w, false);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      if (!inside(y, x)) continue;
      bool keep = true;
      for (const auto& [dy, dx] : disc) {
        const Index ny = y + dy, nx = x + dx;
        if (ny < 0 || nx < 0 || ny >= h || nx >= w || !inside(ny, nx)) {
          keep = false;
          break;
        }
      }
      eroded(y, x) = keep;
    }
  Bits opened = Bits::Constant(h, w, false);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      if (!eroded(y, x)) continue;
      for (const auto& [dy, dx] : disc) {
        const Index ny = y + dy, nx = x + dx;
        if (ny >= 0 && nx >= 0 && ny < h && nx < w) opened(ny, nx) = true;
      }
    }
  ClassMask out = mask;
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      if (inside(y, x) && !opened(y, x)) out(y, x) = 0;
  return out;
}

ClassMask postprocess_pipeline(const ClassMask& mask, const MorphologyConfig& cfg) {
  cfg.validate();
  ClassMask out = mask;
  for (GradeGroup g : kTumorGrades) {
    out = open_regions(out, class_index(g), cfg.opening_radius);
    out = remove_small_blobs(out, class_index(g), cfg.min_blob_area, cfg.connectivity);
  }
  for (GradeGroup g : kTumorGrades) out = fill_regions(out, class_index(g), cfg.max_hole_area);
  return out;
}

}  // namespace gleason
