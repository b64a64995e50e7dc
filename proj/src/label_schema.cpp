#include "gleason/label_schema.hpp"

#include <algorithm>
#include <sstream>

namespace gleason {

std::string to_string(GradeGroup g) {
  switch (g) {
    case GradeGroup::Background: return "Background";
    case GradeGroup::GrG1: return "GrG1";
    case GradeGroup::GrG2: return "GrG2";
    case GradeGroup::GrG3: return "GrG3";
    case GradeGroup::GrG4: return "GrG4";
    case GradeGroup::GrG5: return "GrG5";
  }
  return "?";
}

std::string to_string(const Rgb& c) {
  std::ostringstream os;
  os << "(" << int(c.r) << "," << int(c.g) << "," << int(c.b) << ")";
  return os.str();
}

GradeGroup grade_from_name(const std::string& name) {
  if (name == "benign") return GradeGroup::Background;
  for (GradeGroup g : kAllGrades)
    if (to_string(g) == name) return g;
  throw std::invalid_argument("unknown grade group name '" + name + "'");
}

namespace {

std::string describe_color_error(Rgb color, const std::optional<std::pair<long, long>>& where) {
  std::string msg = "unregistered mask color " + to_string(color);
  if (where)
    msg += " at pixel (row " + std::to_string(where->first) + ", col " +
           std::to_string(where->second) + ")";
  return msg;
}

}  // namespace

UnregisteredColorError::UnregisteredColorError(Rgb color,
                                               std::optional<std::pair<long, long>> where,
                                               const std::string& context)
    : std::invalid_argument((context.empty() ? "" : context + ": ") + describe_color_error(color, where)),
      color_(color),
      where_(where) {}

ClassMap::ClassMap()
    : ClassMap({kAllGrades.begin(), kAllGrades.end()},
               {{0, 0, 0}, {0, 0, 255}, {255, 0, 0}, {0, 255, 0}, {255, 255, 255}, {255, 255, 0}}) {}

ClassMap::ClassMap(std::vector<GradeGroup> classes, std::vector<Rgb> colors)
    : classes_(std::move(classes)), colors_(std::move(colors)) {
  if (classes_.empty()) throw std::invalid_argument("ClassMap: empty class list");
  if (classes_.size() != colors_.size())
    throw std::invalid_argument("ClassMap: class and color lists differ in length");
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (class_index(classes_[i]) != static_cast<int>(i))
      throw std::invalid_argument("ClassMap: classes must be listed in index order");
    for (std::size_t j = 0; j < i; ++j)
      if (colors_[i] == colors_[j])
        throw std::invalid_argument("ClassMap: duplicate color " + to_string(colors_[i]));
  }
  if (!(colors_[0] == Rgb{0, 0, 0}))
    throw std::invalid_argument("ClassMap: Background must be black");
}

GradeGroup ClassMap::grade_from_class_index(int idx) const {
  if (idx < 0 || idx >= num_classes())
    throw std::out_of_range("class index " + std::to_string(idx) + " outside [0, " +
                            std::to_string(num_classes()) + ")");
  return classes_[static_cast<std::size_t>(idx)];
}

Rgb ClassMap::color_for_grade(GradeGroup g) const {
  const int idx = class_index(g);
  if (idx >= num_classes())
    throw std::out_of_range("grade " + to_string(g) + " not in this class map");
  return colors_[static_cast<std::size_t>(idx)];
}

int ClassMap::find_color(Rgb rgb) const {
  auto it = std::find(colors_.begin(), colors_.end(), rgb);
  return it == colors_.end() ? -1 : static_cast<int>(it - colors_.begin());
}

GradeGroup ClassMap::grade_from_color(Rgb rgb, std::optional<std::pair<long, long>> where) const {
  const int idx = find_color(rgb);
  if (idx < 0) throw UnregisteredColorError(rgb, where);
  return classes_[static_cast<std::size_t>(idx)];
}

const ClassMap& default_class_map() {
  static const ClassMap map;
  return map;
}

}  // namespace gleason
