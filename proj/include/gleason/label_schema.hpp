#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gleason {

/// ISUP grade groups. Index order is severity order, so the numerically
/// largest class index in a mask is also the most severe grade.
enum class GradeGroup : std::uint8_t {
  Background = 0,
  GrG1 = 1,
  GrG2 = 2,
  GrG3 = 3,
  GrG4 = 4,
  GrG5 = 5,
};

inline constexpr int kNumClasses = 6;

inline constexpr std::array<GradeGroup, kNumClasses> kAllGrades = {
    GradeGroup::Background, GradeGroup::GrG1, GradeGroup::GrG2,
    GradeGroup::GrG3,       GradeGroup::GrG4, GradeGroup::GrG5};

inline constexpr std::array<GradeGroup, kNumClasses - 1> kTumorGrades = {
    GradeGroup::GrG1, GradeGroup::GrG2, GradeGroup::GrG3, GradeGroup::GrG4,
    GradeGroup::GrG5};

constexpr int class_index(GradeGroup g) { return static_cast<int>(g); }

constexpr bool is_tumor(GradeGroup g) { return g != GradeGroup::Background; }

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend constexpr bool operator==(const Rgb&, const Rgb&) = default;
};

std::string to_string(GradeGroup g);
std::string to_string(const Rgb& c);

/// Parses "Background", "GrG1".."GrG5" (also "benign" for Background).
GradeGroup grade_from_name(const std::string& name);

class UnregisteredColorError : public std::invalid_argument {
 public:
  UnregisteredColorError(Rgb color, std::optional<std::pair<long, long>> where,
                         const std::string& context = {});
  Rgb color() const { return color_; }
  /// (row, col) of the offending pixel when the lookup came from a raster.
  std::optional<std::pair<long, long>> location() const { return where_; }

 private:
  Rgb color_;
  std::optional<std::pair<long, long>> where_;
};

/// Class list plus the bit-exact mask palette. Immutable once built.
class ClassMap {
 public:
  /// The default six-class ISUP palette.
  ClassMap();
  ClassMap(std::vector<GradeGroup> classes, std::vector<Rgb> colors);

  int num_classes() const { return static_cast<int>(classes_.size()); }
  const std::vector<GradeGroup>& classes() const { return classes_; }

  GradeGroup grade_from_class_index(int idx) const;
  Rgb color_for_grade(GradeGroup g) const;
  GradeGroup grade_from_color(Rgb rgb,
                              std::optional<std::pair<long, long>> where = std::nullopt) const;
  /// Returns the class index for a color, or -1 when unregistered.
  int find_color(Rgb rgb) const;

 private:
  std::vector<GradeGroup> classes_;
  std::vector<Rgb> colors_;
};

const ClassMap& default_class_map();

}  // namespace gleason
