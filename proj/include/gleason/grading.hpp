#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "gleason/image.hpp"
#include "gleason/metrics.hpp"

namespace gleason {

/// Minimum pixel count for a grade to count as present. Morphological cleanup
/// already removes specks, so a single pixel suffices after it.
inline constexpr std::int64_t kPresenceThresholdWithPostprocess = 1;
inline constexpr std::int64_t kPresenceThresholdRaw = 32;

struct GradingReport {
  std::string scan_id;
  std::array<std::int64_t, kNumClasses> pixel_counts{};
  std::vector<GradeGroup> grades_present;  // tumor grades passing the threshold, ascending
  GradeGroup assigned_grade = GradeGroup::Background;
  std::int64_t threshold_used = 1;

  bool benign() const { return assigned_grade == GradeGroup::Background; }
};

/// Pixel counts per class over all patch masks (classes >= kNumClasses throw).
std::array<std::int64_t, kNumClasses> count_grades(const std::vector<ClassMask>& patch_masks);

/// Assigns the highest tumor grade whose pixel count reaches the threshold,
/// or Background (benign) when none does.
GradingReport grade_from_counts(const std::array<std::int64_t, kNumClasses>& counts,
                                std::int64_t presence_threshold, std::string scan_id = {});

GradingReport grade_scan(const std::vector<ClassMask>& patch_masks, std::int64_t presence_threshold,
                         std::string scan_id = {});

/// One-vs-rest tally per grade group; the two maps must share their keys.
ClassificationTally evaluate_grading(const std::map<std::string, GradeGroup>& predicted,
                                     const std::map<std::string, GradeGroup>& truth);

nlohmann::json to_json(const GradingReport& report);

}  // namespace gleason
