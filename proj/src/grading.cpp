#include "gleason/grading.hpp"

#include <stdexcept>

namespace gleason {

std::array<std::int64_t, kNumClasses> count_grades(const std::vector<ClassMask>& patch_masks) {
  std::array<std::int64_t, kNumClasses> counts{};
  for (const auto& m : patch_masks)
    for (Index i = 0; i < m.size(); ++i) {
      const int c = m.data()[i];
      if (c >= kNumClasses) throw std::invalid_argument("grade_scan: class index " + std::to_string(c) + " out of range");
      ++counts[static_cast<std::size_t>(c)];
    }
  return counts;
}

GradingReport grade_from_counts(const std::array<std::int64_t, kNumClasses>& counts,
                                std::int64_t presence_threshold, std::string scan_id) {
  if (presence_threshold < 1) throw std::invalid_argument("grade_scan: presence threshold must be >= 1");
  GradingReport report;
  report.scan_id = std::move(scan_id);
  report.pixel_counts = counts;
  report.threshold_used = presence_threshold;
  for (GradeGroup g : kTumorGrades)
    if (counts[static_cast<std::size_t>(class_index(g))] >= presence_threshold) {
      report.grades_present.push_back(g);
      report.assigned_grade = g;
    }
  return report;
}

GradingReport grade_scan(const std::vector<ClassMask>& patch_masks, std::int64_t presence_threshold,
                         std::string scan_id) {
  if (patch_masks.empty()) throw std::invalid_argument("grade_scan: no patches");
  return grade_from_counts(count_grades(patch_masks), presence_threshold, std::move(scan_id));
}

ClassificationTally evaluate_grading(const std::map<std::string, GradeGroup>& predicted,
                                     const std::map<std::string, GradeGroup>& truth) {
  std::string missing;
  for (const auto& [id, g] : truth)
    if (!predicted.count(id)) missing += (missing.empty() ? "" : ", ") + id + " (no prediction)";
  for (const auto& [id, g] : predicted)
    if (!truth.count(id)) missing += (missing.empty() ? "" : ", ") + id + " (no ground truth)";
  if (!missing.empty()) throw std::invalid_argument("evaluate_grading: scan ids differ: " + missing);

  ClassificationTally tally;
  for (const auto& [id, actual] : truth) {
    const GradeGroup guess = predicted.at(id);
    for (int g = 0; g < kNumClasses; ++g) {
      const bool is_pred = class_index(guess) == g, is_true = class_index(actual) == g;
      auto& c = tally.per_grade[static_cast<std::size_t>(g)];
      if (is_pred && is_true) ++c.tp;
      else if (is_pred) ++c.fp;
      else if (is_true) ++c.fn;
      else ++c.tn;
    }
  }
  return tally;
}

nlohmann::json to_json(const GradingReport& r) {
  nlohmann::json counts = nlohmann::json::object();
  for (int g = 0; g < kNumClasses; ++g)
    counts[to_string(static_cast<GradeGroup>(g))] = r.pixel_counts[static_cast<std::size_t>(g)];
  std::vector<std::string> present;
  for (GradeGroup g : r.grades_present) present.push_back(to_string(g));
  return {{"scan_id", r.scan_id},
          {"pixel_counts", counts},
          {"grades_present", present},
          {"assigned_grade", r.benign() ? std::string("benign") : to_string(r.assigned_grade)},
          {"threshold_used", r.threshold_used}};
}

}  // namespace gleason
