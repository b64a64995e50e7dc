#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "gleason/image.hpp"

namespace gleason {

/// Pixel confusion counts: rows are true classes, columns predicted classes.
class ConfusionAccumulator {
 public:
  using Counts = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

  explicit ConfusionAccumulator(int num_classes = kNumClasses);

  int num_classes() const { return static_cast<int>(matrix_.rows()); }
  const Counts& matrix() const { return matrix_; }
  std::int64_t pixel_total() const { return pixel_total_; }

  void accumulate(const ClassMask& predicted, const ClassMask& truth);
  void merge(const ConfusionAccumulator& other);

  std::int64_t true_positives(int cls) const { return matrix_(cls, cls); }
  std::int64_t false_positives(int cls) const { return matrix_.col(cls).sum() - matrix_(cls, cls); }
  std::int64_t false_negatives(int cls) const { return matrix_.row(cls).sum() - matrix_(cls, cls); }

  friend bool operator==(const ConfusionAccumulator& a, const ConfusionAccumulator& b) {
    return a.pixel_total_ == b.pixel_total_ && a.matrix_ == b.matrix_;
  }

 private:
  Counts matrix_;
  std::int64_t pixel_total_ = 0;
};

ConfusionAccumulator merge(ConfusionAccumulator a, const ConfusionAccumulator& b);

/// Undefined entries (empty denominator) are std::nullopt.
using ClassScores = std::vector<std::optional<double>>;

ClassScores iou_per_class(const ConfusionAccumulator& acc);
ClassScores dice_per_class(const ConfusionAccumulator& acc);

/// Mean over defined classes; Background (class 0) is skipped unless asked
/// for. Throws when no class is defined.
double mean_of_defined(const ClassScores& scores, bool include_background = false);
double mean_iou(const ConfusionAccumulator& acc, bool include_background = false);
double mean_dice(const ConfusionAccumulator& acc, bool include_background = false);

/// Scan-level one-vs-rest counts per grade group.
struct GradeCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::int64_t total() const { return tp + fp + fn + tn; }
  friend bool operator==(const GradeCounts&, const GradeCounts&) = default;
};

struct ClassificationTally {
  std::vector<GradeCounts> per_grade = std::vector<GradeCounts>(kNumClasses);
  friend bool operator==(const ClassificationTally&, const ClassificationTally&) = default;
};

struct GradeScores {
  std::optional<double> tpr, ppv, f1;
};

/// TPR = TP/(TP+FN), PPV = TP/(TP+FP), F1 = 2TP/(2TP+FP+FN) (their harmonic mean).
std::vector<GradeScores> classification_report(const ClassificationTally& tally);

nlohmann::json segmentation_report_json(const ConfusionAccumulator& acc);
nlohmann::json classification_report_json(const ClassificationTally& tally);

/// Metric rows against one column per class (or per experiment), aligned.
std::string format_table(const std::vector<std::string>& columns,
                         const std::vector<std::pair<std::string, std::vector<std::optional<double>>>>& rows,
                         int precision = 4);

std::string segmentation_report_text(const ConfusionAccumulator& acc);
std::string classification_report_text(const ClassificationTally& tally);

}  // namespace gleason
