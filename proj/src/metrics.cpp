#include "gleason/metrics.hpp"

#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace gleason {

ConfusionAccumulator::ConfusionAccumulator(int num_classes) : matrix_(Counts::Zero(num_classes, num_classes)) {
  if (num_classes < 1) throw std::invalid_argument("ConfusionAccumulator: need at least one class");
}

void ConfusionAccumulator::accumulate(const ClassMask& predicted, const ClassMask& truth) {
  if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols())
    throw std::invalid_argument("accumulate: predicted mask is " + std::to_string(predicted.cols()) + "x" +
                                std::to_string(predicted.rows()) + " but truth is " +
                                std::to_string(truth.cols()) + "x" + std::to_string(truth.rows()));
  const int c = num_classes();
  if (predicted.size() > 0 && (predicted.maxCoeff() >= c || truth.maxCoeff() >= c))
    throw std::invalid_argument("accumulate: class index outside [0, " + std::to_string(c) + ")");
  for (Index r = 0; r < truth.rows(); ++r)
    for (Index col = 0; col < truth.cols(); ++col) ++matrix_(truth(r, col), predicted(r, col));
  pixel_total_ += truth.size();
}

void ConfusionAccumulator::merge(const ConfusionAccumulator& other) {
  if (other.num_classes() != num_classes())
    throw std::invalid_argument("merge: accumulators have different class counts");
  matrix_ += other.matrix_;
  pixel_total_ += other.pixel_total_;
}

ConfusionAccumulator merge(ConfusionAccumulator a, const ConfusionAccumulator& b) {
  a.merge(b);
  return a;
}

namespace {

std::optional<double> ratio(std::int64_t num, std::int64_t den) {
  if (den == 0) return std::nullopt;
  return double(num) / double(den);
}

}  // namespace

ClassScores iou_per_class(const ConfusionAccumulator& acc) {
  ClassScores out;
  for (int c = 0; c < acc.num_classes(); ++c) {
    const auto tp = acc.true_positives(c);
    out.push_back(ratio(tp, tp + acc.false_positives(c) + acc.false_negatives(c)));
  }
  return out;
}

ClassScores dice_per_class(const ConfusionAccumulator& acc) {
  ClassScores out;
  for (int c = 0; c < acc.num_classes(); ++c) {
    const auto tp = acc.true_positives(c);
    out.push_back(ratio(2 * tp, 2 * tp + acc.false_positives(c) + acc.false_negatives(c)));
  }
  return out;
}

double mean_of_defined(const ClassScores& scores, bool include_background) {
  double sum = 0;
  int n = 0;
  for (std::size_t c = include_background ? 0 : 1; c < scores.size(); ++c)
    if (scores[c]) {
      sum += *scores[c];
      ++n;
    }
  if (n == 0) throw std::domain_error("mean over classes: no class has a defined score");
  return sum / n;
}

double mean_iou(const ConfusionAccumulator& acc, bool include_background) {
  return mean_of_defined(iou_per_class(acc), include_background);
}

double mean_dice(const ConfusionAccumulator& acc, bool include_background) {
  return mean_of_defined(dice_per_class(acc), include_background);
}

std::vector<GradeScores> classification_report(const ClassificationTally& tally) {
  std::vector<GradeScores> out;
  for (const auto& g : tally.per_grade)
    out.push_back({ratio(g.tp, g.tp + g.fn), ratio(g.tp, g.tp + g.fp), ratio(2 * g.tp, 2 * g.tp + g.fp + g.fn)});
  return out;
}

namespace {

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

}  // namespace

nlohmann::json segmentation_report_json(const ConfusionAccumulator& acc) {
  const auto iou = iou_per_class(acc);
  const auto dice = dice_per_class(acc);
  nlohmann::json per_class = nlohmann::json::array();
  for (int c = 0; c < acc.num_classes(); ++c)
    per_class.push_back({{"class", to_string(static_cast<GradeGroup>(c))},
                         {"iou", opt_json(iou[c])},
                         {"dice", opt_json(dice[c])},
                         {"true_pixels", acc.matrix().row(c).sum()}});
  nlohmann::json j{{"per_class", per_class}, {"pixel_total", acc.pixel_total()}};
  try {
    j["mean_iou"] = mean_iou(acc);
    j["mean_dice"] = mean_dice(acc);
  } catch (const std::domain_error&) {
    j["mean_iou"] = nullptr;
    j["mean_dice"] = nullptr;
  }
  std::vector<std::vector<std::int64_t>> m(static_cast<std::size_t>(acc.num_classes()));
  for (int r = 0; r < acc.num_classes(); ++r)
    for (int c = 0; c < acc.num_classes(); ++c) m[r].push_back(acc.matrix()(r, c));
  j["confusion"] = m;
  return j;
}

nlohmann::json classification_report_json(const ClassificationTally& tally) {
  const auto scores = classification_report(tally);
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t g = 0; g < scores.size(); ++g) {
    const auto& c = tally.per_grade[g];
    rows.push_back({{"grade", g == 0 ? std::string("benign") : to_string(static_cast<GradeGroup>(g))},
                    {"tp", c.tp},
                    {"fp", c.fp},
                    {"fn", c.fn},
                    {"tn", c.tn},
                    {"tpr", opt_json(scores[g].tpr)},
                    {"ppv", opt_json(scores[g].ppv)},
                    {"f1", opt_json(scores[g].f1)}});
  }
  return rows;
}

std::string format_table(const std::vector<std::string>& columns,
                         const std::vector<std::pair<std::string, std::vector<std::optional<double>>>>& rows,
                         int precision) {
  std::size_t label_w = 6;
  for (const auto& r : rows) label_w = std::max(label_w, r.first.size());
  std::size_t col_w = std::size_t(precision) + 4;
  for (const auto& c : columns) col_w = std::max(col_w, c.size() + 2);
  std::ostringstream os;
  os << std::left << std::setw(int(label_w)) << "Metric";
  for (const auto& c : columns) os << std::right << std::setw(int(col_w)) << c;
  os << '\n';
  for (const auto& [label, values] : rows) {
    os << std::left << std::setw(int(label_w)) << label;
    for (const auto& v : values) {
      std::ostringstream cell;
      if (v)
        cell << std::fixed << std::setprecision(precision) << *v;
      else
        cell << "-";
      os << std::right << std::setw(int(col_w)) << cell.str();
    }
    os << '\n';
  }
  return os.str();
}

std::string segmentation_report_text(const ConfusionAccumulator& acc) {
  std::vector<std::string> cols;
  for (int c = 0; c < acc.num_classes(); ++c) cols.push_back(to_string(static_cast<GradeGroup>(c)));
  std::ostringstream os;
  os << format_table(cols, {{"IoU", iou_per_class(acc)}, {"DC", dice_per_class(acc)}});
  try {
    os << "Mean IoU " << std::fixed << std::setprecision(4) << mean_iou(acc) << "  Mean DC " << mean_dice(acc)
       << '\n';
  } catch (const std::domain_error&) {
    os << "Mean IoU -  Mean DC -\n";
  }
  return os.str();
}

std::string classification_report_text(const ClassificationTally& tally) {
  const auto scores = classification_report(tally);
  std::vector<std::string> cols;
  std::vector<std::optional<double>> tpr, ppv, f1;
  for (std::size_t g = 0; g < scores.size(); ++g) {
    cols.push_back(g == 0 ? "benign" : to_string(static_cast<GradeGroup>(g)));
    tpr.push_back(scores[g].tpr);
    ppv.push_back(scores[g].ppv);
    f1.push_back(scores[g].f1);
  }
  return format_table(cols, {{"TPR", tpr}, {"PPV", ppv}, {"F1", f1}}, 3);
}

}  // namespace gleason
