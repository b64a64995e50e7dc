#include <random>

#include "gleason/metrics.hpp"
#include "support.hpp"

using namespace gleason;

namespace {

ClassMask filled(Index h, Index w, int cls) { return ClassMask::Constant(h, w, static_cast<std::uint8_t>(cls)); }

}  // namespace

TEST_CASE("accumulate examples") {
  ConfusionAccumulator acc;
  acc.accumulate(filled(4, 4, 2), filled(4, 4, 2));
  CHECK(acc.matrix()(2, 2) == 16);
  CHECK(acc.pixel_total() == 16);

  ConfusionAccumulator b;
  b.accumulate(filled(2, 2, 1), filled(2, 2, 3));
  CHECK(b.matrix()(3, 1) == 4);  // rows = truth, cols = prediction

  CHECK_THROWS_AS(acc.accumulate(filled(2, 2, 0), filled(2, 3, 0)), std::invalid_argument);
  CHECK_THROWS_AS(acc.accumulate(filled(2, 2, 6), filled(2, 2, 0)), std::invalid_argument);
}

TEST_CASE("confusion equals pair counting and merges add") {
  std::mt19937_64 rng(1);
  ConfusionAccumulator total;
  Eigen::Array<std::int64_t, 6, 6> oracle = Eigen::Array<std::int64_t, 6, 6>::Zero();
  for (int trial = 0; trial < 10; ++trial) {
    const ClassMask p = testing::random_mask(rng, 16, 16, 6), t = testing::random_mask(rng, 16, 16, 6);
    ConfusionAccumulator one;
    one.accumulate(p, t);
    Eigen::Array<std::int64_t, 6, 6> local = Eigen::Array<std::int64_t, 6, 6>::Zero();
    for (Index r = 0; r < 16; ++r)
      for (Index c = 0; c < 16; ++c) ++local(t(r, c), p(r, c));
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) CHECK(one.matrix()(i, j) == local(i, j));
    oracle += local;
    total = merge(total, one);
  }
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) CHECK(total.matrix()(i, j) == oracle(i, j));
  CHECK(total.pixel_total() == 10 * 256);
  CHECK(total.matrix().sum() == total.pixel_total());
}

TEST_CASE("IoU and DC examples") {
  ConfusionAccumulator same;
  same.accumulate(filled(3, 3, 4), filled(3, 3, 4));
  CHECK(*iou_per_class(same)[4] == 1.0);
  CHECK(*dice_per_class(same)[4] == 1.0);
  CHECK_FALSE(iou_per_class(same)[2].has_value());

  ConfusionAccumulator disjoint;
  disjoint.accumulate(filled(2, 2, 1), filled(2, 2, 2));
  CHECK(*iou_per_class(disjoint)[1] == 0.0);
  CHECK(*iou_per_class(disjoint)[2] == 0.0);

  // 2x2 blocks overlapping in 2 pixels on a 4x4 canvas
  ClassMask pred = filled(4, 4, 0), truth = filled(4, 4, 0);
  pred.block(0, 0, 2, 2).setConstant(1);
  truth.block(0, 1, 2, 2).setConstant(1);
  ConfusionAccumulator overlap;
  overlap.accumulate(pred, truth);
  CHECK(*iou_per_class(overlap)[1] == doctest::Approx(2.0 / 6.0));
  CHECK(*dice_per_class(overlap)[1] == doctest::Approx(0.5));
}

TEST_CASE("DC = 2 IoU / (1 + IoU)") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    ConfusionAccumulator acc;
    acc.accumulate(testing::random_mask(rng, 16, 16, 6), testing::random_mask(rng, 16, 16, 6));
    const auto iou = iou_per_class(acc);
    const auto dc = dice_per_class(acc);
    for (int c = 0; c < 6; ++c) {
      REQUIRE(iou[c].has_value() == dc[c].has_value());
      if (iou[c]) CHECK(std::abs(*dc[c] - 2 * *iou[c] / (1 + *iou[c])) < 1e-12);
    }
  }
}

TEST_CASE("means skip undefined classes and background") {
  CHECK(mean_of_defined({std::nullopt, 0.2, 0.4, std::nullopt}) == doctest::Approx(0.3));
  CHECK(mean_of_defined({1.0, 0.2, 0.4}, true) == doctest::Approx(1.6 / 3));
  CHECK_THROWS_AS(mean_of_defined({0.9, std::nullopt}), std::domain_error);

  ConfusionAccumulator perfect;
  ClassMask m(2, 3);
  m << 0, 1, 2, 3, 4, 5;
  perfect.accumulate(m, m);
  CHECK(mean_iou(perfect) == 1.0);
  CHECK(mean_dice(perfect) == 1.0);

  ConfusionAccumulator background_only;
  background_only.accumulate(filled(2, 2, 0), filled(2, 2, 0));
  CHECK_THROWS_AS(mean_iou(background_only), std::domain_error);
  CHECK(mean_iou(background_only, true) == 1.0);
}

TEST_CASE("classification report examples") {
  ClassificationTally t;
  t.per_grade[1] = {5, 0, 0, 3};
  t.per_grade[2] = {3, 2, 1, 2};
  t.per_grade[3] = {0, 0, 2, 6};
  const auto r = classification_report(t);
  CHECK(*r[1].tpr == 1.0);
  CHECK(*r[1].ppv == 1.0);
  CHECK(*r[1].f1 == 1.0);
  CHECK(*r[2].tpr == doctest::Approx(0.75));
  CHECK(*r[2].ppv == doctest::Approx(0.6));
  CHECK(*r[2].f1 == doctest::Approx(2.0 / 3.0));
  CHECK_FALSE(r[3].ppv.has_value());
  CHECK(*r[3].tpr == 0.0);
  CHECK_FALSE(r[0].tpr.has_value());
}

TEST_CASE("F1 is the harmonic mean of TPR and PPV") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> d(0, 9);
  for (int trial = 0; trial < 100; ++trial) {
    ClassificationTally t;
    t.per_grade[2] = {d(rng) + 1, d(rng), d(rng), d(rng)};
    const auto s = classification_report(t)[2];
    CHECK(std::abs(*s.f1 - 2 * *s.tpr * *s.ppv / (*s.tpr + *s.ppv)) < 1e-12);
  }
}

TEST_CASE("reports") {
  ConfusionAccumulator acc;
  ClassMask m(1, 3);
  m << 0, 2, 2;
  acc.accumulate(m, m);
  const auto j = segmentation_report_json(acc);
  CHECK(j["per_class"].size() == 6);
  CHECK(j["per_class"][1]["iou"].is_null());
  CHECK(j["mean_iou"] == 1.0);
  CHECK(segmentation_report_text(acc).find("GrG2") != std::string::npos);
  ClassificationTally t;
  t.per_grade[0] = {1, 0, 0, 0};
  CHECK(classification_report_json(t)[0]["grade"] == "benign");
  CHECK(classification_report_text(t).find("F1") != std::string::npos);
}
