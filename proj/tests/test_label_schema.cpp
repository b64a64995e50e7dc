#include <algorithm>
#include <random>

#include "gleason/label_schema.hpp"
#include "support.hpp"

using namespace gleason;

TEST_CASE("grade_from_class_index follows the enumeration order") {
  const ClassMap& map = default_class_map();
  CHECK(map.num_classes() == 6);
  CHECK(map.grade_from_class_index(0) == GradeGroup::Background);
  CHECK(map.grade_from_class_index(4) == GradeGroup::GrG4);
  CHECK_THROWS_AS(map.grade_from_class_index(6), std::out_of_range);
  CHECK_THROWS_AS(map.grade_from_class_index(-1), std::out_of_range);
  try {
    map.grade_from_class_index(6);
  } catch (const std::out_of_range& e) {
    CHECK(std::string(e.what()).find('6') != std::string::npos);
  }
}

TEST_CASE("mask palette") {
  const ClassMap& map = default_class_map();
  CHECK(map.color_for_grade(GradeGroup::GrG2) == Rgb{255, 0, 0});
  CHECK(map.color_for_grade(GradeGroup::GrG3) == Rgb{0, 255, 0});
  CHECK(map.color_for_grade(GradeGroup::GrG4) == Rgb{255, 255, 255});
  CHECK(map.color_for_grade(GradeGroup::Background) == Rgb{0, 0, 0});
  CHECK(map.grade_from_color({255, 0, 0}) == GradeGroup::GrG2);
  CHECK(map.grade_from_color({0, 0, 0}) == GradeGroup::Background);
  CHECK(map.find_color({12, 34, 56}) == -1);
}

TEST_CASE("unregistered colors carry the triple and the location") {
  const ClassMap& map = default_class_map();
  try {
    map.grade_from_color({12, 34, 56}, std::pair<long, long>{3, 9});
    FAIL("expected an error");
  } catch (const UnregisteredColorError& e) {
    CHECK(e.color() == Rgb{12, 34, 56});
    REQUIRE(e.location());
    CHECK(e.location()->first == 3);
    CHECK(e.location()->second == 9);
    const std::string msg = e.what();
    CHECK(msg.find("12") != std::string::npos);
    CHECK(msg.find("56") != std::string::npos);
  }
}

TEST_CASE("color lookup is a bijection over all grades") {
  const ClassMap& map = default_class_map();
  for (GradeGroup g : kAllGrades) CHECK(map.grade_from_color(map.color_for_grade(g)) == g);
  for (std::size_t i = 0; i < kAllGrades.size(); ++i)
    for (std::size_t j = i + 1; j < kAllGrades.size(); ++j)
      CHECK_FALSE(map.color_for_grade(kAllGrades[i]) == map.color_for_grade(kAllGrades[j]));
}

TEST_CASE("sorting grades puts the maximum last") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> d(0, 5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<GradeGroup> v;
    for (int k = 0; k < 1 + trial % 9; ++k) v.push_back(static_cast<GradeGroup>(d(rng)));
    const GradeGroup mx = *std::max_element(v.begin(), v.end());
    std::sort(v.begin(), v.end());
    CHECK(v.back() == mx);
  }
  CHECK(GradeGroup::Background < GradeGroup::GrG1);
  CHECK(GradeGroup::GrG4 < GradeGroup::GrG5);
}

TEST_CASE("grade names") {
  for (GradeGroup g : kAllGrades) CHECK(grade_from_name(to_string(g)) == g);
  CHECK(grade_from_name("benign") == GradeGroup::Background);
  CHECK_THROWS_AS(grade_from_name("GrG7"), std::invalid_argument);
}

TEST_CASE("custom class maps are validated") {
  using G = GradeGroup;
  CHECK_NOTHROW(ClassMap({G::Background, G::GrG1}, {{0, 0, 0}, {1, 2, 3}}));
  CHECK_THROWS(ClassMap({G::Background, G::GrG1}, {{0, 0, 0}, {0, 0, 0}}));  // duplicate colors
  CHECK_THROWS(ClassMap({G::Background, G::GrG1}, {{9, 9, 9}, {1, 2, 3}}));  // background not black
  CHECK_THROWS(ClassMap({G::Background, G::GrG1}, {{0, 0, 0}}));             // length mismatch
}
