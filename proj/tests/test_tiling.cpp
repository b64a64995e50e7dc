#include <random>

#include "gleason/tiling.hpp"
#include "support.hpp"

using namespace gleason;

TEST_CASE("plan_grid arithmetic") {
  const GridPlan a = plan_grid(700, 700, 350);
  CHECK(a.rows == 2);
  CHECK(a.cols == 2);
  CHECK(a.pad_right == 0);
  CHECK(a.pad_bottom == 0);

  const GridPlan b = plan_grid(800, 700, 350);
  CHECK(b.rows == 2);
  CHECK(b.cols == 3);
  CHECK(b.pad_right == 250);  // 3*350 - 800
  CHECK(b.pad_bottom == 0);

  const GridPlan c = plan_grid(350, 350, 350);
  CHECK(c.rows == 1);
  CHECK(c.cols == 1);
  CHECK(c.patch_count() == 1);

  CHECK_THROWS_AS(plan_grid(0, 10, 350), std::invalid_argument);
  CHECK_THROWS_AS(plan_grid(10, -1, 350), std::invalid_argument);
  CHECK_THROWS_AS(plan_grid(10, 10, 0), std::invalid_argument);
}

TEST_CASE("GridPlan json round trip and validation") {
  const GridPlan p = plan_grid(800, 700, 350);
  const nlohmann::json j = p;
  for (const char* key : {"scan_width", "scan_height", "patch_size", "rows", "cols", "pad_right", "pad_bottom"})
    CHECK(j.contains(key));
  CHECK(j.get<GridPlan>() == p);
  nlohmann::json bad = j;
  bad["cols"] = 2;
  CHECK_THROWS(bad.get<GridPlan>());
}

TEST_CASE("extract_patches on an exact multiple partitions the image") {
  std::mt19937_64 rng(1);
  const RgbImage img = testing::random_image(rng, 700, 700);
  const GridPlan plan = plan_grid(700, 700, 350);
  const auto patches = extract_patches(img, plan, "s");
  REQUIRE(patches.size() == 4);
  for (const auto& p : patches) {
    CHECK(p.scan_id == "s");
    for (Index y = 0; y < 350; y += 37)
      for (Index x = 0; x < 350; x += 41) CHECK(p.pixels.pixel(y, x) == img.pixel(p.row * 350 + y, p.col * 350 + x));
  }
  // row-major order
  CHECK(patches[1].row == 0);
  CHECK(patches[1].col == 1);
  CHECK(patches[2].row == 1);
  CHECK(stitch(patches, plan) == img);
}

TEST_CASE("padding is filled and cropped away") {
  std::mt19937_64 rng(2);
  const RgbImage img = testing::random_image(rng, 700, 800);
  const GridPlan plan = plan_grid(800, 700, 350);
  const auto patches = extract_patches(img, plan);
  REQUIRE(patches.size() == 6);
  const RgbImage& last_col = patches[2].pixels;  // (0, 2)
  bool all_fill = true;
  for (Index y = 0; y < 350; ++y)
    for (Index x = 100; x < 350; ++x) all_fill &= last_col.pixel(y, x) == kSlideBackground;
  CHECK(all_fill);
  const RgbImage back = stitch(patches, plan);
  CHECK(back.width() == 800);
  CHECK(back.height() == 700);
  CHECK(back == img);
}

TEST_CASE("single-patch plan") {
  std::mt19937_64 rng(3);
  const RgbImage img = testing::random_image(rng, 20, 30);
  const GridPlan plan = plan_grid(30, 20, 64);
  const auto patches = extract_patches(img, plan);
  REQUIRE(patches.size() == 1);
  for (Index y = 0; y < 20; ++y)
    for (Index x = 0; x < 30; ++x) CHECK(patches[0].pixels.pixel(y, x) == img.pixel(y, x));
  CHECK(patches[0].pixels.pixel(63, 63) == kSlideBackground);
}

TEST_CASE("stitch rejects bad inputs") {
  std::mt19937_64 rng(4);
  const RgbImage img = testing::random_image(rng, 700, 700);
  const GridPlan plan = plan_grid(700, 700, 350);
  auto patches = extract_patches(img, plan);
  auto three = patches;
  three.pop_back();
  CHECK_THROWS_AS(stitch(three, plan), std::invalid_argument);

  std::vector<RgbImage> wrong_extent(4, RgbImage(300, 350));
  CHECK_THROWS_AS(stitch(wrong_extent, plan), std::invalid_argument);

  auto duplicate = patches;
  duplicate[1].row = 0;
  duplicate[1].col = 0;
  CHECK_THROWS_AS(stitch(duplicate, plan), std::invalid_argument);

  CHECK_THROWS_AS(extract_patches(RgbImage(10, 10), plan), std::invalid_argument);
}

TEST_CASE("mask tiling round trip pads with Background") {
  std::mt19937_64 rng(5);
  const ClassMask m = testing::random_mask(rng, 70, 90, 6);
  const GridPlan plan = plan_grid(90, 70, 64);
  const auto parts = extract_mask_patches(m, plan);
  REQUIRE(parts.size() == 4);
  CHECK(parts[3](63, 63) == 0);
  CHECK((stitch(parts, plan) == m).all());
}

TEST_CASE("random round trips are bit exact") {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<Index> side(1, 300);
  for (int trial = 0; trial < 25; ++trial) {
    const Index h = side(rng), w = side(rng);
    const Index ps = trial % 2 ? 64 : 350;
    const RgbImage img = testing::random_image(rng, h, w);
    const GridPlan plan = plan_grid(w, h, ps);
    CHECK(stitch(extract_patches(img, plan), plan) == img);
    CHECK(plan.cols * ps - w == plan.pad_right);
    CHECK(plan.pad_bottom < ps);
  }
}

TEST_CASE("patch file names") { CHECK(patch_file_name("scanA", 2, 11) == "scanA_r2_c11.png"); }
