#pragma once

#include <doctest.h>

#include <filesystem>
#include <random>
#include <string>

#include "gleason/image.hpp"

namespace testing {

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("gleason_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline gleason::ClassMask random_mask(std::mt19937_64& rng, gleason::Index h, gleason::Index w, int classes) {
  gleason::ClassMask m(h, w);
  std::uniform_int_distribution<int> d(0, classes - 1);
  for (gleason::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<std::uint8_t>(d(rng));
  return m;
}

inline gleason::RgbImage random_image(std::mt19937_64& rng, gleason::Index h, gleason::Index w) {
  gleason::RgbImage img(h, w);
  std::uniform_int_distribution<int> d(0, 255);
  for (gleason::Index i = 0; i < img.storage().size(); ++i) img.storage().data()[i] = static_cast<std::uint8_t>(d(rng));
  return img;
}

}  // namespace testing
