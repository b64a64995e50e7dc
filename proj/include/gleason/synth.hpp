#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "gleason/image.hpp"
#include "gleason/tiling.hpp"

namespace gleason {

struct SynthConfig {
  int num_scans = 10;
  int patches_per_scan = 4;
  Index patch_size = 64;
  /// Probability of each grade (Background first) for every blob draw.
  std::array<double, kNumClasses> grade_distribution{0.2, 0.16, 0.16, 0.16, 0.16, 0.16};
  int blobs_per_patch = 2;
  std::uint64_t texture_seed = 1;
  /// 0 makes every grade share one tissue color; 1 gives fully distinct colors.
  double texture_contrast = 1.0;
  double test_fraction = 0.2;
  double validation_fraction = 0.2;

  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

struct SyntheticPatch {
  RgbImage image;
  ClassMask mask;
};

/// Procedural H&E-like patch: pink noise stroma plus one smooth blob per
/// requested grade, each with a grade-specific color and dot texture. The
/// mask holds exactly Background plus the requested grades.
SyntheticPatch generate_patch(std::uint64_t seed, const std::set<GradeGroup>& grades, Index patch_size,
                              double texture_contrast = 1.0);

/// Per-patch seed derived from (texture_seed, scan_id, row, col).
std::uint64_t patch_seed(std::uint64_t texture_seed, const std::string& scan_id, Index row, Index col);

enum class Split { Train, Validation, Test };
std::string to_string(Split s);
Split split_from_name(const std::string& name);

struct ManifestEntry {
  std::string scan_id;
  Index row = 0;
  Index col = 0;
  std::filesystem::path patch_path;  // absolute once loaded
  std::filesystem::path mask_path;
  std::vector<GradeGroup> grades_present;  // tumor grades, ascending
  Split split = Split::Train;
  GridPlan grid;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> select(Split split) const;
  std::vector<std::string> scan_ids(Split split) const;
  /// Highest tumor grade over a scan's patches (Background when none).
  GradeGroup scan_grade(const std::string& scan_id) const;
};

/// Scan-level split sizes: test = floor(f_test * n), validation =
/// floor(f_val * (n - test)); each is at least one when its fraction is
/// positive, and at least one scan is left for training.
struct SplitSizes {
  int train = 0, validation = 0, test = 0;
};
SplitSizes split_sizes(int num_scans, double test_fraction, double validation_fraction);

/// Writes `{out}/patches/*.png`, `{out}/masks/*.png` and `{out}/manifest.jsonl`.
DatasetManifest generate_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir);

/// Manifest problems other than unregistered mask colors (those raise
/// UnregisteredColorError).
class ManifestError : public std::runtime_error {
 public:
  enum class Kind { Unreadable, MalformedEntry, MissingFile, SplitConflict, GradeMismatch };
  ManifestError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

enum class ManifestCheck { Files, Full };

/// Parses a JSON-lines manifest. `Files` checks structure and file presence;
/// `Full` also decodes every mask, rejecting unregistered colors and grades
/// listed but absent from the mask.
DatasetManifest load_manifest(const std::filesystem::path& path, ManifestCheck check = ManifestCheck::Files);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Reads and decodes an entry's mask, verifying grades_present.
ClassMask load_entry_mask(const ManifestEntry& entry);
RgbImage load_entry_image(const ManifestEntry& entry);

/// Assembles a whole synthetic scan (image + mask) from its manifest patches.
SyntheticPatch assemble_scan(const DatasetManifest& manifest, const std::string& scan_id);

}  // namespace gleason
