#include "gleason/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "gleason/random.hpp"

namespace gleason {

namespace fs = std::filesystem;

void SynthConfig::validate() const {
  if (num_scans < 1) throw std::invalid_argument("synth config: num_scans must be >= 1");
  if (patches_per_scan < 1) throw std::invalid_argument("synth config: patches_per_scan must be >= 1");
  if (patch_size < 32) throw std::invalid_argument("synth config: patch_size must be >= 32");
  if (blobs_per_patch < 0) throw std::invalid_argument("synth config: blobs_per_patch must be >= 0");
  double total = 0;
  for (double p : grade_distribution) {
    if (p < 0) throw std::invalid_argument("synth config: negative grade probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("synth config: grade_distribution sums to " + std::to_string(total));
  if (texture_contrast < 0 || texture_contrast > 1)
    throw std::invalid_argument("synth config: texture_contrast must lie in [0, 1]");
  if (test_fraction < 0 || test_fraction >= 1 || validation_fraction < 0 || validation_fraction >= 1)
    throw std::invalid_argument("synth config: split fractions must lie in [0, 1)");
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = {{"num_scans", c.num_scans},
       {"patches_per_scan", c.patches_per_scan},
       {"patch_size", c.patch_size},
       {"grade_distribution", c.grade_distribution},
       {"blobs_per_patch", c.blobs_per_patch},
       {"texture_seed", c.texture_seed},
       {"texture_contrast", c.texture_contrast},
       {"test_fraction", c.test_fraction},
       {"validation_fraction", c.validation_fraction}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  SynthConfig d;
  c.num_scans = j.value("num_scans", d.num_scans);
  c.patches_per_scan = j.value("patches_per_scan", d.patches_per_scan);
  c.patch_size = j.value("patch_size", d.patch_size);
  c.grade_distribution = j.value("grade_distribution", d.grade_distribution);
  c.blobs_per_patch = j.value("blobs_per_patch", d.blobs_per_patch);
  c.texture_seed = j.value("texture_seed", d.texture_seed);
  c.texture_contrast = j.value("texture_contrast", d.texture_contrast);
  c.test_fraction = j.value("test_fraction", d.test_fraction);
  c.validation_fraction = j.value("validation_fraction", d.validation_fraction);
  c.validate();
}

namespace {

struct Vec3 {
  double r, g, b;
};

Vec3 mix(Vec3 a, Vec3 b, double t) {
  return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

/// Bilinear value noise in [0, 1] on a lattice with the given cell size.
class ValueNoise {
 public:
  ValueNoise(SplitMix64& rng, Index size, double cell) : cell_(cell) {
    n_ = static_cast<Index>(std::ceil(double(size) / cell)) + 2;
    grid_.resize(static_cast<std::size_t>(n_ * n_));
    for (double& v : grid_) v = rng.uniform();
  }
  double operator()(double y, double x) const {
    const double fy = y / cell_, fx = x / cell_;
    const Index y0 = static_cast<Index>(fy), x0 = static_cast<Index>(fx);
    const double ty = fy - double(y0), tx = fx - double(x0);
    auto at = [&](Index r, Index c) { return grid_[static_cast<std::size_t>(r * n_ + c)]; };
    const double top = at(y0, x0) * (1 - tx) + at(y0, x0 + 1) * tx;
    const double bot = at(y0 + 1, x0) * (1 - tx) + at(y0 + 1, x0 + 1) * tx;
    return top * (1 - ty) + bot * ty;
  }

 private:
  double cell_;
  Index n_ = 0;
  std::vector<double> grid_;
};

constexpr Vec3 kStroma{236, 178, 206};
constexpr Vec3 kNucleus{70, 25, 105};
constexpr Vec3 kCommonTissue{170, 95, 180};

// Per-grade cytoplasm color and nuclear lattice period (pixels).
constexpr std::array<Vec3, kNumClasses> kGradeColor = {
    Vec3{0, 0, 0},       Vec3{226, 150, 236}, Vec3{196, 96, 150},
    Vec3{150, 120, 210}, Vec3{128, 60, 160},  Vec3{96, 40, 96}};
constexpr std::array<double, kNumClasses> kGradePeriod = {0, 11, 8.5, 6.5, 5, 4};

struct Blob {
  double cy, cx, radius, wobble, phase;
  int lobes;
  bool contains(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double theta = std::atan2(dy, dx);
    const double r = radius * (1.0 + wobble * std::sin(lobes * theta + phase));
    return dy * dy + dx * dx <= r * r;
  }
};

}  // namespace

std::uint64_t patch_seed(std::uint64_t texture_seed, const std::string& scan_id, Index row, Index col) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char ch : scan_id) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  SplitMix64 mix_rng(texture_seed ^ h);
  std::uint64_t s = mix_rng.next();
  s ^= static_cast<std::uint64_t>(row) * 0x9E3779B97F4A7C15ULL;
  s = SplitMix64(s).next();
  s ^= static_cast<std::uint64_t>(col) * 0xC2B2AE3D27D4EB4FULL;
  return SplitMix64(s).next();
}

SyntheticPatch generate_patch(std::uint64_t seed, const std::set<GradeGroup>& grades, Index patch_size,
                              double texture_contrast) {
  if (patch_size < 32) throw std::invalid_argument("generate_patch: patch_size must be >= 32");
  if (grades.count(GradeGroup::Background))
    throw std::invalid_argument("generate_patch: grades must be tumor grades only");
  if (texture_contrast < 0 || texture_contrast > 1)
    throw std::invalid_argument("generate_patch: texture_contrast must lie in [0, 1]");

  const Index s = patch_size;
  const double size = double(s);
  const std::vector<GradeGroup> wanted(grades.begin(), grades.end());
  const Index min_area = std::max<Index>(16, s * s / 60);

  SplitMix64 rng(seed);
  ClassMask mask;
  for (int attempt = 0;; ++attempt) {
    mask = ClassMask::Zero(s, s);
    std::vector<GradeGroup> order = wanted;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const double shrink = order.size() <= 2 ? 1.0 : std::sqrt(2.0 / double(order.size()));
    for (GradeGroup g : order) {
      Blob b{rng.uniform(0.2, 0.8) * size, rng.uniform(0.2, 0.8) * size,
             std::max(6.0, rng.uniform(0.15, 0.27) * size * shrink), rng.uniform(0.05, 0.2),
             rng.uniform(0.0, 6.283185307179586), 2 + int(rng.below(3))};
      for (Index y = 0; y < s; ++y)
        for (Index x = 0; x < s; ++x)
          if (b.contains(double(y) + 0.5, double(x) + 0.5)) mask(y, x) = static_cast<std::uint8_t>(g);
    }
    bool ok = (mask == 0).count() >= min_area;
    for (GradeGroup g : wanted) ok = ok && (mask == static_cast<std::uint8_t>(g)).count() >= min_area;
    if (ok) break;
    if (attempt > 200) throw std::runtime_error("generate_patch: could not place all grade regions");
  }

  ValueNoise coarse(rng, s, 24.0), fine(rng, s, 6.0);
  const double lattice_dy = rng.uniform(0, 10), lattice_dx = rng.uniform(0, 10);
  RgbImage image(s, s);
  for (Index y = 0; y < s; ++y)
    for (Index x = 0; x < s; ++x) {
      const double fy = double(y), fx = double(x);
      const double n1 = coarse(fy, fx) - 0.5, n2 = fine(fy, fx) - 0.5;
      const double grain = rng.uniform(-6, 6);
      Vec3 c;
      const int g = mask(y, x);
      if (g == 0) {
        c = {kStroma.r + 30 * n1 + 14 * n2, kStroma.g + 26 * n1 + 12 * n2, kStroma.b + 20 * n1 + 10 * n2};
      } else {
        const Vec3 base = mix(kCommonTissue, kGradeColor[static_cast<std::size_t>(g)], texture_contrast);
        c = {base.r + 16 * n1, base.g + 14 * n1, base.b + 16 * n1};
        // Nuclei on a slightly jittered lattice; the period encodes the grade.
        const double period = kGradePeriod[static_cast<std::size_t>(g)];
        const double jitter = 1.5 * n2;
        const double ly = std::fmod(fy + lattice_dy + jitter, period) - period / 2;
        const double lx = std::fmod(fx + lattice_dx - jitter, period) - period / 2;
        if (ly * ly + lx * lx < 0.09 * period * period) c = mix(c, kNucleus, 0.75);
      }
      image.set_pixel(y, x, {to_byte(c.r + grain), to_byte(c.g + grain), to_byte(c.b + grain)});
    }
  return {std::move(image), std::move(mask)};
}

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val" || name == "validation") return Split::Validation;
  if (name == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + name + "' (expected train, val, test)");
}

std::vector<const ManifestEntry*> DatasetManifest::select(Split split) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(&e);
  return out;
}

std::vector<std::string> DatasetManifest::scan_ids(Split split) const {
  std::vector<std::string> ids;
  for (const auto& e : entries)
    if (e.split == split && std::find(ids.begin(), ids.end(), e.scan_id) == ids.end())
      ids.push_back(e.scan_id);
  return ids;
}

GradeGroup DatasetManifest::scan_grade(const std::string& scan_id) const {
  GradeGroup best = GradeGroup::Background;
  bool found = false;
  for (const auto& e : entries) {
    if (e.scan_id != scan_id) continue;
    found = true;
    for (GradeGroup g : e.grades_present) best = std::max(best, g);
  }
  if (!found) throw std::invalid_argument("unknown scan id '" + scan_id + "'");
  return best;
}

SplitSizes split_sizes(int n, double test_fraction, double validation_fraction) {
  if (n < 1) throw std::invalid_argument("split: at least one scan is required");
  SplitSizes s;
  s.test = static_cast<int>(std::floor(test_fraction * n + 1e-9));
  if (test_fraction > 0) s.test = std::max(s.test, 1);
  s.test = std::min(s.test, n - 1);
  const int rest = n - s.test;
  s.validation = static_cast<int>(std::floor(validation_fraction * rest + 1e-9));
  if (validation_fraction > 0) s.validation = std::max(s.validation, 1);
  s.validation = std::min(s.validation, rest - 1);
  s.train = rest - s.validation;
  return s;
}

namespace {

std::pair<Index, Index> scan_grid_shape(int patches) {
  Index rows = 1;
  for (Index r = 1; r * r <= patches; ++r)
    if (patches % r == 0) rows = r;
  return {rows, patches / rows};
}

std::string scan_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scan%03d", i);
  return buf;
}

nlohmann::json entry_to_json(const ManifestEntry& e, const fs::path& root) {
  std::vector<std::string> grades;
  for (GradeGroup g : e.grades_present) grades.push_back(to_string(g));
  return {{"scan_id", e.scan_id},
          {"row", e.row},
          {"col", e.col},
          {"patch_path", fs::relative(e.patch_path, root).generic_string()},
          {"mask_path", fs::relative(e.mask_path, root).generic_string()},
          {"grades_present", grades},
          {"split", to_string(e.split)},
          {"grid", e.grid}};
}

}  // namespace

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest '" + path.string() + "'");
  const fs::path root = fs::absolute(path).parent_path();
  for (const auto& e : manifest.entries) out << entry_to_json(e, root).dump() << '\n';
  if (!out) throw std::runtime_error("failed writing manifest '" + path.string() + "'");
}

DatasetManifest generate_dataset(const SynthConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "patches", ec);
  fs::create_directories(out_dir / "masks", ec);
  if (ec || !fs::is_directory(out_dir / "patches") || !fs::is_directory(out_dir / "masks"))
    throw std::runtime_error("cannot create dataset directories under '" + out_dir.string() + "'");

  const SplitSizes sizes = split_sizes(cfg.num_scans, cfg.test_fraction, cfg.validation_fraction);
  std::vector<int> order(static_cast<std::size_t>(cfg.num_scans));
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 split_rng(cfg.texture_seed ^ 0x5851F42D4C957F2DULL);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[split_rng.below(i)]);
  std::vector<Split> scan_split(order.size(), Split::Train);
  for (int i = 0; i < sizes.test; ++i) scan_split[static_cast<std::size_t>(order[i])] = Split::Test;
  for (int i = sizes.test; i < sizes.test + sizes.validation; ++i)
    scan_split[static_cast<std::size_t>(order[i])] = Split::Validation;

  const auto [rows, cols] = scan_grid_shape(cfg.patches_per_scan);
  const GridPlan plan = plan_grid(cols * cfg.patch_size, rows * cfg.patch_size, cfg.patch_size);

  DatasetManifest manifest;
  manifest.root = fs::absolute(out_dir);
  for (int scan = 0; scan < cfg.num_scans; ++scan) {
    const std::string id = scan_name(scan);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) {
        const std::uint64_t seed = patch_seed(cfg.texture_seed, id, r, c);
        SplitMix64 pick(seed ^ 0xD1B54A32D192ED03ULL);
        std::set<GradeGroup> grades;
        for (int b = 0; b < cfg.blobs_per_patch; ++b) {
          const GradeGroup g = kAllGrades[pick.categorical(cfg.grade_distribution)];
          if (is_tumor(g)) grades.insert(g);
        }
        SyntheticPatch patch = generate_patch(seed, grades, cfg.patch_size, cfg.texture_contrast);
        ManifestEntry e;
        e.scan_id = id;
        e.row = r;
        e.col = c;
        e.patch_path = manifest.root / "patches" / patch_file_name(id, r, c);
        e.mask_path = manifest.root / "masks" / patch_file_name(id, r, c);
        e.grades_present.assign(grades.begin(), grades.end());
        e.split = scan_split[static_cast<std::size_t>(scan)];
        e.grid = plan;
        write_png(e.patch_path, patch.image);
        write_png(e.mask_path, mask_to_rgb(patch.mask));
        manifest.entries.push_back(std::move(e));
      }
  }
  save_manifest(manifest, manifest.root / "manifest.jsonl");
  return manifest;
}

ClassMask load_entry_mask(const ManifestEntry& entry) {
  ClassMask mask;
  try {
    mask = rgb_to_mask(read_png(entry.mask_path));
  } catch (const UnregisteredColorError& e) {
    throw UnregisteredColorError(e.color(), e.location(), "mask " + entry.mask_path.string());
  }
  for (GradeGroup g : entry.grades_present)
    if ((mask == static_cast<std::uint8_t>(g)).count() == 0)
      throw ManifestError(ManifestError::Kind::GradeMismatch,
                         "manifest entry " + patch_file_name(entry.scan_id, entry.row, entry.col) + " lists " + to_string(g) + " but its mask has no such pixels");
  return mask;
}

RgbImage load_entry_image(const ManifestEntry& entry) { return read_png(entry.patch_path); }

DatasetManifest load_manifest(const fs::path& path, ManifestCheck check) {
  std::ifstream in(path);
  if (!in) throw ManifestError(ManifestError::Kind::Unreadable, "manifest '" + path.string() + "' not found or unreadable");
  DatasetManifest manifest;
  manifest.root = fs::absolute(path).parent_path();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    ManifestEntry e;
    try {
      const auto j = nlohmann::json::parse(line);
      j.at("scan_id").get_to(e.scan_id);
      j.at("row").get_to(e.row);
      j.at("col").get_to(e.col);
      e.patch_path = manifest.root / j.at("patch_path").get<std::string>();
      e.mask_path = manifest.root / j.at("mask_path").get<std::string>();
      for (const auto& g : j.at("grades_present")) e.grades_present.push_back(grade_from_name(g.get<std::string>()));
      std::sort(e.grades_present.begin(), e.grades_present.end());
      e.split = split_from_name(j.at("split").get<std::string>());
      j.at("grid").get_to(e.grid);
    } catch (const std::exception& ex) {
      throw ManifestError(ManifestError::Kind::MalformedEntry, "malformed manifest entry at " + where + ": " + ex.what());
    }
    if (e.row < 0 || e.row >= e.grid.rows || e.col < 0 || e.col >= e.grid.cols)
      throw ManifestError(ManifestError::Kind::MalformedEntry,
                          "malformed manifest entry at " + where + ": patch index outside grid");
    const std::string name = patch_file_name(e.scan_id, e.row, e.col);
    if (!fs::exists(e.patch_path))
      throw ManifestError(ManifestError::Kind::MissingFile, "manifest entry " + name + " (" + where + "): missing patch file " +
                               e.patch_path.string());
    if (!fs::exists(e.mask_path))
      throw ManifestError(ManifestError::Kind::MissingFile, "manifest entry " + name + " (" + where + "): missing mask file " +
                               e.mask_path.string());
    manifest.entries.push_back(std::move(e));
  }
  // Splits are per scan, never per patch.
  for (const auto& a : manifest.entries)
    for (const auto& b : manifest.entries)
      if (a.scan_id == b.scan_id && a.split != b.split)
        throw ManifestError(ManifestError::Kind::SplitConflict, "scan " + a.scan_id + " appears in both " + to_string(a.split) + " and " +
                                 to_string(b.split) + " splits");
  if (check == ManifestCheck::Full)
    for (const auto& e : manifest.entries) load_entry_mask(e);
  return manifest;
}

SyntheticPatch assemble_scan(const DatasetManifest& manifest, const std::string& scan_id) {
  std::vector<const ManifestEntry*> parts;
  for (const auto& e : manifest.entries)
    if (e.scan_id == scan_id) parts.push_back(&e);
  if (parts.empty()) throw std::invalid_argument("unknown scan id '" + scan_id + "'");
  const GridPlan plan = parts.front()->grid;
  std::vector<PatchRecord> images;
  std::vector<ClassMask> masks(static_cast<std::size_t>(plan.patch_count()));
  for (const auto* e : parts) {
    images.push_back({e->scan_id, e->row, e->col, load_entry_image(*e)});
    masks[static_cast<std::size_t>(e->row * plan.cols + e->col)] = load_entry_mask(*e);
  }
  return {stitch(images, plan), stitch(masks, plan)};
}

}  // namespace gleason
