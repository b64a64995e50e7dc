#include "gleason/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace gleason {

namespace {

constexpr char kMagic[8] = {'G', 'L', 'E', 'A', 'S', 'O', 'N', 'C'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
  T v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
    throw std::runtime_error("checkpoint " + path.string() + ": truncated file");
  return v;
}

std::string get_string(std::istream& is, const std::filesystem::path& path) {
  const auto n = get<std::uint64_t>(is, path);
  if (n > (std::uint64_t(1) << 30)) throw std::runtime_error("checkpoint " + path.string() + ": corrupt length");
  std::string s(n, '\0');
  if (!is.read(s.data(), std::streamsize(n)))
    throw std::runtime_error("checkpoint " + path.string() + ": truncated file");
  return s;
}

std::ifstream open_checked(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint " + path.string() + ": cannot open");
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint " + path.string() + ": not a checkpoint file");
  const auto version = get<std::uint32_t>(is, path);
  if (version != kVersion)
    throw std::runtime_error("checkpoint " + path.string() + ": unsupported version " + std::to_string(version));
  return is;
}

template <typename Scalar>
constexpr std::uint8_t dtype_tag() {
  return sizeof(Scalar);
}

template <typename Dst, typename Src>
void read_values(std::istream& is, nn::Matrix<Dst>& dst, const std::filesystem::path& path) {
  nn::Matrix<Src> tmp(dst.rows(), dst.cols());
  if (!is.read(reinterpret_cast<char*>(tmp.data()), std::streamsize(tmp.size() * sizeof(Src))))
    throw std::runtime_error("checkpoint " + path.string() + ": truncated file");
  dst = tmp.template cast<Dst>();
}

}  // namespace

template <typename Scalar>
void save_checkpoint(const SegmentationModel<Scalar>& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint " + path.string() + ": cannot open for writing");
  os.write(kMagic, 8);
  put(os, kVersion);
  const std::string config = nlohmann::json(model.config()).dump();
  put<std::uint64_t>(os, config.size());
  os.write(config.data(), std::streamsize(config.size()));
  const auto params = model.parameters();
  put<std::uint64_t>(os, params.size());
  for (const auto* p : params) {
    put<std::uint64_t>(os, p->name.size());
    os.write(p->name.data(), std::streamsize(p->name.size()));
    put(os, dtype_tag<Scalar>());
    put<std::int64_t>(os, p->value.rows());
    put<std::int64_t>(os, p->value.cols());
    os.write(reinterpret_cast<const char*>(p->value.data()), std::streamsize(p->value.size() * sizeof(Scalar)));
  }
  if (!os) throw std::runtime_error("checkpoint " + path.string() + ": write failed");
}

ModelConfig read_checkpoint_config(const std::filesystem::path& path) {
  auto is = open_checked(path);
  try {
    return nlohmann::json::parse(get_string(is, path)).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint " + path.string() + ": bad config: " + e.what());
  }
}

template <typename Scalar>
SegmentationModel<Scalar> load_checkpoint(const std::filesystem::path& path,
                                          const std::optional<ModelConfig>& expected) {
  auto is = open_checked(path);
  ModelConfig config;
  try {
    config = nlohmann::json::parse(get_string(is, path)).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint " + path.string() + ": bad config: " + e.what());
  }
  if (expected && !(*expected == config))
    throw std::invalid_argument("checkpoint " + path.string() + ": stored model config " +
                                nlohmann::json(config).dump() + " does not match " +
                                nlohmann::json(*expected).dump());
  SegmentationModel<Scalar> model(config);
  auto params = model.parameters();
  const auto count = get<std::uint64_t>(is, path);
  if (count != params.size())
    throw std::runtime_error("checkpoint " + path.string() + ": holds " + std::to_string(count) +
                             " parameters, model has " + std::to_string(params.size()));
  for (auto* p : params) {
    const std::string name = get_string(is, path);
    if (name != p->name)
      throw std::runtime_error("checkpoint " + path.string() + ": expected parameter " + p->name + ", found " + name);
    const auto tag = get<std::uint8_t>(is, path);
    const auto rows = get<std::int64_t>(is, path), cols = get<std::int64_t>(is, path);
    if (rows != p->value.rows() || cols != p->value.cols())
      throw std::runtime_error("checkpoint " + path.string() + ": parameter " + name + " has the wrong shape");
    if (tag == 4)
      read_values<Scalar, float>(is, p->value, path);
    else if (tag == 8)
      read_values<Scalar, double>(is, p->value, path);
    else
      throw std::runtime_error("checkpoint " + path.string() + ": unknown dtype tag " + std::to_string(tag));
  }
  return model;
}

template void save_checkpoint<float>(const SegmentationModel<float>&, const std::filesystem::path&);
template void save_checkpoint<double>(const SegmentationModel<double>&, const std::filesystem::path&);
template SegmentationModel<float> load_checkpoint<float>(const std::filesystem::path&,
                                                         const std::optional<ModelConfig>&);
template SegmentationModel<double> load_checkpoint<double>(const std::filesystem::path&,
                                                           const std::optional<ModelConfig>&);

}  // namespace gleason
