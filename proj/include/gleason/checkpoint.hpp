#pragma once

#include <filesystem>
#include <optional>

#include "gleason/model.hpp"

namespace gleason {

/// Binary checkpoint: magic "GLEASONC", format version, the ModelConfig as
/// JSON, then every parameter as (name, dtype tag, rows, cols, raw values).
template <typename Scalar>
void save_checkpoint(const SegmentationModel<Scalar>& model, const std::filesystem::path& path);

/// Reads only the stored config.
ModelConfig read_checkpoint_config(const std::filesystem::path& path);

/// Rebuilds the model from a checkpoint. When `expected` is given, a config
/// that differs from it is an error. Values stored in another precision are
/// converted.
template <typename Scalar>
SegmentationModel<Scalar> load_checkpoint(const std::filesystem::path& path,
                                          const std::optional<ModelConfig>& expected = std::nullopt);

extern template void save_checkpoint<float>(const SegmentationModel<float>&, const std::filesystem::path&);
extern template void save_checkpoint<double>(const SegmentationModel<double>&, const std::filesystem::path&);
extern template SegmentationModel<float> load_checkpoint<float>(const std::filesystem::path&,
                                                                const std::optional<ModelConfig>&);
extern template SegmentationModel<double> load_checkpoint<double>(const std::filesystem::path&,
                                                                  const std::optional<ModelConfig>&);

}  // namespace gleason
