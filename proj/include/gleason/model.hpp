#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <vector>

#include "gleason/image.hpp"
#include "gleason/losses.hpp"
#include "gleason/nn/layers.hpp"

namespace gleason {

/// Dilation factors of one atrous block: max(1, round(r - n/2 + i)), i = 0..n-1,
/// with ties rounded away from zero.
struct DilationSchedule {
  int base = 1;        // r
  int block_size = 1;  // n
  std::vector<int> factors;
};

DilationSchedule dilation_schedule(int base, int block_size);

struct ModelConfig {
  int in_channels = 3;
  int num_classes = kNumClasses;
  Index patch_size = 350;
  std::vector<Index> stage_widths{32, 64, 128, 256};
  std::vector<int> blocks_per_stage{3, 3, 3, 3};
  std::vector<int> base_dilations{1, 2, 3, 4};
  std::vector<Index> hd_scales{1, 2, 3, 6};
  std::uint64_t seed = 7;

  Index num_stages() const { return static_cast<Index>(stage_widths.size()); }
  /// Patch size rounded up to a multiple of 2^stages; inputs are reflect-padded to it.
  Index padded_size() const;
  /// Spatial size of the deepest encoder map, where the HD block runs.
  Index bottleneck_size() const { return padded_size() >> num_stages(); }
  /// Throws std::invalid_argument naming the first violated constraint.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

namespace nn {

/// conv3x3 -> ReLU -> conv3x3, plus the input (1x1-projected on a channel change).
template <typename Scalar>
class ResidualBlock {
 public:
  struct Cache {
    typename Conv2d<Scalar>::Cache a, b, proj;
    FeatureMap<Scalar> mid;
  };

  ResidualBlock() = default;
  ResidualBlock(const std::string& name, Index in, Index out);

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, Cache* cache = nullptr) const;
  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& grad, const Cache& cache);
  void initialize(std::mt19937_64& rng);
  void collect(std::vector<Parameter<Scalar>*>& out);
  void collect(std::vector<const Parameter<Scalar>*>& out) const;

  bool has_projection() const { return has_projection_; }
  Conv2d<Scalar>& inner_first() { return conv_a_; }
  Conv2d<Scalar>& inner_second() { return conv_b_; }
  Conv2d<Scalar>& projection() { return proj_; }

 private:
  Conv2d<Scalar> conv_a_, conv_b_, proj_;
  bool has_projection_ = false;
};

/// A cascade of 3x3 atrous convolutions (each followed by ReLU) whose
/// dilations follow a DilationSchedule.
template <typename Scalar>
class DilatedBlock {
 public:
  struct Cache {
    std::vector<typename Conv2d<Scalar>::Cache> convs;
    std::vector<FeatureMap<Scalar>> outputs;
  };

  DilatedBlock() = default;
  DilatedBlock(const std::string& name, Index channels, const DilationSchedule& schedule);

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, Cache* cache = nullptr) const;
  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& grad, const Cache& cache);
  void initialize(std::mt19937_64& rng);
  void collect(std::vector<Parameter<Scalar>*>& out);
  void collect(std::vector<const Parameter<Scalar>*>& out) const;

  const std::vector<Conv2d<Scalar>>& convs() const { return convs_; }

 private:
  std::vector<Conv2d<Scalar>> convs_;
};

/// Multi-scale decomposition of the deepest features: per scale s, average
/// pool to s x s, 1x1 conv to c / |scales| channels, ReLU, bilinear upsample;
/// all branches are concatenated after the input channels.
template <typename Scalar>
class HierarchicalDecomposition {
 public:
  struct Cache {
    std::vector<typename Conv2d<Scalar>::Cache> convs;
    std::vector<FeatureMap<Scalar>> branch;
    std::vector<Matrix<Scalar>> pool, upsample;
    Index channels = 0;
  };

  HierarchicalDecomposition() = default;
  HierarchicalDecomposition(const std::string& name, Index channels, std::vector<Index> scales);

  Index branch_channels() const { return branch_channels_; }
  Index output_channels() const { return channels_ + branch_channels_ * Index(scales_.size()); }
  const std::vector<Index>& scales() const { return scales_; }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, Cache* cache = nullptr) const;
  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& grad, const Cache& cache);
  void initialize(std::mt19937_64& rng);
  void collect(std::vector<Parameter<Scalar>*>& out);
  void collect(std::vector<const Parameter<Scalar>*>& out) const;

 private:
  Index channels_ = 0, branch_channels_ = 0;
  std::vector<Index> scales_;
  std::vector<Conv2d<Scalar>> convs_;
};

}  // namespace nn

/// Dilated residual encoder, hierarchical decomposition block and
/// additive-skip decoder, ending in a per-pixel softmax over the classes.
template <typename Scalar>
class SegmentationModel {
 public:
  using Map = nn::FeatureMap<Scalar>;
  using Param = nn::Parameter<Scalar>;

  /// Activations recorded by a training forward pass.
  struct Tape {
    Index height = 0, width = 0;  // unpadded input size
    std::vector<typename nn::ResidualBlock<Scalar>::Cache> residual;
    std::vector<typename nn::DilatedBlock<Scalar>::Cache> dilated;
    std::vector<typename nn::MaxPool2<Scalar>::Cache> pool;
    typename nn::HierarchicalDecomposition<Scalar>::Cache hd;
    std::vector<typename nn::Conv2d<Scalar>::Cache> align, fuse;
    std::vector<Map> decoder_out;
    typename nn::Conv2d<Scalar>::Cache head;
  };

  /// Builds the network and draws every parameter from the config seed.
  explicit SegmentationModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  /// Unnormalized class scores (classes x patch_size^2) for one patch with
  /// values in [0, 1]. Padding to a multiple of 2^stages is internal.
  Map logits(const Map& image, Tape* tape = nullptr) const;
  /// Per-pixel class probabilities.
  Map forward(const Map& image) const;
  std::vector<Map> forward(const std::vector<Map>& batch) const;

  /// Back-propagates a gradient on the logits, accumulating into each
  /// parameter's grad.
  void backward(const Map& grad_logits, const Tape& tape);
  void zero_grad();

  std::vector<Param*> parameters();
  std::vector<const Param*> parameters() const;
  Index parameter_count() const;

  nn::ResidualBlock<Scalar>& residual_block(Index stage) { return residual_[stage]; }
  const nn::DilatedBlock<Scalar>& dilated_block(Index stage) const { return dilated_[stage]; }
  const nn::HierarchicalDecomposition<Scalar>& decomposition() const { return hd_; }

 private:
  ModelConfig config_;
  std::vector<nn::ResidualBlock<Scalar>> residual_;
  std::vector<nn::DilatedBlock<Scalar>> dilated_;
  nn::HierarchicalDecomposition<Scalar> hd_;
  std::vector<nn::Conv2d<Scalar>> align_, fuse_;  // decoder: 1x1 to the skip width, then 3x3 after the sum
  nn::Conv2d<Scalar> head_;
};

/// Patch pixels scaled to [0, 1] as a 3 x (h*w) map.
template <typename Scalar>
nn::FeatureMap<Scalar> image_to_features(const RgbImage& image);

/// One-hot classes x pixels matrix from a class mask.
template <typename Scalar>
nn::Matrix<Scalar> one_hot(const ClassMask& mask, int num_classes);

/// Per-pixel argmax of a classes x pixels map.
template <typename Scalar>
ClassMask argmax_mask(const nn::FeatureMap<Scalar>& probabilities);

/// Runs forward + loss + backward for one example, adding `scale` times the
/// gradient to the model's parameter grads. Returns the example loss.
template <typename Scalar>
Scalar accumulate_example_gradient(SegmentationModel<Scalar>& model,
                                   const nn::FeatureMap<Scalar>& image,
                                   const nn::Matrix<Scalar>& truth, LossKind kind,
                                   const LossWeights& weights, Scalar scale);

extern template class SegmentationModel<float>;
extern template class SegmentationModel<double>;

}  // namespace gleason
