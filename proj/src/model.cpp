#include "gleason/model.hpp"

#include <cmath>
#include <stdexcept>

namespace gleason {

DilationSchedule dilation_schedule(int base, int block_size) {
  if (base < 1) throw std::invalid_argument("dilation_schedule: r must be >= 1, got " + std::to_string(base));
  if (block_size < 1)
    throw std::invalid_argument("dilation_schedule: n must be >= 1, got " + std::to_string(block_size));
  DilationSchedule s{base, block_size, {}};
  s.factors.reserve(static_cast<std::size_t>(block_size));
  for (int i = 0; i < block_size; ++i) {
    // std::round breaks .5 ties away from zero; n/2 is exact in double.
    const double raw = std::round(double(base) - double(block_size) / 2.0 + double(i));
    s.factors.push_back(std::max(1, static_cast<int>(raw)));
  }
  return s;
}

Index ModelConfig::padded_size() const {
  const Index step = Index(1) << num_stages();
  return ((patch_size + step - 1) / step) * step;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("model config: " + what); };
  if (in_channels < 1) fail("in_channels must be >= 1");
  if (num_classes < 2) fail("num_classes must be >= 2");
  if (stage_widths.size() < 2) fail("at least two encoder stages are required");
  if (base_dilations.size() != stage_widths.size())
    fail("base_dilations must have one entry per stage (" + std::to_string(stage_widths.size()) + ")");
  if (blocks_per_stage.size() != stage_widths.size())
    fail("blocks_per_stage must have one entry per stage (" + std::to_string(stage_widths.size()) + ")");
  for (Index w : stage_widths)
    if (w < 1) fail("stage widths must be positive");
  for (int r : base_dilations)
    if (r < 1) fail("base dilations must be >= 1");
  for (int n : blocks_per_stage)
    if (n < 1) fail("blocks_per_stage entries must be >= 1");
  if (patch_size < 1) fail("patch_size must be positive");
  if (padded_size() - patch_size >= patch_size)
    fail("patch_size " + std::to_string(patch_size) + " is too small for " +
         std::to_string(num_stages()) + " stages");
  if (hd_scales.empty()) fail("hd_scales must not be empty");
  const Index bottleneck = bottleneck_size();
  for (Index s : hd_scales)
    if (s < 1 || s > bottleneck)
      fail("hd scale " + std::to_string(s) + " does not fit the " + std::to_string(bottleneck) + "x" +
           std::to_string(bottleneck) + " encoder output");
  if (stage_widths.back() / Index(hd_scales.size()) < 1)
    fail("too many hd scales for the bottleneck width");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"in_channels", c.in_channels},
       {"num_classes", c.num_classes},
       {"patch_size", c.patch_size},
       {"stage_widths", c.stage_widths},
       {"blocks_per_stage", c.blocks_per_stage},
       {"base_dilations", c.base_dilations},
       {"hd_scales", c.hd_scales},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.in_channels = j.value("in_channels", d.in_channels);
  c.num_classes = j.value("num_classes", d.num_classes);
  c.patch_size = j.value("patch_size", d.patch_size);
  c.stage_widths = j.value("stage_widths", d.stage_widths);
  c.base_dilations = j.value("base_dilations", d.base_dilations);
  if (j.contains("blocks_per_stage")) {
    c.blocks_per_stage = j.at("blocks_per_stage").get<std::vector<int>>();
  } else {
    c.blocks_per_stage.assign(c.stage_widths.size(), 3);
  }
  c.hd_scales = j.value("hd_scales", d.hd_scales);
  c.seed = j.value("seed", d.seed);
  c.validate();
}

namespace nn {

// ---- ResidualBlock

template <typename Scalar>
ResidualBlock<Scalar>::ResidualBlock(const std::string& name, Index in, Index out)
    : conv_a_(name + ".conv_a", in, out, 3), conv_b_(name + ".conv_b", out, out, 3),
      has_projection_(in != out) {
  if (has_projection_) proj_ = Conv2d<Scalar>(name + ".proj", in, out, 1);
}

template <typename Scalar>
FeatureMap<Scalar> ResidualBlock<Scalar>::forward(const FeatureMap<Scalar>& x, Cache* cache) const {
  FeatureMap<Scalar> mid = conv_a_.forward(x, cache ? &cache->a : nullptr);
  relu_inplace(mid);
  FeatureMap<Scalar> out = conv_b_.forward(mid, cache ? &cache->b : nullptr);
  if (has_projection_)
    out.values += proj_.forward(x, cache ? &cache->proj : nullptr).values;
  else
    out.values += x.values;
  if (cache) cache->mid = std::move(mid);
  return out;
}

template <typename Scalar>
FeatureMap<Scalar> ResidualBlock<Scalar>::backward(const FeatureMap<Scalar>& grad, const Cache& cache) {
  FeatureMap<Scalar> g_mid = conv_b_.backward(grad, cache.b);
  relu_backward_inplace(g_mid, cache.mid);
  FeatureMap<Scalar> g_in = conv_a_.backward(g_mid, cache.a);
  if (has_projection_)
    g_in.values += proj_.backward(grad, cache.proj).values;
  else
    g_in.values += grad.values;
  return g_in;
}

template <typename Scalar>
void ResidualBlock<Scalar>::initialize(std::mt19937_64& rng) {
  conv_a_.initialize(rng);
  conv_b_.initialize(rng);
  if (has_projection_) proj_.initialize(rng);
}

template <typename Scalar>
void ResidualBlock<Scalar>::collect(std::vector<Parameter<Scalar>*>& out) {
  conv_a_.collect(out);
  conv_b_.collect(out);
  if (has_projection_) proj_.collect(out);
}

template <typename Scalar>
void ResidualBlock<Scalar>::collect(std::vector<const Parameter<Scalar>*>& out) const {
  conv_a_.collect(out);
  conv_b_.collect(out);
  if (has_projection_) proj_.collect(out);
}

// ---- DilatedBlock

template <typename Scalar>
DilatedBlock<Scalar>::DilatedBlock(const std::string& name, Index channels,
                                   const DilationSchedule& schedule) {
  for (std::size_t i = 0; i < schedule.factors.size(); ++i)
    convs_.emplace_back(name + ".conv" + std::to_string(i), channels, channels, 3, schedule.factors[i]);
}

template <typename Scalar>
FeatureMap<Scalar> DilatedBlock<Scalar>::forward(const FeatureMap<Scalar>& x, Cache* cache) const {
  if (cache) {
    cache->convs.assign(convs_.size(), {});
    cache->outputs.assign(convs_.size(), {});
  }
  FeatureMap<Scalar> cur = x;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    cur = convs_[i].forward(cur, cache ? &cache->convs[i] : nullptr);
    relu_inplace(cur);
    if (cache) cache->outputs[i] = cur;
  }
  return cur;
}

template <typename Scalar>
FeatureMap<Scalar> DilatedBlock<Scalar>::backward(const FeatureMap<Scalar>& grad, const Cache& cache) {
  FeatureMap<Scalar> g = grad;
  for (std::size_t i = convs_.size(); i-- > 0;) {
    relu_backward_inplace(g, cache.outputs[i]);
    g = convs_[i].backward(g, cache.convs[i]);
  }
  return g;
}

template <typename Scalar>
void DilatedBlock<Scalar>::initialize(std::mt19937_64& rng) {
  for (auto& c : convs_) c.initialize(rng);
}

template <typename Scalar>
void DilatedBlock<Scalar>::collect(std::vector<Parameter<Scalar>*>& out) {
  for (auto& c : convs_) c.collect(out);
}

template <typename Scalar>
void DilatedBlock<Scalar>::collect(std::vector<const Parameter<Scalar>*>& out) const {
  for (const auto& c : convs_) c.collect(out);
}

// ---- HierarchicalDecomposition

template <typename Scalar>
HierarchicalDecomposition<Scalar>::HierarchicalDecomposition(const std::string& name, Index channels,
                                                             std::vector<Index> scales)
    : channels_(channels), scales_(std::move(scales)) {
  if (scales_.empty()) throw std::invalid_argument(name + ": at least one scale is required");
  branch_channels_ = channels_ / Index(scales_.size());
  if (branch_channels_ < 1) throw std::invalid_argument(name + ": too many scales for the channel count");
  for (std::size_t i = 0; i < scales_.size(); ++i) {
    if (scales_[i] < 1) throw std::invalid_argument(name + ": scales must be positive");
    convs_.emplace_back(name + ".branch" + std::to_string(i), channels_, branch_channels_, 1);
  }
}

template <typename Scalar>
FeatureMap<Scalar> HierarchicalDecomposition<Scalar>::forward(const FeatureMap<Scalar>& x,
                                                              Cache* cache) const {
  if (x.channels() != channels_)
    throw std::invalid_argument("hierarchical decomposition: expected " + std::to_string(channels_) +
                                " channels, got " + std::to_string(x.channels()));
  for (Index s : scales_)
    if (s > std::min(x.height, x.width))
      throw std::invalid_argument("hierarchical decomposition: scale " + std::to_string(s) +
                                  " exceeds the " + std::to_string(x.height) + "x" +
                                  std::to_string(x.width) + " feature map");
  const std::size_t nb = scales_.size();
  if (cache) {
    cache->convs.assign(nb, {});
    cache->branch.assign(nb, {});
    cache->pool.assign(nb, {});
    cache->upsample.assign(nb, {});
    cache->channels = channels_;
  }
  FeatureMap<Scalar> out(output_channels(), x.height, x.width);
  out.values.topRows(channels_) = x.values;
  for (std::size_t b = 0; b < nb; ++b) {
    const Index s = scales_[b];
    Matrix<Scalar> pool = adaptive_pool_matrix<Scalar>(x.height, x.width, s);
    Matrix<Scalar> up = bilinear_upsample_matrix<Scalar>(s, x.height, x.width);
    FeatureMap<Scalar> pooled(s, s, x.values * pool.transpose());
    FeatureMap<Scalar> y = convs_[b].forward(pooled, cache ? &cache->convs[b] : nullptr);
    relu_inplace(y);
    out.values.middleRows(channels_ + Index(b) * branch_channels_, branch_channels_).noalias() =
        y.values * up.transpose();
    if (cache) {
      cache->branch[b] = std::move(y);
      cache->pool[b] = std::move(pool);
      cache->upsample[b] = std::move(up);
    }
  }
  return out;
}

template <typename Scalar>
FeatureMap<Scalar> HierarchicalDecomposition<Scalar>::backward(const FeatureMap<Scalar>& grad,
                                                               const Cache& cache) {
  FeatureMap<Scalar> g_in(channels_, grad.height, grad.width);
  g_in.values = grad.values.topRows(channels_);
  for (std::size_t b = 0; b < scales_.size(); ++b) {
    const Index s = scales_[b];
    FeatureMap<Scalar> g_branch(
        s, s,
        grad.values.middleRows(channels_ + Index(b) * branch_channels_, branch_channels_) *
            cache.upsample[b]);
    relu_backward_inplace(g_branch, cache.branch[b]);
    FeatureMap<Scalar> g_pooled = convs_[b].backward(g_branch, cache.convs[b]);
    g_in.values.noalias() += g_pooled.values * cache.pool[b];
  }
  return g_in;
}

template <typename Scalar>
void HierarchicalDecomposition<Scalar>::initialize(std::mt19937_64& rng) {
  for (auto& c : convs_) c.initialize(rng);
}

template <typename Scalar>
void HierarchicalDecomposition<Scalar>::collect(std::vector<Parameter<Scalar>*>& out) {
  for (auto& c : convs_) c.collect(out);
}

template <typename Scalar>
void HierarchicalDecomposition<Scalar>::collect(std::vector<const Parameter<Scalar>*>& out) const {
  for (const auto& c : convs_) c.collect(out);
}

template class ResidualBlock<float>;
template class ResidualBlock<double>;
template class DilatedBlock<float>;
template class DilatedBlock<double>;
template class HierarchicalDecomposition<float>;
template class HierarchicalDecomposition<double>;

}  // namespace nn

// ---- SegmentationModel

namespace {

template <typename Scalar>
nn::FeatureMap<Scalar> reflect_pad(const nn::FeatureMap<Scalar>& x, Index size) {
  if (x.height == size && x.width == size) return x;
  nn::FeatureMap<Scalar> out(x.channels(), size, size);
  auto reflect = [](Index i, Index n) { return i < n ? i : 2 * (n - 1) - i; };
  for (Index y = 0; y < size; ++y) {
    const Index sy = reflect(y, x.height);
    for (Index xx = 0; xx < size; ++xx)
      out.values.col(y * size + xx) = x.values.col(sy * x.width + reflect(xx, x.width));
  }
  return out;
}

template <typename Scalar>
nn::FeatureMap<Scalar> crop(const nn::FeatureMap<Scalar>& x, Index h, Index w) {
  if (x.height == h && x.width == w) return x;
  nn::FeatureMap<Scalar> out(x.channels(), h, w);
  for (Index y = 0; y < h; ++y) out.values.middleCols(y * w, w) = x.values.middleCols(y * x.width, w);
  return out;
}

template <typename Scalar>
nn::FeatureMap<Scalar> uncrop(const nn::FeatureMap<Scalar>& g, Index size) {
  if (g.height == size && g.width == size) return g;
  nn::FeatureMap<Scalar> out(g.channels(), size, size);
  out.values.setZero();
  for (Index y = 0; y < g.height; ++y)
    out.values.middleCols(y * size, g.width) = g.values.middleCols(y * g.width, g.width);
  return out;
}

}  // namespace

template <typename Scalar>
SegmentationModel<Scalar>::SegmentationModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const Index stages = config_.num_stages();
  Index in = config_.in_channels;
  for (Index k = 0; k < stages; ++k) {
    const Index w = config_.stage_widths[k];
    const std::string prefix = "encoder" + std::to_string(k);
    residual_.emplace_back(prefix + ".residual", in, w);
    dilated_.emplace_back(prefix + ".dilated", w,
                          dilation_schedule(config_.base_dilations[k], config_.blocks_per_stage[k]));
    in = w;
  }
  hd_ = nn::HierarchicalDecomposition<Scalar>("decomposition", in, config_.hd_scales);
  in = hd_.output_channels();
  for (Index k = stages; k-- > 0;) {
    const Index w = config_.stage_widths[k];
    const std::string prefix = "decoder" + std::to_string(stages - 1 - k);
    align_.emplace_back(prefix + ".align", in, w, 1);
    fuse_.emplace_back(prefix + ".fuse", w, w, 3);
    in = w;
  }
  head_ = nn::Conv2d<Scalar>("head", in, config_.num_classes, 1);

  std::mt19937_64 rng(config_.seed);
  for (Index k = 0; k < stages; ++k) {
    residual_[k].initialize(rng);
    dilated_[k].initialize(rng);
  }
  hd_.initialize(rng);
  for (Index d = 0; d < stages; ++d) {
    align_[d].initialize(rng);
    fuse_[d].initialize(rng);
  }
  head_.initialize(rng, 2.7e-3);  // near-uniform softmax at init
}

template <typename Scalar>
typename SegmentationModel<Scalar>::Map SegmentationModel<Scalar>::logits(const Map& image,
                                                                          Tape* tape) const {
  if (image.channels() != config_.in_channels)
    throw std::invalid_argument("forward: expected " + std::to_string(config_.in_channels) +
                                " input channels, got " + std::to_string(image.channels()));
  if (image.height != config_.patch_size || image.width != config_.patch_size)
    throw std::invalid_argument("forward: input is " + std::to_string(image.width) + "x" +
                                std::to_string(image.height) + " but the model expects " +
                                std::to_string(config_.patch_size) + "x" +
                                std::to_string(config_.patch_size) + " patches");
  const Index stages = config_.num_stages();
  if (tape) {
    tape->height = image.height;
    tape->width = image.width;
    tape->residual.assign(stages, {});
    tape->dilated.assign(stages, {});
    tape->pool.assign(stages, {});
    tape->align.assign(stages, {});
    tape->fuse.assign(stages, {});
    tape->decoder_out.assign(stages, {});
  }

  std::vector<Map> skips;
  skips.reserve(stages);
  Map x = reflect_pad(image, config_.padded_size());
  for (Index k = 0; k < stages; ++k) {
    x = residual_[k].forward(x, tape ? &tape->residual[k] : nullptr);
    x = dilated_[k].forward(x, tape ? &tape->dilated[k] : nullptr);
    skips.push_back(x);
    x = nn::MaxPool2<Scalar>::forward(x, tape ? &tape->pool[k] : nullptr);
  }
  x = hd_.forward(x, tape ? &tape->hd : nullptr);
  for (Index d = 0; d < stages; ++d) {
    x = align_[d].forward(nn::upsample_nearest2(x), tape ? &tape->align[d] : nullptr);
    x.values += skips[stages - 1 - d].values;
    x = fuse_[d].forward(x, tape ? &tape->fuse[d] : nullptr);
    nn::relu_inplace(x);
    if (tape) tape->decoder_out[d] = x;
  }
  x = head_.forward(x, tape ? &tape->head : nullptr);
  return crop(x, image.height, image.width);
}

template <typename Scalar>
typename SegmentationModel<Scalar>::Map SegmentationModel<Scalar>::forward(const Map& image) const {
  Map z = logits(image);
  return Map(z.height, z.width, softmax(z.values));
}

template <typename Scalar>
std::vector<typename SegmentationModel<Scalar>::Map> SegmentationModel<Scalar>::forward(
    const std::vector<Map>& batch) const {
  std::vector<Map> out;
  out.reserve(batch.size());
  for (const auto& image : batch) out.push_back(forward(image));
  return out;
}

template <typename Scalar>
void SegmentationModel<Scalar>::backward(const Map& grad_logits, const Tape& tape) {
  const Index stages = config_.num_stages();
  Map g = head_.backward(uncrop(grad_logits, config_.padded_size()), tape.head);
  std::vector<Map> skip_grads(stages);
  for (Index d = stages; d-- > 0;) {
    nn::relu_backward_inplace(g, tape.decoder_out[d]);
    g = fuse_[d].backward(g, tape.fuse[d]);
    skip_grads[stages - 1 - d] = g;
    g = nn::upsample_nearest2_backward(align_[d].backward(g, tape.align[d]));
  }
  g = hd_.backward(g, tape.hd);
  for (Index k = stages; k-- > 0;) {
    g = nn::MaxPool2<Scalar>::backward(g, tape.pool[k]);
    g.values += skip_grads[k].values;
    g = dilated_[k].backward(g, tape.dilated[k]);
    g = residual_[k].backward(g, tape.residual[k]);
  }
}

template <typename Scalar>
void SegmentationModel<Scalar>::zero_grad() {
  for (Param* p : parameters()) p->grad.setZero();
}

template <typename Scalar>
std::vector<typename SegmentationModel<Scalar>::Param*> SegmentationModel<Scalar>::parameters() {
  std::vector<Param*> out;
  for (Index k = 0; k < config_.num_stages(); ++k) {
    residual_[k].collect(out);
    dilated_[k].collect(out);
  }
  hd_.collect(out);
  for (Index d = 0; d < config_.num_stages(); ++d) {
    align_[d].collect(out);
    fuse_[d].collect(out);
  }
  head_.collect(out);
  return out;
}

template <typename Scalar>
std::vector<const typename SegmentationModel<Scalar>::Param*> SegmentationModel<Scalar>::parameters()
    const {
  std::vector<const Param*> out;
  for (Index k = 0; k < config_.num_stages(); ++k) {
    residual_[k].collect(out);
    dilated_[k].collect(out);
  }
  hd_.collect(out);
  for (Index d = 0; d < config_.num_stages(); ++d) {
    align_[d].collect(out);
    fuse_[d].collect(out);
  }
  head_.collect(out);
  return out;
}

template <typename Scalar>
Index SegmentationModel<Scalar>::parameter_count() const {
  Index n = 0;
  for (const Param* p : parameters()) n += p->value.size();
  return n;
}

template <typename Scalar>
nn::FeatureMap<Scalar> image_to_features(const RgbImage& image) {
  nn::FeatureMap<Scalar> f(3, image.height(), image.width());
  for (Index r = 0; r < image.height(); ++r)
    for (Index c = 0; c < image.width(); ++c)
      for (int ch = 0; ch < 3; ++ch)
        f.values(ch, r * image.width() + c) = Scalar(image.at(r, c, ch)) / Scalar(255);
  return f;
}

template <typename Scalar>
nn::Matrix<Scalar> one_hot(const ClassMask& mask, int num_classes) {
  nn::Matrix<Scalar> t = nn::Matrix<Scalar>::Zero(num_classes, mask.size());
  for (Index r = 0; r < mask.rows(); ++r)
    for (Index c = 0; c < mask.cols(); ++c) {
      const int k = mask(r, c);
      if (k >= num_classes)
        throw std::invalid_argument("one_hot: class " + std::to_string(k) + " at (" + std::to_string(r) +
                                    ", " + std::to_string(c) + ") is out of range");
      t(k, r * mask.cols() + c) = Scalar(1);
    }
  return t;
}

template <typename Scalar>
ClassMask argmax_mask(const nn::FeatureMap<Scalar>& probabilities) {
  ClassMask mask(probabilities.height, probabilities.width);
  for (Index i = 0; i < probabilities.pixels(); ++i) {
    Index best;
    probabilities.values.col(i).maxCoeff(&best);
    mask(i / probabilities.width, i % probabilities.width) = static_cast<std::uint8_t>(best);
  }
  return mask;
}

template <typename Scalar>
Scalar accumulate_example_gradient(SegmentationModel<Scalar>& model, const nn::FeatureMap<Scalar>& image,
                                   const nn::Matrix<Scalar>& truth, LossKind kind,
                                   const LossWeights& weights, Scalar scale) {
  typename SegmentationModel<Scalar>::Tape tape;
  const nn::FeatureMap<Scalar> z = model.logits(image, &tape);
  const nn::Matrix<Scalar> p = softmax(z.values);
  const Scalar loss = example_loss(kind, truth, p, weights);
  const nn::Matrix<Scalar> grad_p = scale * loss_gradient(kind, truth, p, weights);
  model.backward(nn::FeatureMap<Scalar>(z.height, z.width, softmax_backward(p, grad_p)), tape);
  return loss;
}

template class SegmentationModel<float>;
template class SegmentationModel<double>;

template nn::FeatureMap<float> image_to_features<float>(const RgbImage&);
template nn::FeatureMap<double> image_to_features<double>(const RgbImage&);
template nn::Matrix<float> one_hot<float>(const ClassMask&, int);
template nn::Matrix<double> one_hot<double>(const ClassMask&, int);
template ClassMask argmax_mask<float>(const nn::FeatureMap<float>&);
template ClassMask argmax_mask<double>(const nn::FeatureMap<double>&);
template float accumulate_example_gradient<float>(SegmentationModel<float>&, const nn::FeatureMap<float>&,
                                                  const nn::Matrix<float>&, LossKind, const LossWeights&,
                                                  float);
template double accumulate_example_gradient<double>(SegmentationModel<double>&,
                                                    const nn::FeatureMap<double>&, const nn::Matrix<double>&,
                                                    LossKind, const LossWeights&, double);

}  // namespace gleason
