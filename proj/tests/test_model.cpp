#include <cmath>
#include <fstream>
#include <random>

#include "gleason/checkpoint.hpp"
#include "gleason/model.hpp"
#include "support.hpp"

using namespace gleason;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.patch_size = 8;
  c.stage_widths = {2, 3};
  c.blocks_per_stage = {2, 2};
  c.base_dilations = {1, 2};
  c.hd_scales = {1, 2};
  c.seed = 11;
  return c;
}

template <typename Scalar>
nn::FeatureMap<Scalar> random_input(std::mt19937_64& rng, Index size, Index channels = 3) {
  nn::FeatureMap<Scalar> x(channels, size, size);
  std::uniform_real_distribution<double> u(0, 1);
  for (Index i = 0; i < x.values.size(); ++i) x.values.data()[i] = Scalar(u(rng));
  return x;
}

}  // namespace

TEST_CASE("dilation schedule examples") {
  CHECK(dilation_schedule(2, 3).factors == std::vector<int>{1, 2, 3});
  CHECK(dilation_schedule(1, 1).factors == std::vector<int>{1});
  CHECK(dilation_schedule(1, 3).factors == std::vector<int>{1, 1, 2});
  CHECK(dilation_schedule(4, 2).factors == std::vector<int>{3, 4});
  CHECK_THROWS_AS(dilation_schedule(0, 3), std::invalid_argument);
  CHECK_THROWS_AS(dilation_schedule(2, 0), std::invalid_argument);
}

TEST_CASE("dilation schedule properties") {
  for (int r = 1; r <= 8; ++r)
    for (int n = 1; n <= 6; ++n) {
      const auto s = dilation_schedule(r, n);
      REQUIRE(s.factors.size() == std::size_t(n));
      for (std::size_t i = 0; i < s.factors.size(); ++i) {
        CHECK(s.factors[i] >= 1);
        if (i) CHECK(s.factors[i] >= s.factors[i - 1]);
      }
      if (n >= 2 && r >= 2) CHECK(s.factors.front() != s.factors.back());
    }
}

TEST_CASE("receptive field grows across a dilated block") {
  const auto schedule = dilation_schedule(3, 3);  // 2, 3, 4
  nn::DilatedBlock<float> block("db", 4, schedule);
  int field = 1, prev_extent = 0;
  for (const auto& conv : block.convs()) {
    CHECK(conv.effective_extent() > prev_extent);
    prev_extent = conv.effective_extent();
    const int next = field + conv.effective_extent() - 1;
    CHECK(next > field);
    field = next;
  }
  CHECK(field == 1 + 4 + 6 + 8);
}

TEST_CASE("residual block with a zeroed inner path is its shortcut") {
  std::mt19937_64 rng(1);
  std::mt19937_64 init(2);
  SUBCASE("identity when channels match") {
    nn::ResidualBlock<double> rb("rb", 4, 4);
    rb.initialize(init);
    CHECK_FALSE(rb.has_projection());
    rb.inner_second().weight().value.setZero();
    rb.inner_second().bias().value.setZero();
    const auto x = random_input<double>(rng, 6, 4);
    CHECK((rb.forward(x).values - x.values).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("projection when channels change") {
    nn::ResidualBlock<double> rb("rb", 3, 5);
    rb.initialize(init);
    REQUIRE(rb.has_projection());
    rb.inner_second().weight().value.setZero();
    rb.inner_second().bias().value.setZero();
    const auto x = random_input<double>(rng, 6, 3);
    const auto expected = rb.projection().forward(x);
    CHECK((rb.forward(x).values - expected.values).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("hierarchical decomposition shapes and errors") {
  std::mt19937_64 init(3);
  nn::HierarchicalDecomposition<float> hd("hd", 256, {1, 2, 3, 6});
  hd.initialize(init);
  CHECK(hd.branch_channels() == 64);
  CHECK(hd.output_channels() == 256 + 4 * 64);
  nn::FeatureMap<float> x(256, 22, 22);
  x.values.setRandom();
  const auto y = hd.forward(x);
  CHECK(y.channels() == 512);
  CHECK(y.height == 22);
  CHECK(y.width == 22);
  CHECK(y.values.topRows(256) == x.values);

  nn::HierarchicalDecomposition<double> global("hd1", 4, {1});
  global.initialize(init);
  nn::FeatureMap<double> c(4, 5, 5);
  c.values.setConstant(0.7);
  const auto g = global.forward(c);
  const auto branch = g.values.bottomRows(4);
  for (Index ch = 0; ch < 4; ++ch) CHECK(branch.row(ch).maxCoeff() - branch.row(ch).minCoeff() < 1e-12);

  CHECK_THROWS_AS(nn::HierarchicalDecomposition<float>("e", 8, {}), std::invalid_argument);
  nn::HierarchicalDecomposition<float> big("big", 8, {6});
  nn::FeatureMap<float> small(8, 4, 4);
  small.values.setZero();
  CHECK_THROWS_AS(big.forward(small), std::invalid_argument);
}

TEST_CASE("config validation names the violated constraint") {
  ModelConfig one_stage;
  one_stage.stage_widths = {8};
  one_stage.base_dilations = {1};
  one_stage.blocks_per_stage = {3};
  CHECK_THROWS_WITH_AS(one_stage.validate(), doctest::Contains("two encoder stages"), std::invalid_argument);

  ModelConfig mismatch;
  mismatch.base_dilations = {1, 2};
  CHECK_THROWS_WITH_AS(mismatch.validate(), doctest::Contains("base_dilations"), std::invalid_argument);

  ModelConfig too_big;
  too_big.patch_size = 64;  // bottleneck 4x4, scale 6 does not fit
  CHECK_THROWS_WITH_AS(too_big.validate(), doctest::Contains("hd scale 6"), std::invalid_argument);

  ModelConfig empty_scales;
  empty_scales.hd_scales = {};
  CHECK_THROWS_AS(SegmentationModel<float>{empty_scales}, std::invalid_argument);

  ModelConfig d;
  CHECK(d.padded_size() == 352);
  CHECK(d.bottleneck_size() == 22);
  CHECK_NOTHROW(d.validate());
  const nlohmann::json j = d;
  CHECK(j.get<ModelConfig>() == d);
}

TEST_CASE("initialization is seeded") {
  ModelConfig c = tiny_config();
  SegmentationModel<float> a(c), b(c);
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->name == pb[i]->name);
    CHECK(pa[i]->value == pb[i]->value);
  }
  c.seed = 12;
  SegmentationModel<float> other(c);
  CHECK_FALSE(other.parameters()[0]->value == pa[0]->value);
}

TEST_CASE("forward shape, normalization and determinism") {
  ModelConfig c;
  c.patch_size = 64;
  c.stage_widths = {8, 16};
  c.blocks_per_stage = {3, 3};
  c.base_dilations = {1, 2};
  c.hd_scales = {1, 2, 3, 6};
  SegmentationModel<float> model(c);
  std::mt19937_64 rng(4);
  const auto x = random_input<float>(rng, 64);
  const auto p = model.forward(x);
  CHECK(p.channels() == 6);
  CHECK(p.height == 64);
  CHECK(p.width == 64);
  CHECK((p.values.colwise().sum().array() - 1.0f).abs().maxCoeff() < 1e-5f);
  CHECK(model.forward(x).values == p.values);

  ModelConfig single = c;
  single.hd_scales = {1};
  CHECK(SegmentationModel<float>(single).forward(x).channels() == 6);

  const auto batch = model.forward(std::vector<nn::FeatureMap<float>>{x, x});
  CHECK(batch.size() == 2);

  CHECK_THROWS_WITH_AS(model.forward(random_input<float>(rng, 32)), doctest::Contains("64x64"),
                       std::invalid_argument);
}

TEST_CASE("non power-of-two patches are padded internally") {
  ModelConfig c;
  c.patch_size = 30;
  c.stage_widths = {4, 4};
  c.blocks_per_stage = {1, 1};
  c.base_dilations = {1, 1};
  c.hd_scales = {1, 2};
  CHECK(c.padded_size() == 32);
  SegmentationModel<float> model(c);
  std::mt19937_64 rng(5);
  const auto p = model.forward(random_input<float>(rng, 30));
  CHECK(p.height == 30);
  CHECK(p.width == 30);
  CHECK(p.values.cols() == 900);
}

TEST_CASE("model gradients match central differences") {
  const ModelConfig c = tiny_config();
  SegmentationModel<double> model(c);
  std::mt19937_64 rng(6);
  const auto x = random_input<double>(rng, 8);
  const ClassMask mask = testing::random_mask(rng, 8, 8, 6);
  const auto t = one_hot<double>(mask, 6);
  // Zero biases put dead channels exactly on the ReLU kink.
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  for (auto* p : model.parameters())
    if (p->name.ends_with(".bias"))
      for (Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = jitter(rng);
  for (LossKind kind : {LossKind::CrossEntropy, LossKind::Hybrid}) {
    CAPTURE(to_string(kind));
    model.zero_grad();
    accumulate_example_gradient(model, x, t, kind, LossWeights{}, 1.0);
    double worst = 0;
    for (auto* p : model.parameters())
      for (Index i = 0; i < p->value.size(); i += 2) {
        const double v = p->value.data()[i], h = 1e-5;
        p->value.data()[i] = v + h;
        const double up = example_loss(kind, t, model.forward(x).values);
        p->value.data()[i] = v - h;
        const double down = example_loss(kind, t, model.forward(x).values);
        p->value.data()[i] = v;
        const double fd = (up - down) / (2 * h), an = p->grad.data()[i];
        const double rel = std::abs(fd - an) / std::max(1e-6, std::abs(fd) + std::abs(an));
        worst = std::max(worst, rel);
      }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("one_hot and argmax helpers") {
  ClassMask m(2, 2);
  m << 0, 5, 2, 3;
  const auto t = one_hot<float>(m, 6);
  CHECK(t.cols() == 4);
  CHECK(t(5, 1) == 1.0f);
  CHECK(t.sum() == 4.0f);
  CHECK((argmax_mask(nn::FeatureMap<float>(2, 2, t)) == m).all());
  ClassMask bad(1, 1);
  bad(0, 0) = 6;
  CHECK_THROWS_AS(one_hot<float>(bad, 6), std::invalid_argument);
}

TEST_CASE("checkpoint round trip and config mismatch") {
  const auto dir = testing::scratch_dir("ckpt");
  const ModelConfig c = tiny_config();
  SegmentationModel<float> model(c);
  save_checkpoint(model, dir / "m.ckpt");
  CHECK(read_checkpoint_config(dir / "m.ckpt") == c);
  const auto back = load_checkpoint<float>(dir / "m.ckpt", c);
  const auto pa = model.parameters();
  const auto pb = back.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
  std::mt19937_64 rng(7);
  const auto x = random_input<float>(rng, 8);
  CHECK(model.forward(x).values == back.forward(x).values);

  ModelConfig other = c;
  other.seed = 99;
  CHECK_THROWS_AS(load_checkpoint<float>(dir / "m.ckpt", other), std::invalid_argument);
  CHECK_THROWS(load_checkpoint<float>(dir / "missing.ckpt"));
  {
    std::ofstream junk(dir / "junk.ckpt");
    junk << "not a checkpoint";
  }
  CHECK_THROWS_WITH(load_checkpoint<float>(dir / "junk.ckpt"), doctest::Contains("not a checkpoint"));

  const auto as_double = load_checkpoint<double>(dir / "m.ckpt");
  CHECK(as_double.parameters()[0]->value.cast<float>() == pa[0]->value);
}
