#include <cmath>
#include <random>

#include "gleason/losses.hpp"
#include "support.hpp"

using namespace gleason;
using Mat = Eigen::MatrixXd;

namespace {

Mat col(std::initializer_list<double> v) {
  Mat m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

Mat random_one_hot(std::mt19937_64& rng, int classes, int pixels) {
  Mat t = Mat::Zero(classes, pixels);
  std::uniform_int_distribution<int> d(0, classes - 1);
  for (int i = 0; i < pixels; ++i) t(d(rng), i) = 1;
  return t;
}

Mat random_soft(std::mt19937_64& rng, int classes, int pixels) {
  std::normal_distribution<double> n(0, 1);
  Mat z(classes, pixels);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = n(rng);
  return softmax(z);
}

double max_rel_error(LossKind kind, const Mat& t, Mat p, const LossWeights& w) {
  const Mat g = loss_gradient(kind, t, p, w);
  const double h = 1e-5;
  double worst = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double v = p.data()[i];
    p.data()[i] = v + h;
    const double up = example_loss(kind, t, p, w);
    p.data()[i] = v - h;
    const double down = example_loss(kind, t, p, w);
    p.data()[i] = v;
    const double fd = (up - down) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(g.data()[i]), 1e-8});
    worst = std::max(worst, std::abs(fd - g.data()[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("cross entropy examples") {
  CHECK(cross_entropy_loss(col({1, 0}), col({1, 0})) == doctest::Approx(0.0));
  CHECK(cross_entropy_loss(col({1, 0}), col({0.5, 0.5})) == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(cross_entropy_loss(col({0, 1}), col({0.25, 0.75})) == doctest::Approx(0.287682).epsilon(1e-6));
  // clip keeps a zero probability finite
  CHECK(std::isfinite(cross_entropy_loss(col({1, 0}), col({0, 1}))));
  CHECK(cross_entropy_loss(col({1, 0}), col({0, 1})) == doctest::Approx(-std::log(1e-6)));
}

TEST_CASE("dice loss examples") {
  std::mt19937_64 rng(1);
  const Mat t = random_one_hot(rng, 3, 10);
  CHECK(dice_loss(t, t) <= 1e-6);
  CHECK(dice_loss(col({1, 0}), col({0, 1})) == doctest::Approx(1.0).epsilon(1e-5));
  LossWeights tiny;
  tiny.epsilon = 1e-15;
  CHECK(dice_loss(col({1, 0}), col({0.5, 0.5}), tiny) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("focal Tversky examples") {
  std::mt19937_64 rng(2);
  const Mat t = random_one_hot(rng, 4, 16);
  for (double gamma : {0.5, 1.0, 4.0 / 3.0, 3.0}) {
    LossWeights w;
    w.gamma = gamma;
    w.beta1 = 0.3;
    w.beta2 = 0.7;
    CHECK(focal_tversky_loss(t, t, w) == doctest::Approx(0.0));
  }
  LossWeights w;
  w.gamma = 1;
  w.epsilon = 1e-15;
  CHECK(tversky_index(col({1, 0}), col({0.5, 0.5}), w) == doctest::Approx(0.5));
  CHECK(focal_tversky_loss(col({1, 0}), col({0.5, 0.5}), w) == doctest::Approx(0.5));
  LossWeights bad;
  bad.gamma = 0;
  CHECK_THROWS_AS(focal_tversky_loss(t, t, bad), std::invalid_argument);
}

TEST_CASE("Dice and focal Tversky differ by the exact epsilon term on binary masks") {
  // D - TI = eps (2a - b) / ((b + eps)(b + 2 eps)), a = sum tp, b = sum t + sum p
  std::mt19937_64 rng(3);
  LossWeights w;
  w.gamma = 1;
  for (int trial = 0; trial < 50; ++trial) {
    const Mat t = random_one_hot(rng, 3, 8);
    const Mat p = random_one_hot(rng, 3, 8);
    const double a = t.cwiseProduct(p).sum(), b = t.sum() + p.sum(), eps = w.epsilon;
    const double expected = eps * (2 * a - b) / ((b + eps) * (b + 2 * eps));
    const double gap = focal_tversky_loss(t, p, w) - dice_loss(t, p, w);
    CHECK(gap == doctest::Approx(expected).epsilon(1e-6).scale(1e-18));
    CHECK(std::abs(gap) <= eps / b + 1e-15);
  }
}

TEST_CASE("focal Tversky equals Dice on large binary masks") {
  std::mt19937_64 rng(4);
  LossWeights w;
  w.gamma = 1;
  for (int trial = 0; trial < 20; ++trial) {
    const Mat t = random_one_hot(rng, 6, 32 * 32);
    const Mat p = random_one_hot(rng, 6, 32 * 32);
    CHECK(std::abs(focal_tversky_loss(t, p, w) - dice_loss(t, p, w)) < 1e-9);
  }
}

TEST_CASE("losses are nonnegative and bounded") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const Mat t = random_one_hot(rng, 6, 20);
    const Mat p = random_soft(rng, 6, 20);
    CHECK(cross_entropy_loss(t, p) >= 0);
    const double d = dice_loss(t, p), ft = focal_tversky_loss(t, p);
    CHECK(d >= -1e-6);
    CHECK(d <= 1 + 1e-6);
    CHECK(ft >= 0);
    CHECK(ft <= 1 + 1e-6);
  }
}

TEST_CASE("focal Tversky grows with gamma at fixed index") {
  std::mt19937_64 rng(6);
  const Mat t = random_one_hot(rng, 3, 30);
  const Mat p = random_soft(rng, 3, 30);
  double prev = -1;
  for (double gamma : {0.5, 1.0, 4.0 / 3.0, 2.0, 3.0}) {
    LossWeights w;
    w.gamma = gamma;
    const double v = focal_tversky_loss(t, p, w);
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("hybrid loss is the batch mean of weighted components") {
  std::mt19937_64 rng(7);
  std::vector<ExampleTensors<double>> batch;
  for (int i = 0; i < 3; ++i) batch.push_back({random_one_hot(rng, 6, 16), random_soft(rng, 6, 16)});

  LossWeights ce_only;
  ce_only.alpha2 = ce_only.alpha3 = 0;
  double ce_mean = 0;
  for (const auto& ex : batch) ce_mean += cross_entropy_loss(ex.truth, ex.probability);
  CHECK(hybrid_loss(batch, ce_only) == doctest::Approx(ce_mean / 3).epsilon(1e-12));

  double sum = 0;
  for (const auto& ex : batch)
    sum += cross_entropy_loss(ex.truth, ex.probability) + dice_loss(ex.truth, ex.probability) +
           focal_tversky_loss(ex.truth, ex.probability);
  CHECK(hybrid_loss(batch, LossWeights{}) == doctest::Approx(sum / 3).epsilon(1e-12));

  // linearity in alpha
  LossWeights a, b, ab;
  a.alpha1 = 0.3, a.alpha2 = 1.2, a.alpha3 = 0.0;
  b.alpha1 = 0.5, b.alpha2 = 0.0, b.alpha3 = 2.0;
  ab.alpha1 = a.alpha1 + b.alpha1, ab.alpha2 = a.alpha2 + b.alpha2, ab.alpha3 = a.alpha3 + b.alpha3;
  CHECK(std::abs(hybrid_loss(batch, ab) - hybrid_loss(batch, a) - hybrid_loss(batch, b)) < 1e-9);

  CHECK_THROWS_AS(hybrid_loss(std::vector<ExampleTensors<double>>{}, LossWeights{}), std::invalid_argument);
}

TEST_CASE("shape mismatch is an error") {
  CHECK_THROWS_AS(cross_entropy_loss(Mat::Zero(2, 3), Mat::Zero(3, 2)), std::invalid_argument);
  CHECK_THROWS_AS(dice_loss(Mat::Zero(2, 3), Mat::Zero(2, 4)), std::invalid_argument);
  CHECK_THROWS_AS(focal_tversky_loss(Mat::Zero(2, 3), Mat::Zero(1, 3)), std::invalid_argument);
}

TEST_CASE("cross entropy gradient at p = t") {
  const Mat t = col({0, 1, 0});
  const Mat g = cross_entropy_gradient(t, t);
  CHECK(g(1, 0) == doctest::Approx(-1.0));
  CHECK(g(0, 0) == 0);
}

TEST_CASE("analytic gradients match central differences") {
  std::mt19937_64 rng(8);
  for (LossKind kind : {LossKind::CrossEntropy, LossKind::Dice, LossKind::FocalTversky, LossKind::Hybrid}) {
    CAPTURE(to_string(kind));
    for (int trial = 0; trial < 5; ++trial) {
      const Mat t = random_one_hot(rng, 2, 64);
      const Mat p = random_soft(rng, 2, 64);
      CHECK(max_rel_error(kind, t, p, LossWeights{}) < 1e-4);
    }
  }
  LossWeights skew;
  skew.beta1 = 0.7, skew.beta2 = 0.3, skew.gamma = 0.75;
  const Mat t = random_one_hot(rng, 6, 64);
  CHECK(max_rel_error(LossKind::FocalTversky, t, random_soft(rng, 6, 64), skew) < 1e-4);
}

TEST_CASE("hybrid gradient is the weighted sum of component gradients") {
  std::mt19937_64 rng(9);
  const Mat t = random_one_hot(rng, 6, 25);
  const Mat p = random_soft(rng, 6, 25);
  LossWeights w;
  w.alpha1 = 0.4, w.alpha2 = 1.7, w.alpha3 = 0.9;
  const Mat expected = w.alpha1 * cross_entropy_gradient(t, p, w) + w.alpha2 * dice_gradient(t, p, w) +
                       w.alpha3 * focal_tversky_gradient(t, p, w);
  CHECK((loss_gradient(LossKind::Hybrid, t, p, w) - expected).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("softmax backward matches differences through the softmax") {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0, 1);
  Mat z(4, 6);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = n(rng);
  const Mat t = random_one_hot(rng, 4, 6);
  const Mat p = softmax(z);
  CHECK((p.colwise().sum().array() - 1).abs().maxCoeff() < 1e-12);
  const Mat dz = softmax_backward(p, loss_gradient(LossKind::Hybrid, t, p));
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    Mat zp = z, zm = z;
    zp.data()[i] += h;
    zm.data()[i] -= h;
    const double fd =
        (example_loss(LossKind::Hybrid, t, softmax(zp)) - example_loss(LossKind::Hybrid, t, softmax(zm))) / (2 * h);
    CHECK(dz.data()[i] == doctest::Approx(fd).epsilon(1e-5).scale(1e-6));
  }
}

TEST_CASE("weights validation and json") {
  LossWeights w;
  CHECK_NOTHROW(w.validate());
  w.alpha1 = w.alpha2 = w.alpha3 = 0;
  CHECK_THROWS(w.validate());
  LossWeights g;
  g.gamma = -1;
  CHECK_THROWS(g.validate());
  LossWeights e;
  e.epsilon = 0;
  CHECK_THROWS(e.validate());
  const LossWeights d;
  const nlohmann::json j = d;
  for (const char* key : {"alpha1", "alpha2", "alpha3", "beta1", "beta2", "gamma", "epsilon"}) CHECK(j.contains(key));
  CHECK(j.get<LossWeights>() == d);
  CHECK(loss_kind_from_name("L_ft") == LossKind::FocalTversky);
  CHECK_THROWS_AS(loss_kind_from_name("L_x"), std::invalid_argument);
}
