#pragma once

// Per-example segmentation losses and their gradients with respect to the
// predicted probabilities. An example is one patch laid out as a
// classes x pixels matrix; the overlap sums of the Dice and Tversky terms run
// over all pixels and classes, and cross entropy is averaged per pixel so the
// three terms share a scale.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

namespace gleason {

struct LossWeights {
  double alpha1 = 1.0;  // cross entropy
  double alpha2 = 1.0;  // dice
  double alpha3 = 1.0;  // focal Tversky
  double beta1 = 0.5;   // false-positive penalty
  double beta2 = 0.5;   // false-negative penalty
  double gamma = 4.0 / 3.0;
  double epsilon = 1e-6;

  void validate() const;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

enum class LossKind { CrossEntropy, Dice, FocalTversky, Hybrid };

/// "L_c", "L_d", "L_ft", "L_h"
LossKind loss_kind_from_name(const std::string& name);
std::string to_string(LossKind kind);

template <typename Scalar>
struct ExampleTensors {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Matrix truth;        // one-hot labels, classes x pixels
  Matrix probability;  // predicted probabilities, same shape
};

namespace detail {

template <typename DT, typename DP>
void check_shapes(const Eigen::MatrixBase<DT>& t, const Eigen::MatrixBase<DP>& p) {
  if (t.rows() != p.rows() || t.cols() != p.cols())
    throw std::invalid_argument("loss: label tensor is " + std::to_string(t.rows()) + "x" +
                                std::to_string(t.cols()) + " but prediction is " +
                                std::to_string(p.rows()) + "x" + std::to_string(p.cols()));
}

inline void check_gamma(double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("focal Tversky: gamma must be positive");
}

}  // namespace detail

template <typename DT, typename DP>
typename DP::Scalar cross_entropy_loss(const Eigen::MatrixBase<DT>& t, const Eigen::MatrixBase<DP>& p,
                                       const LossWeights& w = {}) {
  using Scalar = typename DP::Scalar;
  detail::check_shapes(t, p);
  const Scalar eps = static_cast<Scalar>(w.epsilon);
  return -(t.derived().template cast<Scalar>().array() *
           p.derived().array().max(eps).min(Scalar(1)).log())
              .sum() /
         static_cast<Scalar>(std::max<Eigen::Index>(1, p.cols()));
}

template <typename DT, typename DP>
typename DP::Scalar dice_loss(const Eigen::MatrixBase<DT>& t, const Eigen::MatrixBase<DP>& p,
                              const LossWeights& w = {}) {
  using Scalar = typename DP::Scalar;
  detail::check_shapes(t, p);
  const auto tc = t.derived().template cast<Scalar>();
  const Scalar eps = static_cast<Scalar>(w.epsilon);
  const Scalar overlap = tc.cwiseProduct(p.derived()).sum();
  return Scalar(1) -
         (Scalar(2) * overlap + eps) / (tc.squaredNorm() + p.derived().squaredNorm() + eps);
}

/// Tversky index with penalties beta1 on false positives and beta2 on false
/// negatives, smoothed by epsilon.
template <typename DT, typename DP>
typename DP::Scalar tversky_index(const Eigen::MatrixBase<DT>& t, const Eigen::MatrixBase<DP>& p,
                                  const LossWeights& w = {}) {
  using Scalar = typename DP::Scalar;
  detail::check_shapes(t, p);
  const auto tc = t.derived().template cast<Scalar>().array();
  const auto pa = p.derived().array();
  const Scalar eps = static_cast<Scalar>(w.epsilon);
  const Scalar overlap = (tc * pa).sum();
  const Scalar false_pos = ((Scalar(1) - tc) * pa).sum();
  const Scalar false_neg = (tc * (Scalar(1) - pa)).sum();
  return (overlap + eps) / (overlap + Scalar(w.beta1) * false_pos +
                            Scalar(w.beta2) * false_neg + eps);
}

template <typename DT, typename DP>
typename DP::Scalar focal_tversky_loss(const Eigen::MatrixBase<DT>& t,
                                       const Eigen::MatrixBase<DP>& p, const LossWeights& w = {}) {
  using Scalar = typename DP::Scalar;
  detail::check_gamma(w.gamma);
  const Scalar base = std::max(Scalar(0), Scalar(1) - tversky_index(t, p, w));
  return std::pow(base, Scalar(1.0 / w.gamma));
}

template <typename DT, typename DP>
typename DP::Scalar example_loss(LossKind kind, const Eigen::MatrixBase<DT>& t,
                                 const Eigen::MatrixBase<DP>& p, const LossWeights& w = {}) {
  using Scalar = typename DP::Scalar;
  switch (kind) {
    case LossKind::CrossEntropy: return cross_entropy_loss(t, p, w);
    case LossKind::Dice: return dice_loss(t, p, w);
    case LossKind::FocalTversky: return focal_tversky_loss(t, p, w);
    case LossKind::Hybrid:
      return Scalar(w.alpha1) * cross_entropy_loss(t, p, w) + Scalar(w.alpha2) * dice_loss(t, p, w) +
             Scalar(w.alpha3) * focal_tversky_loss(t, p, w);
  }
  throw std::invalid_argument("unknown loss selector");
}

/// Batch mean of alpha1*L_c + alpha2*L_d + alpha3*L_ft.
template <typename Scalar>
Scalar hybrid_loss(const std::vector<ExampleTensors<Scalar>>& batch, const LossWeights& w = {}) {
  if (batch.empty()) throw std::invalid_argument("hybrid_loss: empty batch");
  Scalar total = 0;
  for (const auto& ex : batch) total += example_loss(LossKind::Hybrid, ex.truth, ex.probability, w);
  return total / static_cast<Scalar>(batch.size());
}

template <typename Scalar>
Scalar batch_loss(LossKind kind, const std::vector<ExampleTensors<Scalar>>& batch,
                  const LossWeights& w = {}) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  Scalar total = 0;
  for (const auto& ex : batch) total += example_loss(kind, ex.truth, ex.probability, w);
  return total / static_cast<Scalar>(batch.size());
}

// Gradients with respect to p. Cross entropy has zero slope where p is
// clipped at epsilon.

template <typename DT, typename DP>
Eigen::Matrix<typename DP::Scalar, Eigen::Dynamic, Eigen::Dynamic> cross_entropy_gradient(
    const Eigen::MatrixBase<DT>& t, const Eigen::MatrixBase<DP>& p, const LossWeights& w = {}) {
  using Scalar = typename DP::Scalar;
  detail::check_shapes(t, p);
  const Scalar eps = static_cast<Scalar>(w.epsilon);
  const auto tc = t.derived().template cast<Scalar>().array();
  const auto pa = p.derived().array();
  const Scalar pixels = static_cast<Scalar>(std::max<Eigen::Index>(1, p.cols()));
  return (pa > eps).select(-tc / (pa * pixels), Scalar(0)).matrix();
}

template <typename DT, typename DP>
Eigen::Matrix<typename DP::Scalar, Eigen::Dynamic, Eigen::Dynamic> dice_gradient(
    const Eigen::MatrixBase<DT>& t, const Eigen::MatrixBase<DP>& p, const LossWeights& w = {}) {
  using Scalar = typename DP::Scalar;
  detail::check_shapes(t, p);
  const auto tc = t.derived().template cast<Scalar>();
  const Scalar eps = static_cast<Scalar>(w.epsilon);
  const Scalar num = Scalar(2) * tc.cwiseProduct(p.derived()).sum() + eps;
  const Scalar den = tc.squaredNorm() + p.derived().squaredNorm() + eps;
  return -(Scalar(2) * den * tc - Scalar(2) * num * p.derived()) / (den * den);
}

template <typename DT, typename DP>
Eigen::Matrix<typename DP::Scalar, Eigen::Dynamic, Eigen::Dynamic> focal_tversky_gradient(
    const Eigen::MatrixBase<DT>& t, const Eigen::MatrixBase<DP>& p, const LossWeights& w = {}) {
  using Scalar = typename DP::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  detail::check_shapes(t, p);
  detail::check_gamma(w.gamma);
  const Matrix tc = t.derived().template cast<Scalar>();
  const auto ta = tc.array();
  const auto pa = p.derived().array();
  const Scalar eps = static_cast<Scalar>(w.epsilon);
  const Scalar b1 = static_cast<Scalar>(w.beta1), b2 = static_cast<Scalar>(w.beta2);
  const Scalar num = (ta * pa).sum() + eps;
  const Scalar den = (ta * pa).sum() + b1 * ((Scalar(1) - ta) * pa).sum() +
                     b2 * (ta * (Scalar(1) - pa)).sum() + eps;
  const Scalar base = Scalar(1) - num / den;
  if (!(base > Scalar(0))) return Matrix::Zero(p.rows(), p.cols());
  // d(den)/dp = t + b1 (1 - t) - b2 t
  const Matrix d_index = ((ta * den - num * (ta + b1 * (Scalar(1) - ta) - b2 * ta)) / (den * den)).matrix();
  const Scalar inv_gamma = Scalar(1.0 / w.gamma);
  return -inv_gamma * std::pow(base, inv_gamma - Scalar(1)) * d_index;
}

template <typename DT, typename DP>
Eigen::Matrix<typename DP::Scalar, Eigen::Dynamic, Eigen::Dynamic> loss_gradient(
    LossKind kind, const Eigen::MatrixBase<DT>& t, const Eigen::MatrixBase<DP>& p,
    const LossWeights& w = {}) {
  using Scalar = typename DP::Scalar;
  switch (kind) {
    case LossKind::CrossEntropy: return cross_entropy_gradient(t, p, w);
    case LossKind::Dice: return dice_gradient(t, p, w);
    case LossKind::FocalTversky: return focal_tversky_gradient(t, p, w);
    case LossKind::Hybrid:
      return Scalar(w.alpha1) * cross_entropy_gradient(t, p, w) +
             Scalar(w.alpha2) * dice_gradient(t, p, w) +
             Scalar(w.alpha3) * focal_tversky_gradient(t, p, w);
  }
  throw std::invalid_argument("unknown loss selector");
}

/// Pulls a gradient with respect to per-pixel softmax outputs back to the
/// logits: dz = p * (g - sum_c p_c g_c), column by column.
template <typename DP, typename DG>
Eigen::Matrix<typename DP::Scalar, Eigen::Dynamic, Eigen::Dynamic> softmax_backward(
    const Eigen::MatrixBase<DP>& p, const Eigen::MatrixBase<DG>& grad) {
  const auto weighted = p.derived().cwiseProduct(grad.derived()).colwise().sum();
  return (p.derived().array() * (grad.derived().rowwise() - weighted).array()).matrix();
}

/// Column-wise softmax of a classes x pixels logit matrix.
template <typename DZ>
Eigen::Matrix<typename DZ::Scalar, Eigen::Dynamic, Eigen::Dynamic> softmax(
    const Eigen::MatrixBase<DZ>& logits) {
  using Matrix = Eigen::Matrix<typename DZ::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Matrix out = (logits.derived().rowwise() - logits.derived().colwise().maxCoeff()).array().exp();
  out.array().rowwise() /= out.colwise().sum().array();
  return out;
}

}  // namespace gleason
