#include "gleason/losses.hpp"

namespace gleason {

void LossWeights::validate() const {
  if (alpha1 < 0 || alpha2 < 0 || alpha3 < 0)
    throw std::invalid_argument("loss weights: alpha values must be nonnegative");
  if (!(alpha1 + alpha2 + alpha3 > 0))
    throw std::invalid_argument("loss weights: alpha1 + alpha2 + alpha3 must be positive");
  if (beta1 < 0 || beta2 < 0)
    throw std::invalid_argument("loss weights: beta values must be nonnegative");
  if (!(gamma > 0)) throw std::invalid_argument("loss weights: gamma must be positive");
  if (!(epsilon > 0)) throw std::invalid_argument("loss weights: epsilon must be positive");
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"alpha1", w.alpha1}, {"alpha2", w.alpha2}, {"alpha3", w.alpha3}, {"beta1", w.beta1},
       {"beta2", w.beta2},   {"gamma", w.gamma},   {"epsilon", w.epsilon}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  LossWeights d;
  w.alpha1 = j.value("alpha1", d.alpha1);
  w.alpha2 = j.value("alpha2", d.alpha2);
  w.alpha3 = j.value("alpha3", d.alpha3);
  w.beta1 = j.value("beta1", d.beta1);
  w.beta2 = j.value("beta2", d.beta2);
  w.gamma = j.value("gamma", d.gamma);
  w.epsilon = j.value("epsilon", d.epsilon);
  w.validate();
}

LossKind loss_kind_from_name(const std::string& name) {
  if (name == "L_c") return LossKind::CrossEntropy;
  if (name == "L_d") return LossKind::Dice;
  if (name == "L_ft") return LossKind::FocalTversky;
  if (name == "L_h") return LossKind::Hybrid;
  throw std::invalid_argument("unknown loss selector '" + name + "' (expected L_c, L_d, L_ft, L_h)");
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::CrossEntropy: return "L_c";
    case LossKind::Dice: return "L_d";
    case LossKind::FocalTversky: return "L_ft";
    case LossKind::Hybrid: return "L_h";
  }
  return "?";
}

}  // namespace gleason
