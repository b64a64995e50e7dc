#pragma once

#include <nlohmann/json.hpp>
#include <stdexcept>
#include <vector>

#include "gleason/nn/layers.hpp"

namespace gleason {

struct AdadeltaSettings {
  double learning_rate = 1.0;
  double decay_rate = 0.95;  // rho
  double epsilon = 1e-9;

  void validate() const {
    if (!(learning_rate > 0)) throw std::invalid_argument("adadelta: learning_rate must be > 0");
    if (!(decay_rate > 0 && decay_rate < 1)) throw std::invalid_argument("adadelta: decay_rate must be in (0, 1)");
    if (!(epsilon > 0)) throw std::invalid_argument("adadelta: epsilon must be > 0");
  }
  friend bool operator==(const AdadeltaSettings&, const AdadeltaSettings&) = default;
};

inline void to_json(nlohmann::json& j, const AdadeltaSettings& s) {
  j = {{"learning_rate", s.learning_rate}, {"decay_rate", s.decay_rate}, {"epsilon", s.epsilon}};
}

inline void from_json(const nlohmann::json& j, AdadeltaSettings& s) {
  AdadeltaSettings d;
  s.learning_rate = j.value("learning_rate", d.learning_rate);
  s.decay_rate = j.value("decay_rate", d.decay_rate);
  s.epsilon = j.value("epsilon", d.epsilon);
  s.validate();
}

/// Zeiler's ADADELTA:
///   E[g^2] <- rho E[g^2] + (1 - rho) g^2
///   dx      = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
///   E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
///   x      <- x + lr * dx
template <typename Scalar>
class Adadelta {
 public:
  explicit Adadelta(AdadeltaSettings settings = {}) : settings_(settings) { settings_.validate(); }

  void step(const std::vector<nn::Parameter<Scalar>*>& params) {
    if (grad_sq_.empty()) {
      for (const auto* p : params) {
        grad_sq_.push_back(nn::Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
        delta_sq_.push_back(nn::Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      }
    }
    if (grad_sq_.size() != params.size()) throw std::logic_error("adadelta: parameter set changed");
    const Scalar rho = Scalar(settings_.decay_rate), eps = Scalar(settings_.epsilon);
    const Scalar lr = Scalar(settings_.learning_rate);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& g = params[k]->grad;
      auto& eg = grad_sq_[k];
      auto& ed = delta_sq_[k];
      eg.array() = rho * eg.array() + (Scalar(1) - rho) * g.array().square();
      const nn::Matrix<Scalar> dx = (-((ed.array() + eps).sqrt() / (eg.array() + eps).sqrt()) * g.array()).matrix();
      ed.array() = rho * ed.array() + (Scalar(1) - rho) * dx.array().square();
      params[k]->value.noalias() += lr * dx;
    }
  }

  const AdadeltaSettings& settings() const { return settings_; }

 private:
  AdadeltaSettings settings_;
  std::vector<nn::Matrix<Scalar>> grad_sq_, delta_sq_;
};

}  // namespace gleason
