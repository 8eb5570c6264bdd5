#include "attnhtr/optim.hpp"

#include <cmath>

namespace attnhtr {

double Adam::step(ad::ParameterStore& store) {
  double norm_sq = 0.0;
  for (const ad::Parameter* p : store.all()) {
    if (p->trainable && p->grad.size() != 0) norm_sq += p->grad.squaredNorm();
  }
  const double norm = std::sqrt(norm_sq);
  double factor = 1.0;
  if (config_.clip_norm > 0.0 && norm > config_.clip_norm) factor = config_.clip_norm / norm;

  ++steps_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (ad::Parameter* p : store.all()) {
    if (!p->trainable || p->grad.size() == 0) continue;
    auto [it, inserted] = moments_.try_emplace(p->name);
    Moments& m = it->second;
    if (inserted || m.first.rows() != p->value.rows() || m.first.cols() != p->value.cols()) {
      m.first = ad::Matrix::Zero(p->value.rows(), p->value.cols());
      m.second = ad::Matrix::Zero(p->value.rows(), p->value.cols());
    }
    const ad::Matrix g = p->grad * factor;
    m.first = config_.beta1 * m.first + (1.0 - config_.beta1) * g;
    m.second = config_.beta2 * m.second + (1.0 - config_.beta2) * g.cwiseProduct(g);
    p->value.array() -= config_.learning_rate * (m.first.array() / bc1) /
                        ((m.second.array() / bc2).sqrt() + config_.epsilon);
  }
  return norm;
}

void Adam::restore(long long steps, std::map<std::string, Moments> moments) {
  steps_ = steps;
  moments_ = std::move(moments);
}

}  // namespace attnhtr
