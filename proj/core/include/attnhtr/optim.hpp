#pragma once

#include <map>
#include <string>

#include "attnhtr/autodiff.hpp"

namespace attnhtr {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Global gradient-norm clip; <= 0 disables it.
  double clip_norm = 0.0;
};

class Adam {
 public:
  struct Moments {
    ad::Matrix first;
    ad::Matrix second;
  };

  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // Updates every trainable parameter from its accumulated gradient.
  // Returns the global gradient norm before clipping.
  double step(ad::ParameterStore& store);

  long long steps() const { return steps_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }
  void restore(long long steps, std::map<std::string, Moments> moments);
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  AdamConfig config_;
  long long steps_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace attnhtr
