#pragma once

#include "dualcap/parameter.hpp"

#include <map>
#include <string>

namespace dualcap {

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay. Frozen parameters are never touched.
/// Parameters and moments are rounded to float32 after every update so that a
/// float32 checkpoint restores the exact training state.
class AdamW {
 public:
  struct Moments {
    Matrix first;
    Matrix second;
  };

  explicit AdamW(OptimizerConfig cfg) : cfg_(cfg) {}

  void step(const ParamList& params);

  long long steps() const { return steps_; }
  const OptimizerConfig& config() const { return cfg_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }

  void restore(long long steps, std::map<std::string, Moments> moments) {
    steps_ = steps;
    moments_ = std::move(moments);
  }

 private:
  OptimizerConfig cfg_;
  long long steps_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace dualcap
