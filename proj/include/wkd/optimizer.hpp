#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wkd/tensor.hpp"

namespace wkd::tn {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Moment buffers for a fixed list of parameters. `lr_scale[i]` multiplies
// the base rate for parameter i (1 when absent).
class Adam {
 public:
  Adam(AdamConfig cfg, std::span<Tensor* const> params, std::vector<float> lr_scale = {});

  const AdamConfig& config() const { return cfg_; }
  void set_lr(float lr) { cfg_.lr = lr; }
  std::uint64_t step_count() const { return step_; }

  // Refuses the whole step (nothing is modified) when any gradient is
  // non-finite or shaped differently from its parameter.
  void step(std::span<Tensor* const> params, std::span<const Tensor> grads);

 private:
  AdamConfig cfg_;
  std::uint64_t step_ = 0;
  std::vector<float> lr_scale_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace wkd::tn
