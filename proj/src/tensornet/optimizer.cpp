#include "wkd/optimizer.hpp"

#include <cmath>

namespace wkd::tn {

Adam::Adam(AdamConfig cfg, std::span<Tensor* const> params, std::vector<float> lr_scale)
    : cfg_(cfg), lr_scale_(std::move(lr_scale)) {
  if (lr_scale_.empty()) lr_scale_.assign(params.size(), 1.0f);
  if (lr_scale_.size() != params.size()) throw UsageError("lr_scale size must match params");
  for (const Tensor* p : params) {
    m_.emplace_back(p->shape());
    v_.emplace_back(p->shape());
  }
}

void Adam::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw UsageError("optimizer was built for " + std::to_string(m_.size()) + " parameters");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != params[i]->shape() || m_[i].shape() != params[i]->shape()) {
      throw ShapeError("gradient " + std::to_string(i) + " shape " + shape_str(grads[i].shape()) +
                       " does not match parameter " + shape_str(params[i]->shape()));
    }
    if (!grads[i].all_finite()) throw NumericError("non-finite gradient; optimizer step refused");
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const float lr = cfg_.lr * lr_scale_[i];
    float* p = params[i]->ptr();
    float* m = m_[i].ptr();
    float* v = v_[i].ptr();
    const float* g = grads[i].ptr();
    for (std::size_t k = 0; k < m_[i].size(); ++k) {
      m[k] = cfg_.beta1 * m[k] + (1.0f - cfg_.beta1) * g[k];
      v[k] = cfg_.beta2 * v[k] + (1.0f - cfg_.beta2) * g[k] * g[k];
      const float mhat = static_cast<float>(m[k] / bc1);
      const float vhat = static_cast<float>(v[k] / bc2);
      p[k] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace wkd::tn
