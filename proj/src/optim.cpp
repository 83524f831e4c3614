//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#include "mvcgt/optim.h"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mvcgt {

template <class T>
AdamW<T>::AdamW(ParamStore<T> &store, AdamWOptions opts)
    : store_(&store), opts_(opts) {
  const auto &entries = store.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!entries[i].trainable)
      continue;
    trainable_.push_back(i);
    m_.emplace_back(entries[i].tensor.numel(), 0.0);
    v_.emplace_back(entries[i].tensor.numel(), 0.0);
  }
}

template <class T>
void AdamW<T>::step(double lr) {
  ++t_;
  const double b1 = opts_.beta1, b2 = opts_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double decay = 1.0 - lr * opts_.weight_decay;

  auto &entries = store_->entries();
  for (std::size_t k = 0; k < trainable_.size(); ++k) {
    Tensor<T> &p = entries[trainable_[k]].tensor;
    auto theta = p.data();
    auto grad = p.grad();
    const bool has_grad = p.has_grad();
    auto &m = m_[k];
    auto &v = v_[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = has_grad ? static_cast<double>(grad[i]) : 0.0;
      double x = static_cast<double>(theta[i]) * decay;
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      x -= lr * m_hat / (std::sqrt(v_hat) + opts_.eps);
      theta[i] = static_cast<T>(x);
    }
  }
}

double lr_schedule(std::int64_t step, std::int64_t total_steps,
                   std::int64_t warmup, double lr_max, double lr_min) {
  step = std::clamp<std::int64_t>(step, 0, total_steps);
  if (warmup > 0 && step < warmup)
    return lr_max * static_cast<double>(step) / static_cast<double>(warmup);
  const std::int64_t span = total_steps - warmup;
  if (span <= 0)
    return lr_max;
  const double progress = static_cast<double>(step - warmup)
                          / static_cast<double>(span);
  return lr_min
         + 0.5 * (lr_max - lr_min)
             * (1.0 + std::cos(std::numbers::pi * progress));
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace mvcgt
