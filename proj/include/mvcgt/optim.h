//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MVCGT_OPTIM_H_
#define MVCGT_OPTIM_H_

#include <cstdint>
#include <vector>

#include "mvcgt/params.h"

namespace mvcgt {

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// AdamW with decoupled weight decay:
//   theta <- theta - lr * wd * theta
//   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
template <class T>
class AdamW {
public:
  AdamW(ParamStore<T> &store, AdamWOptions opts);

  // Applies one update from the gradients currently held by the store.
  // `lr` overrides the configured rate for this step (schedules).
  void step(double lr);
  void step() { step(opts_.lr); }

  std::int64_t steps() const { return t_; }
  const AdamWOptions &options() const { return opts_; }

  // First/second moments, index-aligned with the trainable entries.
  const std::vector<std::vector<double>> &first_moments() const { return m_; }
  const std::vector<std::vector<double>> &second_moments() const {
    return v_;
  }

private:
  ParamStore<T> *store_;
  AdamWOptions opts_;
  std::vector<std::size_t> trainable_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t t_ = 0;
};

extern template class AdamW<float>;
extern template class AdamW<double>;

// Linear warmup 0 -> lr_max over `warmup` steps, then cosine annealing to
// lr_min at `total_steps`.
double lr_schedule(std::int64_t step, std::int64_t total_steps,
                   std::int64_t warmup, double lr_max, double lr_min);

}  // namespace mvcgt

#endif  // MVCGT_OPTIM_H_
