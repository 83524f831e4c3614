//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MVCGT_MOE_HEAD_H_
#define MVCGT_MOE_HEAD_H_

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "mvcgt/nn.h"

namespace mvcgt {

template <class T>
struct FusionOutput {
  Tensor<T> prediction;  // B x 1
  // B x 2 raw router weights (invariant, SE3 first); undefined for the
  // concat baseline.
  Tensor<T> weights;
};

// Two experts, one per view. The two expert outputs form a two-token
// sequence; single-head self-attention over it followed by a scalar head
// per token gives the (unnormalized) expert weights.
template <class T>
class MoeHead {
public:
  MoeHead() = default;
  MoeHead(ParamStore<T> &store, const std::string &name, int width);

  // `forced` replaces the router output for every sample.
  FusionOutput<T>
  operator()(const Tensor<T> &e_se3, const Tensor<T> &e_so3,
             const std::optional<std::array<T, 2>> &forced = {}) const;

  int width = 0;
  Mlp<T> expert_se3, expert_so3;
  Linear<T> query, key, value;
  Linear<T> score;
  Linear<T> output;
};

// linear2(softplus(linear1(E1 | E2)))
template <class T>
class ConcatHead {
public:
  ConcatHead() = default;
  ConcatHead(ParamStore<T> &store, const std::string &name, int width);

  FusionOutput<T> operator()(const Tensor<T> &e_se3,
                             const Tensor<T> &e_so3) const;

  Linear<T> hidden, output;
};

struct ContributionReport {
  std::string task;
  std::vector<std::array<double, 2>> scores;
  std::array<double, 2> mean { 0.0, 0.0 };

  // {"task": ..., "scores": [[w1, w2], ...], "mean": [m1, m2]}
  std::string to_json() const;
};

ContributionReport
report_contributions(std::string task,
                     std::vector<std::array<double, 2>> scores);

}  // namespace mvcgt

#endif  // MVCGT_MOE_HEAD_H_
