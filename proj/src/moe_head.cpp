//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#include "mvcgt/moe_head.h"

#include <cmath>

#include <json.hpp>

namespace mvcgt {

template <class T>
MoeHead<T>::MoeHead(ParamStore<T> &store, const std::string &name, int width)
    : width(width),
      expert_se3(store, name + ".expert_se3", width, width, width),
      expert_so3(store, name + ".expert_so3", width, width, width),
      query(store, name + ".router.query", width, width),
      key(store, name + ".router.key", width, width),
      value(store, name + ".router.value", width, width),
      score(store, name + ".router.score", width, 1),
      output(store, name + ".output", width, 1) { }

template <class T>
FusionOutput<T>
MoeHead<T>::operator()(const Tensor<T> &e_se3, const Tensor<T> &e_so3,
                       const std::optional<std::array<T, 2>> &forced) const {
  const Tensor<T> h1 = expert_se3(e_se3);
  const Tensor<T> h2 = expert_so3(e_so3);
  const int batch = h1.rows();

  Tensor<T> w1, w2;
  if (forced) {
    w1 = Tensor<T>::full({ batch, 1 }, (*forced)[0]);
    w2 = Tensor<T>::full({ batch, 1 }, (*forced)[1]);
  } else {
    const T s = static_cast<T>(1.0 / std::sqrt(static_cast<double>(width)));
    const Tensor<T> q1 = query(h1), q2 = query(h2);
    const Tensor<T> k1 = key(h1), k2 = key(h2);
    const Tensor<T> v1 = value(h1), v2 = value(h2);
    auto logit = [&](const Tensor<T> &q, const Tensor<T> &k) {
      return scale(sum(mul(q, k), 1), s);
    };
    // A softmax over two tokens is the sigmoid of the logit difference.
    const Tensor<T> a1 = sigmoid(sub(logit(q1, k1), logit(q1, k2)));
    const Tensor<T> a2 = sigmoid(sub(logit(q2, k1), logit(q2, k2)));
    auto mix = [](const Tensor<T> &a, const Tensor<T> &x,
                  const Tensor<T> &y) {
      return add(y, mul(a, sub(x, y)));
    };
    w1 = score(mix(a1, v1, v2));
    w2 = score(mix(a2, v1, v2));
  }
  FusionOutput<T> out;
  out.prediction = output(add(mul(w1, h1), mul(w2, h2)));
  out.weights = concat<T>({ w1, w2 }, 1);
  return out;
}

template <class T>
ConcatHead<T>::ConcatHead(ParamStore<T> &store, const std::string &name,
                          int width)
    : hidden(store, name + ".hidden", 2 * width, width),
      output(store, name + ".output", width, 1) { }

template <class T>
FusionOutput<T> ConcatHead<T>::operator()(const Tensor<T> &e_se3,
                                          const Tensor<T> &e_so3) const {
  FusionOutput<T> out;
  out.prediction = output(softplus(hidden(concat<T>({ e_se3, e_so3 }, 1))));
  return out;
}

ContributionReport
report_contributions(std::string task,
                     std::vector<std::array<double, 2>> scores) {
  ContributionReport r;
  r.task = std::move(task);
  r.scores = std::move(scores);
  if (!r.scores.empty()) {
    for (const auto &s: r.scores) {
      r.mean[0] += s[0];
      r.mean[1] += s[1];
    }
    r.mean[0] /= static_cast<double>(r.scores.size());
    r.mean[1] /= static_cast<double>(r.scores.size());
  }
  return r;
}

std::string ContributionReport::to_json() const {
  nlohmann::json j;
  j["task"] = task;
  j["scores"] = scores;
  j["mean"] = mean;
  return j.dump();
}

template class MoeHead<float>;
template class MoeHead<double>;
template class ConcatHead<float>;
template class ConcatHead<double>;

}  // namespace mvcgt
