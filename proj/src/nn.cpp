//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#include "mvcgt/nn.h"

#include <algorithm>
#include <cmath>

namespace mvcgt {

template <class T>
Linear<T>::Linear(ParamStore<T> &store, const std::string &name, int in,
                  int out, bool bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = store.uniform(name + ".weight", { in, out }, bound);
  if (bias)
    this->bias = store.uniform(name + ".bias", { out }, bound);
}

template <class T>
Tensor<T> Linear<T>::operator()(const Tensor<T> &x) const {
  return linear(x, weight, bias);
}

template <class T>
Mlp<T>::Mlp(ParamStore<T> &store, const std::string &name, int in,
            int hidden, int out)
    : first(store, name + ".0", in, hidden),
      second(store, name + ".1", hidden, out) { }

template <class T>
Tensor<T> Mlp<T>::operator()(const Tensor<T> &x) const {
  return second(softplus(first(x)));
}

template <class T>
BatchNorm<T>::BatchNorm(ParamStore<T> &store, const std::string &name,
                        int features) {
  gamma = store.constant(name + ".gamma", { features }, T(1));
  beta = store.constant(name + ".beta", { features }, T(0));
  running_mean = store.constant(name + ".running_mean", { features }, T(0),
                                false);
  running_var = store.constant(name + ".running_var", { features }, T(1),
                               false);
}

template <class T>
Tensor<T> BatchNorm<T>::operator()(const Tensor<T> &x, RunMode mode) const {
  return batch_norm(x, gamma, beta, running_mean, running_var,
                    mode == RunMode::kTrain);
}

template <class T>
LayerNorm<T>::LayerNorm(ParamStore<T> &store, const std::string &name,
                        int features) {
  gamma = store.constant(name + ".gamma", { features }, T(1));
  beta = store.constant(name + ".beta", { features }, T(0));
}

template <class T>
Tensor<T> LayerNorm<T>::operator()(const Tensor<T> &x) const {
  return layer_norm(x, gamma, beta);
}

template <class T>
ProjectionHead<T>::ProjectionHead(ParamStore<T> &store,
                                  const std::string &name, int width)
    : l1(store, name + ".l1", width, width),
      l2(store, name + ".l2", width, width),
      norm(store, name + ".norm", width) { }

template <class T>
Tensor<T> ProjectionHead<T>::operator()(const Tensor<T> &z) const {
  return add(z, norm(l2(l1(z))));
}

template <class T>
void fill_(Tensor<T> &t, T value) {
  auto d = t.data();
  std::fill(d.begin(), d.end(), value);
}

template class Linear<float>;
template class Linear<double>;
template class Mlp<float>;
template class Mlp<double>;
template class BatchNorm<float>;
template class BatchNorm<double>;
template class LayerNorm<float>;
template class LayerNorm<double>;
template class ProjectionHead<float>;
template class ProjectionHead<double>;
template void fill_(Tensor<float> &, float);
template void fill_(Tensor<double> &, double);

}  // namespace mvcgt
