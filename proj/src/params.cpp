//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#include "mvcgt/params.h"

#include <stdexcept>

#include "mvcgt/rng.h"

namespace mvcgt {

template <class T>
Tensor<T> ParamStore<T>::add(const std::string &name, Tensor<T> tensor,
                             bool trainable) {
  if (index_.contains(name))
    throw std::logic_error("duplicate parameter name: " + name);
  tensor.set_requires_grad(trainable);
  index_.emplace(name, entries_.size());
  entries_.push_back({ name, tensor, trainable });
  return tensor;
}

template <class T>
Tensor<T> ParamStore<T>::uniform(const std::string &name, Shape shape,
                                 double bound) {
  CounterRng rng = CounterRng::named(seed_, name);
  std::vector<T> data(shape_numel(shape));
  for (T &v: data)
    v = static_cast<T>(rng.uniform(-bound, bound));
  return add(name, Tensor<T>::from_data(std::move(shape), std::move(data)),
             true);
}

template <class T>
Tensor<T> ParamStore<T>::constant(const std::string &name, Shape shape,
                                  T value, bool trainable) {
  return add(name, Tensor<T>::full(std::move(shape), value), trainable);
}

template <class T>
const ParamEntry<T> *ParamStore<T>::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : &entries_[it->second];
}

template <class T>
ParamEntry<T> *ParamStore<T>::find(std::string_view name) {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : &entries_[it->second];
}

template <class T>
void ParamStore<T>::zero_grad() {
  for (auto &e: entries_)
    if (e.trainable)
      e.tensor.zero_grad();
}

template <class T>
std::size_t ParamStore<T>::num_trainable() const {
  std::size_t n = 0;
  for (const auto &e: entries_)
    if (e.trainable)
      n += e.tensor.numel();
  return n;
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace mvcgt
