//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MVCGT_PARAMS_H_
#define MVCGT_PARAMS_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mvcgt/tensor.h"

namespace mvcgt {

template <class T>
struct ParamEntry {
  std::string name;
  Tensor<T> tensor;
  // Buffers (batch-norm running statistics) are saved but never optimized.
  bool trainable = true;
};

// Ordered, named parameter collection. Registration order is the
// checkpoint order.
template <class T>
class ParamStore {
public:
  explicit ParamStore(std::uint64_t seed = 0): seed_(seed) { }

  ParamStore(const ParamStore &) = delete;
  ParamStore &operator=(const ParamStore &) = delete;

  std::uint64_t seed() const { return seed_; }

  // Uniform(-bound, bound) initialization from the stream named `name`.
  Tensor<T> uniform(const std::string &name, Shape shape, double bound);
  Tensor<T> constant(const std::string &name, Shape shape, T value,
                     bool trainable = true);

  const std::vector<ParamEntry<T>> &entries() const { return entries_; }
  std::vector<ParamEntry<T>> &entries() { return entries_; }

  const ParamEntry<T> *find(std::string_view name) const;
  ParamEntry<T> *find(std::string_view name);
  bool contains(std::string_view name) const { return find(name) != nullptr; }

  void zero_grad();
  std::size_t num_trainable() const;

private:
  Tensor<T> add(const std::string &name, Tensor<T> tensor, bool trainable);

  std::uint64_t seed_;
  std::vector<ParamEntry<T>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace mvcgt

#endif  // MVCGT_PARAMS_H_
