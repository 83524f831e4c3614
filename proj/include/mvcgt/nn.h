//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MVCGT_NN_H_
#define MVCGT_NN_H_

#include <string>

#include "mvcgt/params.h"
#include "mvcgt/tensor.h"

namespace mvcgt {

enum class RunMode { kTrain, kEval };

template <class T>
class Linear {
public:
  Linear() = default;
  Linear(ParamStore<T> &store, const std::string &name, int in, int out,
         bool bias = true);

  Tensor<T> operator()(const Tensor<T> &x) const;

  int in_features() const { return weight.rows(); }
  int out_features() const { return weight.cols(); }

  Tensor<T> weight;  // (in, out)
  Tensor<T> bias;    // (out,), undefined when built without bias
};

// linear -> softplus -> linear
template <class T>
class Mlp {
public:
  Mlp() = default;
  Mlp(ParamStore<T> &store, const std::string &name, int in, int hidden,
      int out);

  Tensor<T> operator()(const Tensor<T> &x) const;

  Linear<T> first;
  Linear<T> second;
};

template <class T>
class BatchNorm {
public:
  BatchNorm() = default;
  BatchNorm(ParamStore<T> &store, const std::string &name, int features);

  Tensor<T> operator()(const Tensor<T> &x, RunMode mode) const;

  Tensor<T> gamma, beta;
  mutable Tensor<T> running_mean, running_var;
};

template <class T>
class LayerNorm {
public:
  LayerNorm() = default;
  LayerNorm(ParamStore<T> &store, const std::string &name, int features);

  Tensor<T> operator()(const Tensor<T> &x) const;

  Tensor<T> gamma, beta;
};

// z + LNorm(l2(l1 z)), both linear maps with bias.
template <class T>
class ProjectionHead {
public:
  ProjectionHead() = default;
  ProjectionHead(ParamStore<T> &store, const std::string &name, int width);

  Tensor<T> operator()(const Tensor<T> &z) const;

  Linear<T> l1, l2;
  LayerNorm<T> norm;
};

// Overwrites every element of `t` in place (used to build degenerate
// configurations in tests and forced-path checks).
template <class T>
void fill_(Tensor<T> &t, T value);

}  // namespace mvcgt

#endif  // MVCGT_NN_H_
