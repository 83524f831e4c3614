//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MVCGT_SO3_ENCODER_H_
#define MVCGT_SO3_ENCODER_H_

#include <string>
#include <vector>

#include "mvcgt/se3_encoder.h"

namespace mvcgt {

// out_i = softplus(f_l(softplus(BN(h2_i)))) + h0_i
template <class T>
class EquivariantReadout {
public:
  EquivariantReadout() = default;
  EquivariantReadout(ParamStore<T> &store, const std::string &name,
                     int channels);

  Tensor<T> operator()(const Tensor<T> &h0, const Tensor<T> &h2,
                       RunMode mode) const;

  BatchNorm<T> norm;
  Linear<T> proj;
};

// Equivariant view: scalar input projection, a tensor-product layer to
// degrees 0..l_max, a second one back to scalars, the readout, a lift to
// the model width, node-wise layers, mean pooling and the projection head.
template <class T>
class So3Encoder {
public:
  So3Encoder() = default;
  So3Encoder(ParamStore<T> &store, const std::string &name,
             const EncoderDims &dims);

  EncoderOutput<T> operator()(const ModelInputs<T> &in, RunMode mode) const;

  int channels = 0, l_max = 0;
  Linear<T> input;
  TensorProductLayer<T> tp1, tp2;
  EquivariantReadout<T> readout;
  Linear<T> lift, edge_embed;
  std::vector<NodeWiseLayer<T>> node_layers;
  ProjectionHead<T> head;
};

}  // namespace mvcgt

#endif  // MVCGT_SO3_ENCODER_H_
