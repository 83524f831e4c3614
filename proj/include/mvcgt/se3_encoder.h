//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MVCGT_SE3_ENCODER_H_
#define MVCGT_SE3_ENCODER_H_

#include <string>
#include <vector>

#include "mvcgt/batch.h"
#include "mvcgt/layers.h"
#include "mvcgt/nn.h"

namespace mvcgt {

struct EncoderDims {
  int atom_dim = 100;
  int width = 64;
  int distance_rbf = 64;
  int angle_rbf = 64;
  int node_layers = 3;
  // Equivariant encoder only.
  int channels = 16;
  int l_max = 2;

  int lattice_dim() const { return distance_rbf + 6; }
};

template <class T>
struct EncoderOutput {
  Tensor<T> nodes;   // N x d
  Tensor<T> edges;   // E x d
  Tensor<T> graph;   // G x d, after the projection head
  // Equivariant encoder only: outputs of the two tensor-product layers.
  Tensor<T> tp1, tp2;
};

// Invariant view: one edge-wise layer, a stack of node-wise layers, mean
// pooling and the projection head.
template <class T>
class Se3Encoder {
public:
  Se3Encoder() = default;
  Se3Encoder(ParamStore<T> &store, const std::string &name,
             const EncoderDims &dims);

  EncoderOutput<T> operator()(const ModelInputs<T> &in, RunMode mode) const;

  Linear<T> atom_embed, edge_embed;
  EdgeWiseLayer<T> edge_layer;
  std::vector<NodeWiseLayer<T>> node_layers;
  ProjectionHead<T> head;
};

}  // namespace mvcgt

#endif  // MVCGT_SE3_ENCODER_H_
