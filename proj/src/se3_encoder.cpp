//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#include "mvcgt/se3_encoder.h"

namespace mvcgt {

template <class T>
Se3Encoder<T>::Se3Encoder(ParamStore<T> &store, const std::string &name,
                          const EncoderDims &dims)
    : atom_embed(store, name + ".atom_embed", dims.atom_dim, dims.width),
      edge_embed(store, name + ".edge_embed", dims.distance_rbf, dims.width),
      edge_layer(store, name + ".edge_layer", dims.width, dims.angle_rbf,
                 dims.lattice_dim()) {
  for (int k = 0; k < dims.node_layers; ++k)
    node_layers.emplace_back(store,
                             name + ".node_layer." + std::to_string(k),
                             dims.width);
  head = ProjectionHead<T>(store, name + ".head", dims.width);
}

template <class T>
EncoderOutput<T> Se3Encoder<T>::operator()(const ModelInputs<T> &in,
                                           RunMode mode) const {
  EncoderOutput<T> out;
  Tensor<T> h = atom_embed(in.atoms);
  out.edges = edge_layer(edge_embed(in.distance_rbf), in.angle_rbf,
                         in.lattice, in.src, mode);
  for (const auto &layer: node_layers)
    h = layer(h, out.edges, in.src, in.dst, mode);
  out.nodes = h;
  out.graph = head(segment_mean(h, in.node_graph, in.num_graphs));
  return out;
}

template class Se3Encoder<float>;
template class Se3Encoder<double>;

}  // namespace mvcgt
