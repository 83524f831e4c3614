//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#include "mvcgt/so3_encoder.h"

#include <stdexcept>

#include "mvcgt/spherical.h"

namespace mvcgt {

template <class T>
EquivariantReadout<T>::EquivariantReadout(ParamStore<T> &store,
                                          const std::string &name,
                                          int channels)
    : norm(store, name + ".norm", channels),
      proj(store, name + ".proj", channels, channels) { }

template <class T>
Tensor<T> EquivariantReadout<T>::operator()(const Tensor<T> &h0,
                                            const Tensor<T> &h2,
                                            RunMode mode) const {
  return add(softplus(proj(softplus(norm(h2, mode)))), h0);
}

template <class T>
So3Encoder<T>::So3Encoder(ParamStore<T> &store, const std::string &name,
                          const EncoderDims &dims)
    : channels(dims.channels), l_max(dims.l_max) {
  if (dims.l_max < 0 || dims.l_max > kMaxDegree)
    throw std::invalid_argument("l_max must be in [0, 3]");
  if (dims.channels < 1)
    throw std::invalid_argument("equivariant channel count must be >= 1");
  input = Linear<T>(store, name + ".input", dims.atom_dim, channels);
  tp1 = TensorProductLayer<T>(store, name + ".tp1", channels, 0, l_max,
                              l_max, dims.distance_rbf);
  tp2 = TensorProductLayer<T>(store, name + ".tp2", channels, l_max, l_max,
                              0, dims.distance_rbf);
  readout = EquivariantReadout<T>(store, name + ".readout", channels);
  lift = Linear<T>(store, name + ".lift", channels, dims.width);
  edge_embed = Linear<T>(store, name + ".edge_embed", dims.distance_rbf,
                         dims.width);
  for (int k = 0; k < dims.node_layers; ++k)
    node_layers.emplace_back(store,
                             name + ".node_layer." + std::to_string(k),
                             dims.width);
  head = ProjectionHead<T>(store, name + ".head", dims.width);
}

template <class T>
EncoderOutput<T> So3Encoder<T>::operator()(const ModelInputs<T> &in,
                                           RunMode mode) const {
  if (in.l_max < l_max)
    throw ShapeError("inputs carry harmonics up to degree "
                     + std::to_string(in.l_max) + ", encoder needs "
                     + std::to_string(l_max));
  Tensor<T> harmonics = in.harmonics;
  if (in.l_max > l_max)
    harmonics = slice(harmonics, 1, 0, sh_size(l_max));

  EncoderOutput<T> out;
  const Tensor<T> h0 = input(in.atoms);
  out.tp1 = tp1(h0, harmonics, in.so3_distance_rbf, in.src, in.dst);
  out.tp2 = tp2(out.tp1, harmonics, in.so3_distance_rbf, in.src, in.dst);
  Tensor<T> h = lift(readout(h0, out.tp2, mode));
  out.edges = edge_embed(in.so3_distance_rbf);
  for (const auto &layer: node_layers)
    h = layer(h, out.edges, in.src, in.dst, mode);
  out.nodes = h;
  out.graph = head(segment_mean(h, in.node_graph, in.num_graphs));
  return out;
}

template class EquivariantReadout<float>;
template class EquivariantReadout<double>;
template class So3Encoder<float>;
template class So3Encoder<double>;

}  // namespace mvcgt
