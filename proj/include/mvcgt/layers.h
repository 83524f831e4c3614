//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MVCGT_LAYERS_H_
#define MVCGT_LAYERS_H_

#include <array>
#include <span>
#include <string>
#include <vector>

#include "mvcgt/nn.h"
#include "mvcgt/tensor.h"

namespace mvcgt {

// Updates edge features from the three angle channels and the three
// lattice channels of the source node:
//   Q   = f_Q(e)
//   K_k = phi_K(f_K(e) | f_Kk(l_k) | f_E(theta_k)), V_k likewise
//   a_k = sigmoid(BN_k(Q * K_k / sqrt(d)))
//   out = softplus(e + BN(sum_k a_k * V_k))
template <class T>
class EdgeWiseLayer {
public:
  EdgeWiseLayer() = default;
  EdgeWiseLayer(ParamStore<T> &store, const std::string &name, int width,
                int angle_dim, int lattice_dim);

  // `lattice` holds node-level rows; they are gathered through `src`.
  Tensor<T> operator()(const Tensor<T> &edges,
                       const std::array<Tensor<T>, 3> &angle_rbf,
                       const std::array<Tensor<T>, 3> &lattice,
                       std::span<const int> src, RunMode mode) const;

  int width = 0;
  Linear<T> query, key, value;
  std::array<Linear<T>, 3> key_lattice, value_lattice;
  Linear<T> key_angle, value_angle;
  Mlp<T> key_mlp, value_mlp;
  std::array<BatchNorm<T>, 3> attn_norm;
  BatchNorm<T> msg_norm;
};

// Node update over the edges leaving each node (src = i, dst = neighbor):
//   K_ij = phi_K(f_K(h_i) | f_K(h_j) | f_E(e_ij)), V_ij likewise
//   out_i = softplus(h_i + BN(sum_j sigmoid(BN(Q_i * K_ij / sqrt(d))) V_ij))
template <class T>
class NodeWiseLayer {
public:
  NodeWiseLayer() = default;
  NodeWiseLayer(ParamStore<T> &store, const std::string &name, int width);

  Tensor<T> operator()(const Tensor<T> &nodes, const Tensor<T> &edges,
                       std::span<const int> src, std::span<const int> dst,
                       RunMode mode) const;

  int width = 0;
  Linear<T> query, key, value;
  Linear<T> key_edge, value_edge;
  Mlp<T> key_mlp, value_mlp;
  BatchNorm<T> attn_norm;
  BatchNorm<T> msg_norm;
};

// Irreducible features with degrees 0..l_max and a uniform channel count
// are stored per row as consecutive degree blocks; inside block l, entry
// (c, m) sits at channels * l^2 + c * (2l + 1) + m.
inline int irreps_dim(int channels, int l_max) {
  return channels * (l_max + 1) * (l_max + 1);
}

struct TensorProductPath {
  int l_in, l_filter, l_out;
};

// Every (l_in, l_filter, l_out) within the given maxima allowed by the
// coupling selection rule, in lexicographic order.
std::vector<TensorProductPath> tensor_product_paths(int l_in_max,
                                                    int l_filter_max,
                                                    int l_out_max);

// Per row e, channel c and path p:
//   out[l_out, c, :] += w[e, p * C + c] * sum C_p[m1, m2, m3] x[l_in, c, m1]
//                       y[l_filter, m2]
// x: (E, irreps_dim(C, l_in_max)), y: (E, (l_filter_max + 1)^2),
// w: (E, P * C). Differentiable in all three operands.
template <class T>
Tensor<T> tensor_product(const Tensor<T> &x, const Tensor<T> &y,
                         const Tensor<T> &w,
                         const std::vector<TensorProductPath> &paths,
                         int channels, int l_in_max, int l_out_max);

// h_i' = mean_{e: src(e) = i} TP(h_dst(e), Y_e, W(rbf_e)) + h_i, where the
// residual is restricted (or zero padded) to the output degrees.
template <class T>
class TensorProductLayer {
public:
  TensorProductLayer() = default;
  TensorProductLayer(ParamStore<T> &store, const std::string &name,
                     int channels, int l_in_max, int l_filter_max,
                     int l_out_max, int rbf_dim);

  Tensor<T> operator()(const Tensor<T> &nodes, const Tensor<T> &harmonics,
                       const Tensor<T> &rbf, std::span<const int> src,
                       std::span<const int> dst) const;

  int channels = 0, l_in_max = 0, l_filter_max = 0, l_out_max = 0;
  std::vector<TensorProductPath> paths;
  Linear<T> path_weights;  // W(e): rbf -> (path, channel)
};

}  // namespace mvcgt

#endif  // MVCGT_LAYERS_H_
