//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#include "mvcgt/layers.h"

#include <cmath>

#include "mvcgt/spherical.h"

namespace mvcgt {
namespace {
  // x * (rows [block * width, (block + 1) * width) of lin.weight): one block
  // of lin applied to a concatenated input, without building the concat.
  template <class T>
  Tensor<T> block_matmul(const Tensor<T> &x, const Linear<T> &lin, int block,
                         int width) {
    return matmul(x, slice(lin.weight, 0, block * width,
                           (block + 1) * width));
  }

  template <class T>
  T inv_sqrt(int d) {
    return static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));
  }
}  // namespace

template <class T>
EdgeWiseLayer<T>::EdgeWiseLayer(ParamStore<T> &store, const std::string &name,
                                int width, int angle_dim, int lattice_dim)
    : width(width),
      query(store, name + ".query", width, width),
      key(store, name + ".key", width, width),
      value(store, name + ".value", width, width),
      key_angle(store, name + ".key_angle", angle_dim, width),
      value_angle(store, name + ".value_angle", angle_dim, width),
      key_mlp(store, name + ".key_mlp", 3 * width, width, width),
      value_mlp(store, name + ".value_mlp", 3 * width, width, width),
      msg_norm(store, name + ".msg_norm", width) {
  for (int k = 0; k < 3; ++k) {
    const std::string ks = std::to_string(k);
    key_lattice[k] = Linear<T>(store, name + ".key_lattice." + ks,
                               lattice_dim, width);
    value_lattice[k] = Linear<T>(store, name + ".value_lattice." + ks,
                                 lattice_dim, width);
    attn_norm[k] = BatchNorm<T>(store, name + ".attn_norm." + ks, width);
  }
}

template <class T>
Tensor<T> EdgeWiseLayer<T>::operator()(
  const Tensor<T> &edges, const std::array<Tensor<T>, 3> &angle_rbf,
  const std::array<Tensor<T>, 3> &lattice, std::span<const int> src,
  RunMode mode) const {
  const int d = width;
  const Tensor<T> q = scale(query(edges), inv_sqrt<T>(d));
  // Edge block of the first MLP layer is shared by the three channels.
  const Tensor<T> k_edge = add(block_matmul(key(edges), key_mlp.first, 0, d),
                               key_mlp.first.bias);
  const Tensor<T> v_edge = add(
    block_matmul(value(edges), value_mlp.first, 0, d), value_mlp.first.bias);

  Tensor<T> message;
  for (int k = 0; k < 3; ++k) {
    const Tensor<T> k_lat = gather_rows(
      block_matmul(key_lattice[k](lattice[k]), key_mlp.first, 1, d), src);
    const Tensor<T> v_lat = gather_rows(
      block_matmul(value_lattice[k](lattice[k]), value_mlp.first, 1, d), src);
    const Tensor<T> k_ang = block_matmul(key_angle(angle_rbf[k]),
                                         key_mlp.first, 2, d);
    const Tensor<T> v_ang = block_matmul(value_angle(angle_rbf[k]),
                                         value_mlp.first, 2, d);
    const Tensor<T> keys = key_mlp.second(
      softplus(add(add(k_edge, k_lat), k_ang)));
    const Tensor<T> values = value_mlp.second(
      softplus(add(add(v_edge, v_lat), v_ang)));
    const Tensor<T> alpha = sigmoid(attn_norm[k](mul(q, keys), mode));
    const Tensor<T> term = mul(alpha, values);
    message = message.defined() ? add(message, term) : term;
  }
  return softplus(add(edges, msg_norm(message, mode)));
}

template <class T>
NodeWiseLayer<T>::NodeWiseLayer(ParamStore<T> &store, const std::string &name,
                                int width)
    : width(width),
      query(store, name + ".query", width, width),
      key(store, name + ".key", width, width),
      value(store, name + ".value", width, width),
      key_edge(store, name + ".key_edge", width, width),
      value_edge(store, name + ".value_edge", width, width),
      key_mlp(store, name + ".key_mlp", 3 * width, width, width),
      value_mlp(store, name + ".value_mlp", 3 * width, width, width),
      attn_norm(store, name + ".attn_norm", width),
      msg_norm(store, name + ".msg_norm", width) { }

template <class T>
Tensor<T> NodeWiseLayer<T>::operator()(const Tensor<T> &nodes,
                                       const Tensor<T> &edges,
                                       std::span<const int> src,
                                       std::span<const int> dst,
                                       RunMode mode) const {
  const int d = width;
  const Tensor<T> q = gather_rows(scale(query(nodes), inv_sqrt<T>(d)), src);

  const Tensor<T> kn = key(nodes);
  const Tensor<T> vn = value(nodes);
  const Tensor<T> keys = key_mlp.second(softplus(
    add(add(add(gather_rows(block_matmul(kn, key_mlp.first, 0, d), src),
                gather_rows(block_matmul(kn, key_mlp.first, 1, d), dst)),
            block_matmul(key_edge(edges), key_mlp.first, 2, d)),
        key_mlp.first.bias)));
  const Tensor<T> values = value_mlp.second(softplus(
    add(add(add(gather_rows(block_matmul(vn, value_mlp.first, 0, d), src),
                gather_rows(block_matmul(vn, value_mlp.first, 1, d), dst)),
            block_matmul(value_edge(edges), value_mlp.first, 2, d)),
        value_mlp.first.bias)));

  const Tensor<T> alpha = sigmoid(attn_norm(mul(q, keys), mode));
  const Tensor<T> message = scatter_add_rows(mul(alpha, values), src,
                                             nodes.rows());
  return softplus(add(nodes, msg_norm(message, mode)));
}

std::vector<TensorProductPath> tensor_product_paths(int l_in_max,
                                                    int l_filter_max,
                                                    int l_out_max) {
  std::vector<TensorProductPath> out;
  for (int a = 0; a <= l_in_max; ++a)
    for (int b = 0; b <= l_filter_max; ++b)
      for (int c = 0; c <= l_out_max; ++c)
        if (coupling_allowed(a, b, c))
          out.push_back({ a, b, c });
  return out;
}

template <class T>
Tensor<T> tensor_product(const Tensor<T> &x, const Tensor<T> &y,
                         const Tensor<T> &w,
                         const std::vector<TensorProductPath> &paths,
                         int channels, int l_in_max, int l_out_max) {
  const int rows = x.rows();
  const int cx = irreps_dim(channels, l_in_max);
  const int co = irreps_dim(channels, l_out_max);
  const int cy = y.cols();
  const int cw = static_cast<int>(paths.size()) * channels;
  if (x.cols() != cx || y.rows() != rows || w.rows() != rows
      || w.cols() != cw)
    throw ShapeError("tensor_product: x " + shape_str(x.shape()) + ", y "
                     + shape_str(y.shape()) + ", w " + shape_str(w.shape())
                     + " for " + std::to_string(paths.size())
                     + " paths and " + std::to_string(channels)
                     + " channels");

  struct Resolved {
    int x_off, x_len, y_off, o_off, o_len;
    const std::vector<CouplingEntry> *coupling;
  };
  std::vector<Resolved> res;
  for (const auto &p: paths) {
    if (p.l_in > l_in_max || p.l_out > l_out_max
        || (p.l_filter + 1) * (p.l_filter + 1) > cy)
      throw ShapeError("tensor_product: path exceeds operand degrees");
    res.push_back({ channels * p.l_in * p.l_in, 2 * p.l_in + 1,
                    p.l_filter * p.l_filter, channels * p.l_out * p.l_out,
                    2 * p.l_out + 1,
                    &real_coupling(p.l_in, p.l_filter, p.l_out) });
  }

  auto xv = x.data();
  auto yv = y.data();
  auto wv = w.data();
  std::vector<T> out(static_cast<std::size_t>(rows) * co, T(0));
  for (int e = 0; e < rows; ++e) {
    const T *xe = xv.data() + static_cast<std::size_t>(e) * cx;
    const T *ye = yv.data() + static_cast<std::size_t>(e) * cy;
    const T *we = wv.data() + static_cast<std::size_t>(e) * cw;
    T *oe = out.data() + static_cast<std::size_t>(e) * co;
    for (std::size_t p = 0; p < res.size(); ++p) {
      const Resolved &r = res[p];
      for (int c = 0; c < channels; ++c) {
        const T wc = we[p * channels + c];
        const T *xc = xe + r.x_off + c * r.x_len;
        T *oc = oe + r.o_off + c * r.o_len;
        for (const auto &ent: *r.coupling)
          oc[ent.m3] += wc * static_cast<T>(ent.coef) * xc[ent.m1]
                        * ye[r.y_off + ent.m2];
      }
    }
  }

  return make_op_result<T>(
    { rows, co }, std::move(out), { x, y, w },
    [res, rows, cx, cy, cw, co, channels](TensorNode<T> &self) {
      TensorNode<T> &nx = *self.parents[0];
      TensorNode<T> &ny = *self.parents[1];
      TensorNode<T> &nw = *self.parents[2];
      T *gx = nx.requires_grad ? nx.grad_buffer().data() : nullptr;
      T *gy = ny.requires_grad ? ny.grad_buffer().data() : nullptr;
      T *gw = nw.requires_grad ? nw.grad_buffer().data() : nullptr;
      for (int e = 0; e < rows; ++e) {
        const T *xe = nx.value.data() + static_cast<std::size_t>(e) * cx;
        const T *ye = ny.value.data() + static_cast<std::size_t>(e) * cy;
        const T *we = nw.value.data() + static_cast<std::size_t>(e) * cw;
        const T *ge = self.grad.data() + static_cast<std::size_t>(e) * co;
        for (std::size_t p = 0; p < res.size(); ++p) {
          const Resolved &r = res[p];
          for (int c = 0; c < channels; ++c) {
            const T wc = we[p * channels + c];
            const T *xc = xe + r.x_off + c * r.x_len;
            const T *gc = ge + r.o_off + c * r.o_len;
            T dw = T(0);
            for (const auto &ent: *r.coupling) {
              const T coef = static_cast<T>(ent.coef);
              const T g = gc[ent.m3];
              const T yv = ye[r.y_off + ent.m2];
              const T xv = xc[ent.m1];
              if (gx)
                gx[static_cast<std::size_t>(e) * cx + r.x_off + c * r.x_len
                   + ent.m1] += wc * coef * yv * g;
              if (gy)
                gy[static_cast<std::size_t>(e) * cy + r.y_off + ent.m2] +=
                  wc * coef * xv * g;
              dw += coef * xv * yv * g;
            }
            if (gw)
              gw[static_cast<std::size_t>(e) * cw + p * channels + c] += dw;
          }
        }
      }
    });
}

template <class T>
TensorProductLayer<T>::TensorProductLayer(ParamStore<T> &store,
                                          const std::string &name,
                                          int channels, int l_in_max,
                                          int l_filter_max, int l_out_max,
                                          int rbf_dim)
    : channels(channels),
      l_in_max(l_in_max),
      l_filter_max(l_filter_max),
      l_out_max(l_out_max),
      paths(tensor_product_paths(l_in_max, l_filter_max, l_out_max)) {
  if (paths.empty())
    throw std::logic_error("tensor product layer without coupling paths");
  for (const auto &p: paths)
    if (!coupling_allowed(p.l_in, p.l_filter, p.l_out))
      throw std::logic_error("forbidden coupling path");
  path_weights = Linear<T>(store, name + ".path_weights", rbf_dim,
                           static_cast<int>(paths.size()) * channels);
}

template <class T>
Tensor<T> TensorProductLayer<T>::operator()(const Tensor<T> &nodes,
                                            const Tensor<T> &harmonics,
                                            const Tensor<T> &rbf,
                                            std::span<const int> src,
                                            std::span<const int> dst) const {
  const int n = nodes.rows();
  const Tensor<T> msgs = tensor_product(
    gather_rows(nodes, dst), harmonics, path_weights(rbf), paths, channels,
    l_in_max, l_out_max);
  const Tensor<T> agg = segment_mean(msgs, src, n);

  const int in_cols = irreps_dim(channels, l_in_max);
  const int out_cols = irreps_dim(channels, l_out_max);
  Tensor<T> residual = nodes;
  if (out_cols < in_cols)
    residual = slice(nodes, 1, 0, out_cols);
  else if (out_cols > in_cols)
    residual = concat<T>({ nodes, Tensor<T>::zeros({ n, out_cols - in_cols }) },
                         1);
  return add(agg, residual);
}

template class EdgeWiseLayer<float>;
template class EdgeWiseLayer<double>;
template class NodeWiseLayer<float>;
template class NodeWiseLayer<double>;
template class TensorProductLayer<float>;
template class TensorProductLayer<double>;
template Tensor<float> tensor_product(const Tensor<float> &,
                                      const Tensor<float> &,
                                      const Tensor<float> &,
                                      const std::vector<TensorProductPath> &,
                                      int, int, int);
template Tensor<double> tensor_product(const Tensor<double> &,
                                       const Tensor<double> &,
                                       const Tensor<double> &,
                                       const std::vector<TensorProductPath> &,
                                       int, int, int);

}  // namespace mvcgt
