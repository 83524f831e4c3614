//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#include "mvcgt/tensor.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>

#include <Eigen/Dense>

namespace mvcgt {
namespace {
  thread_local bool g_grad_enabled = true;

  template <class T>
  using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic,
                               Eigen::RowMajor>;
  template <class T>
  using ConstMap = Eigen::Map<const RowMat<T>>;
  template <class T>
  using MutMap = Eigen::Map<RowMat<T>>;

  std::pair<int, int> as_2d(const Shape &shape) {
    switch (shape.size()) {
    case 0:
      return { 1, 1 };
    case 1:
      return { 1, shape[0] };
    case 2:
      return { shape[0], shape[1] };
    default:
      throw ShapeError("2-D operation on rank " + std::to_string(shape.size())
                       + " tensor " + shape_str(shape));
    }
  }

  template <class T>
  void require_2d(const Tensor<T> &a, const char *op) {
    if (a.rank() > 2)
      throw ShapeError(std::string(op) + ": expected rank <= 2, got "
                       + shape_str(a.shape()));
  }

  template <class T>
  std::vector<T> &grad_of(TensorNode<T> &node) {
    return node.grad_buffer();
  }

  template <class T>
  bool wants_grad(const TensorNode<T> &node) {
    return node.requires_grad;
  }

  struct Broadcast {
    int rows, cols;
    int ar, ac, br, bc;
    Shape out_shape;
  };

  Broadcast broadcast_shapes(const Shape &sa, const Shape &sb,
                             const char *op) {
    auto [ar, ac] = as_2d(sa);
    auto [br, bc] = as_2d(sb);
    auto fail = [&]() {
      throw ShapeError(std::string(op) + ": incompatible shapes "
                       + shape_str(sa) + " and " + shape_str(sb));
    };
    if (ar != br && ar != 1 && br != 1)
      fail();
    if (ac != bc && ac != 1 && bc != 1)
      fail();
    Broadcast bc_out { std::max(ar, br), std::max(ac, bc), ar, ac, br, bc,
                       {} };
    if (ar == bc_out.rows && ac == bc_out.cols)
      bc_out.out_shape = sa;
    else if (br == bc_out.rows && bc == bc_out.cols)
      bc_out.out_shape = sb;
    else
      bc_out.out_shape = { bc_out.rows, bc_out.cols };
    return bc_out;
  }

  // Sums a (rows, cols) gradient down to a (tr, tc) operand.
  template <class T>
  void reduce_into(std::vector<T> &target, int tr, int tc,
                   std::span<const T> g, int rows, int cols) {
    if (tr == rows && tc == cols) {
      for (std::size_t k = 0; k < g.size(); ++k)
        target[k] += g[k];
      return;
    }
    for (int r = 0; r < rows; ++r) {
      const int rr = tr == 1 ? 0 : r;
      for (int c = 0; c < cols; ++c) {
        const int cc = tc == 1 ? 0 : c;
        target[rr * tc + cc] += g[r * cols + c];
      }
    }
  }

  enum class BinaryKind { kAdd, kSub, kMul, kDiv };

  template <class T>
  Tensor<T> binary(const Tensor<T> &a, const Tensor<T> &b, BinaryKind kind,
                   const char *op) {
    const Broadcast bs = broadcast_shapes(a.shape(), b.shape(), op);
    const int rows = bs.rows, cols = bs.cols;
    std::vector<T> out(static_cast<std::size_t>(rows) * cols);
    auto av = a.data();
    auto bv = b.data();

    const bool same = bs.ar == rows && bs.ac == cols && bs.br == rows
                      && bs.bc == cols;
    auto apply = [kind](T x, T y) {
      switch (kind) {
      case BinaryKind::kAdd:
        return x + y;
      case BinaryKind::kSub:
        return x - y;
      case BinaryKind::kMul:
        return x * y;
      case BinaryKind::kDiv:
        return x / y;
      }
      return T(0);
    };
    if (same) {
      for (std::size_t k = 0; k < out.size(); ++k)
        out[k] = apply(av[k], bv[k]);
    } else {
      for (int r = 0; r < rows; ++r) {
        const int ra = bs.ar == 1 ? 0 : r, rb = bs.br == 1 ? 0 : r;
        for (int c = 0; c < cols; ++c) {
          const int ca = bs.ac == 1 ? 0 : c, cb = bs.bc == 1 ? 0 : c;
          out[r * cols + c] = apply(av[ra * bs.ac + ca], bv[rb * bs.bc + cb]);
        }
      }
    }

    return make_op_result<T>(
      bs.out_shape, std::move(out), { a, b },
      [bs, kind](TensorNode<T> &self) {
        TensorNode<T> &na = *self.parents[0];
        TensorNode<T> &nb = *self.parents[1];
        const int rows = bs.rows, cols = bs.cols;
        const std::vector<T> &g = self.grad;
        auto a_at = [&](int r, int c) {
          return na.value[(bs.ar == 1 ? 0 : r) * bs.ac
                          + (bs.ac == 1 ? 0 : c)];
        };
        auto b_at = [&](int r, int c) {
          return nb.value[(bs.br == 1 ? 0 : r) * bs.bc
                          + (bs.bc == 1 ? 0 : c)];
        };

        if (wants_grad(na)) {
          std::vector<T> ga(g.size());
          for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
              const T gv = g[r * cols + c];
              T d = gv;
              if (kind == BinaryKind::kMul)
                d = gv * b_at(r, c);
              else if (kind == BinaryKind::kDiv)
                d = gv / b_at(r, c);
              ga[r * cols + c] = d;
            }
          }
          reduce_into<T>(grad_of(na), bs.ar, bs.ac, ga, rows, cols);
        }
        if (wants_grad(nb)) {
          std::vector<T> gb(g.size());
          for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
              const T gv = g[r * cols + c];
              T d = gv;
              if (kind == BinaryKind::kSub) {
                d = -gv;
              } else if (kind == BinaryKind::kMul) {
                d = gv * a_at(r, c);
              } else if (kind == BinaryKind::kDiv) {
                const T y = b_at(r, c);
                d = -gv * a_at(r, c) / (y * y);
              }
              gb[r * cols + c] = d;
            }
          }
          reduce_into<T>(grad_of(nb), bs.br, bs.bc, gb, rows, cols);
        }
      });
  }

  // f gives the value, df(x, y) the derivative given input and output.
  template <class T, class F, class DF>
  Tensor<T> unary(const Tensor<T> &a, F f, DF df) {
    auto av = a.data();
    std::vector<T> out(av.size());
    for (std::size_t k = 0; k < av.size(); ++k)
      out[k] = f(av[k]);
    return make_op_result<T>(
      a.shape(), std::move(out), { a }, [df](TensorNode<T> &self) {
        TensorNode<T> &na = *self.parents[0];
        if (!wants_grad(na))
          return;
        auto &ga = grad_of(na);
        for (std::size_t k = 0; k < ga.size(); ++k)
          ga[k] += self.grad[k] * df(na.value[k], self.value[k]);
      });
  }

  template <class T>
  T stable_softplus(T x) {
    return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
  }

  template <class T>
  T stable_sigmoid(T x) {
    if (x >= 0) {
      const T z = std::exp(-x);
      return T(1) / (T(1) + z);
    }
    const T z = std::exp(x);
    return z / (T(1) + z);
  }
}  // namespace

std::string shape_str(const Shape &shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i)
      os << ", ";
    os << shape[i];
  }
  if (shape.size() == 1)
    os << ',';
  os << ')';
  return os.str();
}

std::size_t shape_numel(const Shape &shape) {
  std::size_t n = 1;
  for (int d: shape) {
    if (d < 0)
      throw ShapeError("negative dimension in " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

bool grad_enabled() {
  return g_grad_enabled;
}

NoGradGuard::NoGradGuard(): previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() {
  g_grad_enabled = previous_;
}

template <class T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> data,
                               bool requires_grad) {
  if (shape_numel(shape) != data.size())
    throw ShapeError("data length " + std::to_string(data.size())
                     + " does not match shape " + shape_str(shape));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from_data({}, { value }, requires_grad);
}

template <class T>
int Tensor<T>::dim(int axis) const {
  if (axis < 0)
    axis += rank();
  if (axis < 0 || axis >= rank())
    throw ShapeError("axis out of range for shape " + shape_str(shape()));
  return node_->shape[axis];
}

template <class T>
int Tensor<T>::rows() const {
  return as_2d(node_->shape).first;
}

template <class T>
int Tensor<T>::cols() const {
  return as_2d(node_->shape).second;
}

template <class T>
T Tensor<T>::item() const {
  if (numel() != 1)
    throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

template <class T>
Tensor<T> Tensor<T>::detach() const {
  return from_data(shape(), node_->value, false);
}

template <class T>
void Tensor<T>::backward() const {
  if (numel() != 1)
    throw ShapeError("backward() needs a scalar, got shape "
                     + shape_str(shape()));
  if (!node_->requires_grad)
    return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node *> order;
  std::unordered_set<Node *> seen;
  std::vector<std::pair<Node *, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto &[node, next] = stack.back();
    if (next < node->parents.size()) {
      Node *p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second)
        stack.emplace_back(p, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  for (Node *n: order)
    if (!n->is_leaf)
      n->grad.assign(n->value.size(), T(0));
  node_->grad_buffer()[0] += T(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node *n = *it;
    if (!n->is_leaf && n->backward)
      n->backward(*n);
  }
}

template <class T>
Tensor<T> make_op_result(Shape shape, std::vector<T> value,
                         std::vector<Tensor<T>> parents,
                         std::function<void(TensorNode<T> &)> backward) {
  bool track = g_grad_enabled;
  if (track) {
    track = std::any_of(parents.begin(), parents.end(),
                        [](const Tensor<T> &p) { return p.requires_grad(); });
  }
  auto node = std::make_shared<TensorNode<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (track) {
    node->requires_grad = true;
    node->is_leaf = false;
    node->parents.reserve(parents.size());
    for (const auto &p: parents)
      node->parents.push_back(p.node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

template <class T>
Tensor<T> add(const Tensor<T> &a, const Tensor<T> &b) {
  return binary(a, b, BinaryKind::kAdd, "add");
}

template <class T>
Tensor<T> sub(const Tensor<T> &a, const Tensor<T> &b) {
  return binary(a, b, BinaryKind::kSub, "sub");
}

template <class T>
Tensor<T> mul(const Tensor<T> &a, const Tensor<T> &b) {
  return binary(a, b, BinaryKind::kMul, "mul");
}

template <class T>
Tensor<T> div(const Tensor<T> &a, const Tensor<T> &b) {
  return binary(a, b, BinaryKind::kDiv, "div");
}

template <class T>
Tensor<T> scale(const Tensor<T> &a, T factor) {
  return unary(
    a, [factor](T x) { return x * factor; },
    [factor](T, T) { return factor; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T> &a, T value) {
  return unary(
    a, [value](T x) { return x + value; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> neg(const Tensor<T> &a) {
  return scale(a, T(-1));
}

template <class T>
Tensor<T> softplus(const Tensor<T> &a) {
  return unary(
    a, [](T x) { return stable_softplus(x); },
    [](T x, T) { return stable_sigmoid(x); });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T> &a) {
  return unary(
    a, [](T x) { return stable_sigmoid(x); },
    [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> exp(const Tensor<T> &a) {
  return unary(
    a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> log(const Tensor<T> &a) {
  return unary(
    a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <class T>
Tensor<T> sqrt(const Tensor<T> &a) {
  return unary(
    a, [](T x) { return std::sqrt(x); },
    [](T, T y) { return T(0.5) / y; });
}

template <class T>
Tensor<T> cos(const Tensor<T> &a) {
  return unary(
    a, [](T x) { return std::cos(x); }, [](T x, T) { return -std::sin(x); });
}

template <class T>
Tensor<T> square(const Tensor<T> &a) {
  return unary(
    a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <class T>
Tensor<T> matmul(const Tensor<T> &a, const Tensor<T> &b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape())
                     + " and " + shape_str(b.shape()));
  std::vector<T> out(static_cast<std::size_t>(m) * n);
  MutMap<T>(out.data(), m, n).noalias() = ConstMap<T>(a.data().data(), m, k)
                                          * ConstMap<T>(b.data().data(), k, n);
  return make_op_result<T>(
    { m, n }, std::move(out), { a, b }, [m, k, n](TensorNode<T> &self) {
      TensorNode<T> &na = *self.parents[0];
      TensorNode<T> &nb = *self.parents[1];
      ConstMap<T> g(self.grad.data(), m, n);
      if (wants_grad(na)) {
        MutMap<T>(grad_of(na).data(), m, k).noalias()
          += g * ConstMap<T>(nb.value.data(), k, n).transpose();
      }
      if (wants_grad(nb)) {
        MutMap<T>(grad_of(nb).data(), k, n).noalias()
          += ConstMap<T>(na.value.data(), m, k).transpose() * g;
      }
    });
}

template <class T>
Tensor<T> transpose(const Tensor<T> &a) {
  require_2d(a, "transpose");
  const int m = a.rows(), n = a.cols();
  std::vector<T> out(a.numel());
  MutMap<T>(out.data(), n, m) = ConstMap<T>(a.data().data(), m, n).transpose();
  return make_op_result<T>(
    { n, m }, std::move(out), { a }, [m, n](TensorNode<T> &self) {
      TensorNode<T> &na = *self.parents[0];
      if (!wants_grad(na))
        return;
      MutMap<T>(grad_of(na).data(), m, n)
        += ConstMap<T>(self.grad.data(), n, m).transpose();
    });
}

template <class T>
Tensor<T> reshape(const Tensor<T> &a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as "
                     + shape_str(shape));
  std::vector<T> out(a.data().begin(), a.data().end());
  return make_op_result<T>(
    std::move(shape), std::move(out), { a }, [](TensorNode<T> &self) {
      TensorNode<T> &na = *self.parents[0];
      if (!wants_grad(na))
        return;
      auto &ga = grad_of(na);
      for (std::size_t k = 0; k < ga.size(); ++k)
        ga[k] += self.grad[k];
    });
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>> &parts, int axis) {
  if (parts.empty())
    throw ShapeError("concat: no inputs");
  if (axis != 0 && axis != 1)
    throw ShapeError("concat: axis must be 0 or 1");
  for (const auto &p: parts)
    require_2d(p, "concat");

  const int rows0 = parts[0].rows(), cols0 = parts[0].cols();
  std::vector<int> extents;
  int total = 0;
  for (const auto &p: parts) {
    if (axis == 0 ? p.cols() != cols0 : p.rows() != rows0) {
      throw ShapeError("concat: incompatible shapes "
                       + shape_str(parts[0].shape()) + " and "
                       + shape_str(p.shape()));
    }
    extents.push_back(axis == 0 ? p.rows() : p.cols());
    total += extents.back();
  }

  const int out_rows = axis == 0 ? total : rows0;
  const int out_cols = axis == 0 ? cols0 : total;
  std::vector<T> out(static_cast<std::size_t>(out_rows) * out_cols);
  int offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto src = parts[p].data();
    if (axis == 0) {
      std::copy(src.begin(), src.end(), out.begin() + offset * out_cols);
    } else {
      const int w = extents[p];
      for (int r = 0; r < out_rows; ++r)
        std::copy_n(src.begin() + r * w, w,
                    out.begin() + r * out_cols + offset);
    }
    offset += extents[p];
  }

  return make_op_result<T>(
    { out_rows, out_cols }, std::move(out), parts,
    [axis, extents, out_rows, out_cols](TensorNode<T> &self) {
      int offset = 0;
      for (std::size_t p = 0; p < self.parents.size(); ++p) {
        TensorNode<T> &np = *self.parents[p];
        const int w = extents[p];
        if (wants_grad(np)) {
          auto &gp = grad_of(np);
          if (axis == 0) {
            const std::size_t base = static_cast<std::size_t>(offset)
                                     * out_cols;
            for (std::size_t k = 0; k < gp.size(); ++k)
              gp[k] += self.grad[base + k];
          } else {
            for (int r = 0; r < out_rows; ++r)
              for (int c = 0; c < w; ++c)
                gp[r * w + c] += self.grad[r * out_cols + offset + c];
          }
        }
        offset += w;
      }
    });
}

template <class T>
Tensor<T> slice(const Tensor<T> &a, int axis, int begin, int end) {
  require_2d(a, "slice");
  const int rows = a.rows(), cols = a.cols();
  const int extent = axis == 0 ? rows : cols;
  if ((axis != 0 && axis != 1) || begin < 0 || end > extent || begin > end)
    throw ShapeError("slice: range [" + std::to_string(begin) + ", "
                     + std::to_string(end) + ") invalid for "
                     + shape_str(a.shape()));
  const int out_rows = axis == 0 ? end - begin : rows;
  const int out_cols = axis == 0 ? cols : end - begin;
  std::vector<T> out(static_cast<std::size_t>(out_rows) * out_cols);
  auto av = a.data();
  for (int r = 0; r < out_rows; ++r)
    for (int c = 0; c < out_cols; ++c)
      out[r * out_cols + c] = axis == 0 ? av[(r + begin) * cols + c]
                                        : av[r * cols + c + begin];
  return make_op_result<T>(
    { out_rows, out_cols }, std::move(out), { a },
    [axis, begin, cols, out_rows, out_cols](TensorNode<T> &self) {
      TensorNode<T> &na = *self.parents[0];
      if (!wants_grad(na))
        return;
      auto &ga = grad_of(na);
      for (int r = 0; r < out_rows; ++r)
        for (int c = 0; c < out_cols; ++c) {
          const std::size_t k = axis == 0 ? (r + begin) * cols + c
                                          : r * cols + c + begin;
          ga[k] += self.grad[r * out_cols + c];
        }
    });
}

template <class T>
Tensor<T> sum(const Tensor<T> &a) {
  auto av = a.data();
  T total = T(0);
  for (T v: av)
    total += v;
  return make_op_result<T>({}, { total }, { a }, [](TensorNode<T> &self) {
    TensorNode<T> &na = *self.parents[0];
    if (!wants_grad(na))
      return;
    const T g = self.grad[0];
    for (T &v: grad_of(na))
      v += g;
  });
}

template <class T>
Tensor<T> mean(const Tensor<T> &a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <class T>
Tensor<T> sum(const Tensor<T> &a, int axis) {
  require_2d(a, "sum");
  const int rows = a.rows(), cols = a.cols();
  if (axis != 0 && axis != 1)
    throw ShapeError("sum: axis must be 0 or 1");
  auto av = a.data();
  std::vector<T> out(axis == 0 ? cols : rows, T(0));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out[axis == 0 ? c : r] += av[r * cols + c];
  Shape shape = axis == 0 ? Shape { 1, cols } : Shape { rows, 1 };
  return make_op_result<T>(
    std::move(shape), std::move(out), { a },
    [axis, rows, cols](TensorNode<T> &self) {
      TensorNode<T> &na = *self.parents[0];
      if (!wants_grad(na))
        return;
      auto &ga = grad_of(na);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
          ga[r * cols + c] += self.grad[axis == 0 ? c : r];
    });
}

template <class T>
Tensor<T> mean(const Tensor<T> &a, int axis) {
  const int n = axis == 0 ? a.rows() : a.cols();
  return scale(sum(a, axis), T(1) / static_cast<T>(n));
}

template <class T>
Tensor<T> row_norm(const Tensor<T> &a) {
  return sqrt(sum(square(a), 1));
}

template <class T>
Tensor<T> gather_rows(const Tensor<T> &a, std::span<const int> index) {
  require_2d(a, "gather_rows");
  const int rows = a.rows(), cols = a.cols();
  std::vector<T> out(index.size() * static_cast<std::size_t>(cols));
  auto av = a.data();
  for (std::size_t k = 0; k < index.size(); ++k) {
    const int r = index[k];
    if (r < 0 || r >= rows)
      throw ShapeError("gather_rows: index " + std::to_string(r)
                       + " out of range for " + shape_str(a.shape()));
    std::copy_n(av.begin() + r * cols, cols, out.begin() + k * cols);
  }
  std::vector<int> idx(index.begin(), index.end());
  return make_op_result<T>(
    { static_cast<int>(index.size()), cols }, std::move(out), { a },
    [idx = std::move(idx), cols](TensorNode<T> &self) {
      TensorNode<T> &na = *self.parents[0];
      if (!wants_grad(na))
        return;
      auto &ga = grad_of(na);
      for (std::size_t k = 0; k < idx.size(); ++k) {
        T *dst = ga.data() + static_cast<std::size_t>(idx[k]) * cols;
        const T *src = self.grad.data() + k * cols;
        for (int c = 0; c < cols; ++c)
          dst[c] += src[c];
      }
    });
}

template <class T>
Tensor<T> scatter_add_rows(const Tensor<T> &a, std::span<const int> index,
                           int num_rows) {
  require_2d(a, "scatter_add_rows");
  const int cols = a.cols();
  if (static_cast<std::size_t>(a.rows()) != index.size())
    throw ShapeError("scatter_add_rows: " + std::to_string(index.size())
                     + " indices for " + shape_str(a.shape()));
  std::vector<T> out(static_cast<std::size_t>(num_rows) * cols, T(0));
  auto av = a.data();
  for (std::size_t k = 0; k < index.size(); ++k) {
    const int r = index[k];
    if (r < 0 || r >= num_rows)
      throw ShapeError("scatter_add_rows: index " + std::to_string(r)
                       + " out of range " + std::to_string(num_rows));
    T *dst = out.data() + static_cast<std::size_t>(r) * cols;
    const T *src = av.data() + k * cols;
    for (int c = 0; c < cols; ++c)
      dst[c] += src[c];
  }
  std::vector<int> idx(index.begin(), index.end());
  return make_op_result<T>(
    { num_rows, cols }, std::move(out), { a },
    [idx = std::move(idx), cols](TensorNode<T> &self) {
      TensorNode<T> &na = *self.parents[0];
      if (!wants_grad(na))
        return;
      auto &ga = grad_of(na);
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const T *src = self.grad.data() + static_cast<std::size_t>(idx[k])
                                            * cols;
        T *dst = ga.data() + k * cols;
        for (int c = 0; c < cols; ++c)
          dst[c] += src[c];
      }
    });
}

template <class T>
Tensor<T> segment_mean(const Tensor<T> &a, std::span<const int> segment,
                       int num_segments) {
  std::vector<T> inv(num_segments, T(0));
  for (int s: segment)
    if (s >= 0 && s < num_segments)
      inv[s] += T(1);
  for (T &v: inv)
    v = v > T(0) ? T(1) / v : T(0);
  auto weights = Tensor<T>::from_data({ num_segments, 1 }, std::move(inv));
  return mul(scatter_add_rows(a, segment, num_segments), weights);
}

template <class T>
Tensor<T> linear(const Tensor<T> &x, const Tensor<T> &w, const Tensor<T> &b) {
  Tensor<T> y = matmul(x, w);
  return b.defined() ? add(y, b) : y;
}

template <class T>
Tensor<T> batch_norm(const Tensor<T> &x, const Tensor<T> &gamma,
                     const Tensor<T> &beta, Tensor<T> &running_mean,
                     Tensor<T> &running_var, bool training,
                     const BatchNormState &opts) {
  require_2d(x, "batch_norm");
  const int n = x.rows();
  const T eps = static_cast<T>(opts.eps);
  if (!training) {
    auto denom = sqrt(add_scalar(running_var.detach(), eps));
    auto xn = div(sub(x, running_mean.detach()), denom);
    return add(mul(xn, gamma), beta);
  }

  Tensor<T> mu = mean(x, 0);
  Tensor<T> xc = sub(x, mu);
  Tensor<T> var = mean(square(xc), 0);
  Tensor<T> xn = div(xc, sqrt(add_scalar(var, eps)));

  const T m = static_cast<T>(opts.momentum);
  const T unbias = n > 1 ? static_cast<T>(n) / static_cast<T>(n - 1) : T(1);
  auto rm = running_mean.data();
  auto rv = running_var.data();
  for (std::size_t c = 0; c < rm.size(); ++c) {
    rm[c] = (T(1) - m) * rm[c] + m * mu.data()[c];
    rv[c] = (T(1) - m) * rv[c] + m * var.data()[c] * unbias;
  }
  return add(mul(xn, gamma), beta);
}

template <class T>
Tensor<T> layer_norm(const Tensor<T> &x, const Tensor<T> &gamma,
                     const Tensor<T> &beta, double eps) {
  require_2d(x, "layer_norm");
  Tensor<T> mu = mean(x, 1);
  Tensor<T> xc = sub(x, mu);
  Tensor<T> var = mean(square(xc), 1);
  Tensor<T> xn = div(xc, sqrt(add_scalar(var, static_cast<T>(eps))));
  return add(mul(xn, gamma), beta);
}

#define MVCGT_INSTANTIATE_TENSOR(T)                                           \
  template class Tensor<T>;                                                   \
  template Tensor<T> make_op_result<T>(                                       \
    Shape, std::vector<T>, std::vector<Tensor<T>>,                            \
    std::function<void(TensorNode<T> &)>);                                    \
  template Tensor<T> add(const Tensor<T> &, const Tensor<T> &);               \
  template Tensor<T> sub(const Tensor<T> &, const Tensor<T> &);               \
  template Tensor<T> mul(const Tensor<T> &, const Tensor<T> &);               \
  template Tensor<T> div(const Tensor<T> &, const Tensor<T> &);               \
  template Tensor<T> scale(const Tensor<T> &, T);                             \
  template Tensor<T> add_scalar(const Tensor<T> &, T);                        \
  template Tensor<T> neg(const Tensor<T> &);                                  \
  template Tensor<T> softplus(const Tensor<T> &);                             \
  template Tensor<T> sigmoid(const Tensor<T> &);                              \
  template Tensor<T> exp(const Tensor<T> &);                                  \
  template Tensor<T> log(const Tensor<T> &);                                  \
  template Tensor<T> sqrt(const Tensor<T> &);                                 \
  template Tensor<T> cos(const Tensor<T> &);                                  \
  template Tensor<T> square(const Tensor<T> &);                               \
  template Tensor<T> matmul(const Tensor<T> &, const Tensor<T> &);            \
  template Tensor<T> transpose(const Tensor<T> &);                            \
  template Tensor<T> reshape(const Tensor<T> &, Shape);                       \
  template Tensor<T> concat(const std::vector<Tensor<T>> &, int);             \
  template Tensor<T> slice(const Tensor<T> &, int, int, int);                 \
  template Tensor<T> sum(const Tensor<T> &);                                  \
  template Tensor<T> mean(const Tensor<T> &);                                 \
  template Tensor<T> sum(const Tensor<T> &, int);                             \
  template Tensor<T> mean(const Tensor<T> &, int);                            \
  template Tensor<T> row_norm(const Tensor<T> &);                             \
  template Tensor<T> gather_rows(const Tensor<T> &, std::span<const int>);    \
  template Tensor<T> scatter_add_rows(const Tensor<T> &,                      \
                                      std::span<const int>, int);             \
  template Tensor<T> segment_mean(const Tensor<T> &, std::span<const int>,    \
                                  int);                                       \
  template Tensor<T> linear(const Tensor<T> &, const Tensor<T> &,             \
                            const Tensor<T> &);                               \
  template Tensor<T> batch_norm(const Tensor<T> &, const Tensor<T> &,         \
                                const Tensor<T> &, Tensor<T> &, Tensor<T> &,  \
                                bool, const BatchNormState &);                \
  template Tensor<T> layer_norm(const Tensor<T> &, const Tensor<T> &,         \
                                const Tensor<T> &, double);

MVCGT_INSTANTIATE_TENSOR(float)
MVCGT_INSTANTIATE_TENSOR(double)

}  // namespace mvcgt
