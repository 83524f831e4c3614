//
// mvcgt - multi-view crystal graph transformer
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MVCGT_TENSOR_H_
#define MVCGT_TENSOR_H_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvcgt {

using Shape = std::vector<int>;

std::string shape_str(const Shape &shape);
std::size_t shape_numel(const Shape &shape);

class ShapeError: public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

template <class T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  // Empty until the node takes part in a backward pass.
  std::vector<T> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(TensorNode &)> backward;

  std::vector<T> &grad_buffer() {
    if (grad.size() != value.size())
      grad.assign(value.size(), T(0));
    return grad;
  }
};

// Dense row-major array with reverse-mode gradient tracking. Copies share
// the underlying node, so a Tensor behaves like a handle.
template <class T>
class Tensor {
public:
  using Node = TensorNode<T>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node): node_(std::move(node)) { }

  static Tensor from_data(Shape shape, std::vector<T> data,
                          bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape &shape() const { return node_->shape; }
  int dim(int axis) const;
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::size_t numel() const { return node_->value.size(); }

  // 2-D view: rank 0 is (1, 1), rank 1 {n} is a row vector (1, n).
  int rows() const;
  int cols() const;

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  std::span<const T> grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }

  T item() const;
  T at(int r, int c) const { return node_->value[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool is_leaf() const { return node_->is_leaf; }

  void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

  // Accumulates d(this)/d(leaf) into every leaf that requires grad.
  void backward() const;

  // Same values, no history.
  Tensor detach() const;

  Node &node() const { return *node_; }
  const std::shared_ptr<Node> &node_ptr() const { return node_; }

private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

// Disables graph recording in the current thread while alive.
class NoGradGuard {
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard &operator=(const NoGradGuard &) = delete;

private:
  bool previous_;
};

// Builds an op result. When recording is off or no parent requires grad
// the result is a constant and `backward` is dropped.
template <class T>
Tensor<T> make_op_result(Shape shape, std::vector<T> value,
                         std::vector<Tensor<T>> parents,
                         std::function<void(TensorNode<T> &)> backward);

// Elementwise with 2-D broadcasting (each dim equal or 1).
template <class T>
Tensor<T> add(const Tensor<T> &a, const Tensor<T> &b);
template <class T>
Tensor<T> sub(const Tensor<T> &a, const Tensor<T> &b);
template <class T>
Tensor<T> mul(const Tensor<T> &a, const Tensor<T> &b);
template <class T>
Tensor<T> div(const Tensor<T> &a, const Tensor<T> &b);

template <class T>
Tensor<T> scale(const Tensor<T> &a, T factor);
template <class T>
Tensor<T> add_scalar(const Tensor<T> &a, T value);
template <class T>
Tensor<T> neg(const Tensor<T> &a);

template <class T>
Tensor<T> softplus(const Tensor<T> &a);
template <class T>
Tensor<T> sigmoid(const Tensor<T> &a);
template <class T>
Tensor<T> exp(const Tensor<T> &a);
template <class T>
Tensor<T> log(const Tensor<T> &a);
template <class T>
Tensor<T> sqrt(const Tensor<T> &a);
template <class T>
Tensor<T> cos(const Tensor<T> &a);
template <class T>
Tensor<T> square(const Tensor<T> &a);

template <class T>
Tensor<T> matmul(const Tensor<T> &a, const Tensor<T> &b);
template <class T>
Tensor<T> transpose(const Tensor<T> &a);
template <class T>
Tensor<T> reshape(const Tensor<T> &a, Shape shape);

// axis 0 stacks rows, axis 1 stacks columns.
template <class T>
Tensor<T> concat(const std::vector<Tensor<T>> &parts, int axis);
template <class T>
Tensor<T> slice(const Tensor<T> &a, int axis, int begin, int end);

template <class T>
Tensor<T> sum(const Tensor<T> &a);
template <class T>
Tensor<T> mean(const Tensor<T> &a);
// Keeps the reduced axis: axis 0 -> (1, c), axis 1 -> (r, 1).
template <class T>
Tensor<T> sum(const Tensor<T> &a, int axis);
template <class T>
Tensor<T> mean(const Tensor<T> &a, int axis);

// Euclidean norm of every row, shape (r, 1).
template <class T>
Tensor<T> row_norm(const Tensor<T> &a);

// out[k] = a[index[k]]; doubles as embedding lookup.
template <class T>
Tensor<T> gather_rows(const Tensor<T> &a, std::span<const int> index);
// out[index[k]] += a[k], out has `num_rows` rows.
template <class T>
Tensor<T> scatter_add_rows(const Tensor<T> &a, std::span<const int> index,
                           int num_rows);
// Row mean per segment; empty segments give zero rows.
template <class T>
Tensor<T> segment_mean(const Tensor<T> &a, std::span<const int> segment,
                       int num_segments);

// x (n, in) * w (in, out) + b (out).
template <class T>
Tensor<T> linear(const Tensor<T> &x, const Tensor<T> &w, const Tensor<T> &b);

struct BatchNormState {
  double momentum = 0.1;
  double eps = 1e-5;
};

// Normalizes each column over the rows. In training mode the batch
// statistics are used and the running buffers are updated in place;
// otherwise the running buffers are used.
template <class T>
Tensor<T> batch_norm(const Tensor<T> &x, const Tensor<T> &gamma,
                     const Tensor<T> &beta, Tensor<T> &running_mean,
                     Tensor<T> &running_var, bool training,
                     const BatchNormState &opts = {});

// Normalizes each row over the columns.
template <class T>
Tensor<T> layer_norm(const Tensor<T> &x, const Tensor<T> &gamma,
                     const Tensor<T> &beta, double eps = 1e-5);

}  // namespace mvcgt

#endif  // MVCGT_TENSOR_H_
