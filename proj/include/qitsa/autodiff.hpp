#pragma once

// Reverse-mode automatic differentiation over dense row-major double arrays.
//
// A Node is a shared handle to a value, its gradient and the rule that
// pushes the gradient to its parents. Graphs are built eagerly by calling the
// op functions below; backward() walks them in reverse topological order.
// Leaf gradients accumulate across backward() calls until zero_grad(); the
// gradients of interior nodes are recomputed from scratch on every call.
//
// No broadcasting: binary ops require equal shapes, except the explicit
// scalar forms (scale, shift, scale_by).

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace qitsa::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class Array {
 public:
  Array() = default;
  explicit Array(Shape shape, double fill = 0.0);
  Array(Shape shape, std::vector<double> data);

  static Array scalar(double v) { return Array({1}, {v}); }
  static Array vector(std::vector<double> v) {
    Shape s{v.size()};
    return Array(std::move(s), std::move(v));
  }
  static Array matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Array({rows, cols}, std::move(v));
  }
  static Array from_rows(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  void fill(double v);
  bool operator==(const Array&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

struct NodeImpl;

class Node {
 public:
  Node() = default;
  explicit Node(std::shared_ptr<NodeImpl> impl) : impl_(std::move(impl)) {}

  const Array& value() const;
  Array& mutable_value();
  const Array& grad() const;
  Array& mutable_grad();
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  double item() const;

  bool requires_grad() const;
  bool is_leaf() const;
  const std::string& name() const;
  void zero_grad();

  explicit operator bool() const { return static_cast<bool>(impl_); }
  NodeImpl* get() const { return impl_.get(); }

 private:
  std::shared_ptr<NodeImpl> impl_;
};

// Receives the node whose gradient is final, adds contributions into the
// gradients of its parents (only those that require gradients).
using BackwardFn = std::function<void(NodeImpl& self)>;

struct NodeImpl {
  Array value;
  Array grad;
  std::vector<Node> parents;
  BackwardFn backward;
  bool requires_grad = false;
  std::string name;
};

// Gradient tracking switch for the current thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

Node constant(Array value);
Node parameter(Array value, std::string name = {});

// Builds an op node. When no parent requires gradients (or tracking is off)
// the result is a detached constant and `backward` is dropped.
Node make_op(Array value, std::vector<Node> parents, BackwardFn backward);

// Adds `g` into the gradient of `parent` if it requires gradients.
void accumulate(const Node& parent, std::span<const double> g);

void backward(const Node& loss);

// Elementwise arithmetic.
Node add(const Node& a, const Node& b);
Node sub(const Node& a, const Node& b);
Node mul(const Node& a, const Node& b);
Node scale(const Node& a, double s);
Node shift(const Node& a, double c);
Node scale_by(const Node& a, const Node& s);  // s has exactly one element

// Elementwise functions.
Node sigmoid(const Node& a);
Node tanh(const Node& a);
Node cos(const Node& a);
Node sin(const Node& a);
Node exp(const Node& a);
Node log(const Node& a);
Node clamp(const Node& a, double lo, double hi);

// Reductions to a one-element node.
Node sum(const Node& a);
Node mean(const Node& a);
// Column sums of a matrix: [m x n] -> [n].
Node sum_rows(const Node& a);

// Shape manipulation.
Node matmul(const Node& a, const Node& b);
Node transpose(const Node& a);
Node reshape(const Node& a, Shape shape);
Node concat(std::span<const Node> parts);  // along axis 0
Node stack(std::span<const Node> rows);    // rank-1 [d] each -> [n x d]
Node slice(const Node& a, std::size_t begin, std::size_t end);  // axis 0
Node row(const Node& a, std::size_t index);                     // [n x d] -> [d]
Node diagonal(const Node& a);                                   // [m x n] -> [min(m, n)]
Node outer(const Node& a, const Node& b);                       // [m], [n] -> [m x n]
Node gather_rows(const Node& table, std::span<const std::size_t> ids);

// sum_j w[j] * xs[j], all xs of one shape, w of shape [xs.size()].
Node weighted_sum(std::span<const Node> xs, const Node& w);

// Softmax along the last axis of a rank-1 or rank-2 node. When `mask` is
// non-empty it has one entry per column; false columns get exactly zero
// weight.
Node softmax(const Node& a, const std::vector<bool>& mask = {});

// Valid (no padding), stride-1 cross-correlation:
// input [1 x H x W], kernels [C x kh x kw], bias [C] -> [C x H' x W'].
Node conv2d(const Node& input, const Node& kernels, const Node& bias);

// Non-overlapping max pooling [C x H x W] -> [C x H/ph x W/pw]. Gradient
// goes to the first maximum in row-major window order.
Node maxpool2d(const Node& input, std::size_t ph, std::size_t pw);

}  // namespace qitsa::ad
