#include "qitsa/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "qitsa/error.hpp"

namespace qitsa::ad {

namespace {

thread_local bool g_grad_enabled = true;

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

void require_same(const Node& a, const Node& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                                      " vs " + shape_string(b.shape()));
}

template <typename F, typename D>
Node unary(const Node& a, F f, D df) {
  const Array& x = a.value();
  Array out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return make_op(std::move(out), {a}, [df](NodeImpl& self) {
    const Node& p = self.parents[0];
    if (!p.requires_grad()) return;
    const Array& x = p.value();
    Array& g = p.get()->grad;
    for (std::size_t i = 0; i < x.size(); ++i) g[i] += self.grad[i] * df(x[i], self.value[i]);
  });
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

Array::Array(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  require(shape_.size() >= 1 && shape_.size() <= 4, "array rank must be 1..4");
}

Array::Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  require(shape_.size() >= 1 && shape_.size() <= 4, "array rank must be 1..4");
  require(data_.size() == shape_size(shape_),
          "array data length " + std::to_string(data_.size()) + " does not match shape " + shape_string(shape_));
}

Array Array::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  std::size_t r = rows.size();
  std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    require(row.size() == c, "ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Array({r, c}, std::move(data));
}

void Array::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

const Array& Node::value() const { return impl_->value; }
Array& Node::mutable_value() { return impl_->value; }
const Array& Node::grad() const { return impl_->grad; }
Array& Node::mutable_grad() { return impl_->grad; }
bool Node::requires_grad() const { return impl_->requires_grad; }
bool Node::is_leaf() const { return impl_->parents.empty(); }
const std::string& Node::name() const { return impl_->name; }

double Node::item() const {
  require(size() == 1, "item() on node of shape " + shape_string(shape()));
  return value()[0];
}

void Node::zero_grad() {
  if (impl_->requires_grad) impl_->grad.fill(0.0);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Node constant(Array value) {
  auto impl = std::make_shared<NodeImpl>();
  impl->value = std::move(value);
  return Node(std::move(impl));
}

Node parameter(Array value, std::string name) {
  auto impl = std::make_shared<NodeImpl>();
  impl->grad = Array(value.shape());
  impl->value = std::move(value);
  impl->requires_grad = true;
  impl->name = std::move(name);
  return Node(std::move(impl));
}

Node make_op(Array value, std::vector<Node> parents, BackwardFn backward) {
  bool needs = g_grad_enabled &&
               std::any_of(parents.begin(), parents.end(), [](const Node& p) { return p.requires_grad(); });
  if (!needs) return constant(std::move(value));
  auto impl = std::make_shared<NodeImpl>();
  impl->grad = Array(value.shape());
  impl->value = std::move(value);
  impl->parents = std::move(parents);
  impl->backward = std::move(backward);
  impl->requires_grad = true;
  return Node(std::move(impl));
}

void accumulate(const Node& parent, std::span<const double> g) {
  if (!parent.requires_grad()) return;
  Array& dst = parent.get()->grad;
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

void backward(const Node& loss) {
  require(loss.size() == 1, "backward() needs a scalar loss, got " + shape_string(loss.shape()));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<NodeImpl*> order;
  std::unordered_set<NodeImpl*> visited;
  std::vector<std::pair<NodeImpl*, std::size_t>> stack{{loss.get(), 0}};
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeImpl* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (NodeImpl* n : order)
    if (!n->parents.empty()) n->grad.fill(0.0);
  loss.get()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward) (*it)->backward(**it);
}

Node add(const Node& a, const Node& b) {
  require_same(a, b, "add");
  Array out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_op(std::move(out), {a, b}, [](NodeImpl& self) {
    accumulate(self.parents[0], self.grad.data());
    accumulate(self.parents[1], self.grad.data());
  });
}

Node sub(const Node& a, const Node& b) {
  require_same(a, b, "sub");
  Array out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_op(std::move(out), {a, b}, [](NodeImpl& self) {
    accumulate(self.parents[0], self.grad.data());
    const Node& b = self.parents[1];
    if (!b.requires_grad()) return;
    Array& g = b.get()->grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
  });
}

Node mul(const Node& a, const Node& b) {
  require_same(a, b, "mul");
  Array out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_op(std::move(out), {a, b}, [](NodeImpl& self) {
    const Node& a = self.parents[0];
    const Node& b = self.parents[1];
    if (a.requires_grad()) {
      Array& g = a.get()->grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * b.value()[i];
    }
    if (b.requires_grad()) {
      Array& g = b.get()->grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * a.value()[i];
    }
  });
}

Node scale(const Node& a, double s) {
  Array out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * s;
  return make_op(std::move(out), {a}, [s](NodeImpl& self) {
    const Node& a = self.parents[0];
    if (!a.requires_grad()) return;
    Array& g = a.get()->grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
  });
}

Node shift(const Node& a, double c) {
  Array out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + c;
  return make_op(std::move(out), {a}, [](NodeImpl& self) { accumulate(self.parents[0], self.grad.data()); });
}

Node scale_by(const Node& a, const Node& s) {
  require(s.size() == 1, "scale_by: scale must have one element, got " + shape_string(s.shape()));
  const double k = s.value()[0];
  Array out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * k;
  return make_op(std::move(out), {a, s}, [](NodeImpl& self) {
    const Node& a = self.parents[0];
    const Node& s = self.parents[1];
    const double k = s.value()[0];
    if (a.requires_grad()) {
      Array& g = a.get()->grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * k;
    }
    if (s.requires_grad()) {
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * a.value()[i];
      s.get()->grad[0] += acc;
    }
  });
}

Node sigmoid(const Node& a) {
  return unary(
      a,
      [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Node tanh(const Node& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Node cos(const Node& a) {
  return unary(a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Node sin(const Node& a) {
  return unary(a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Node exp(const Node& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Node log(const Node& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Node clamp(const Node& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Node sum(const Node& a) {
  double acc = 0.0;
  for (double x : a.value().data()) acc += x;
  return make_op(Array::scalar(acc), {a}, [](NodeImpl& self) {
    const Node& a = self.parents[0];
    if (!a.requires_grad()) return;
    const double g = self.grad[0];
    for (double& x : a.get()->grad.data()) x += g;
  });
}

Node mean(const Node& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Node sum_rows(const Node& a) {
  require(a.value().rank() == 2, "sum_rows: expected a matrix");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Array out({n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += a.value().at(i, j);
  return make_op(std::move(out), {a}, [m, n](NodeImpl& self) {
    const Node& a = self.parents[0];
    if (!a.requires_grad()) return;
    Array& g = a.get()->grad;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g.at(i, j) += self.grad[j];
  });
}

Node matmul(const Node& a, const Node& b) {
  require(a.value().rank() == 2 && b.value().rank() == 2, "matmul: expected matrices");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  require(b.shape()[0] == k, "matmul: inner extents differ " + shape_string(a.shape()) + " x " +
                                 shape_string(b.shape()));
  const Array& A = a.value();
  const Array& B = b.value();
  Array out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &B.data()[p * n];
      double* orow = &out.data()[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  return make_op(std::move(out), {a, b}, [m, k, n](NodeImpl& self) {
    const Node& a = self.parents[0];
    const Node& b = self.parents[1];
    const Array& G = self.grad;
    if (a.requires_grad()) {  // dA = G * B^T
      const Array& B = b.value();
      Array& dA = a.get()->grad;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
          dA[i * k + p] += acc;
        }
    }
    if (b.requires_grad()) {  // dB = A^T * G
      const Array& A = a.value();
      Array& dB = b.get()->grad;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += aip * G[i * n + j];
        }
    }
  });
}

Node transpose(const Node& a) {
  require(a.value().rank() == 2, "transpose: expected a matrix");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Array out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.value()[i * n + j];
  return make_op(std::move(out), {a}, [m, n](NodeImpl& self) {
    const Node& a = self.parents[0];
    if (!a.requires_grad()) return;
    Array& g = a.get()->grad;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
  });
}

Node reshape(const Node& a, Shape shape) {
  require(shape_size(shape) == a.size(), "reshape: " + shape_string(a.shape()) + " to " + shape_string(shape));
  Array out(std::move(shape), std::vector<double>(a.value().data().begin(), a.value().data().end()));
  return make_op(std::move(out), {a}, [](NodeImpl& self) { accumulate(self.parents[0], self.grad.data()); });
}

Node concat(std::span<const Node> parts) {
  require(!parts.empty(), "concat: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  for (const auto& p : parts) {
    Shape t(p.shape().begin() + 1, p.shape().end());
    require(t == tail, "concat: trailing shapes differ");
    rows += p.shape()[0];
  }
  Shape shape{rows};
  shape.insert(shape.end(), tail.begin(), tail.end());
  Array out(shape);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + offset);
    offset += p.size();
  }
  return make_op(std::move(out), std::vector<Node>(parts.begin(), parts.end()), [](NodeImpl& self) {
    std::size_t offset = 0;
    for (const auto& p : self.parents) {
      accumulate(p, self.grad.data().subspan(offset, p.size()));
      offset += p.size();
    }
  });
}

Node stack(std::span<const Node> rows) {
  require(!rows.empty(), "stack: no inputs");
  const std::size_t d = rows[0].size();
  for (const auto& r : rows) require(r.value().rank() == 1 && r.size() == d, "stack: expected equal vectors");
  return reshape(concat(rows), {rows.size(), d});
}

Node slice(const Node& a, std::size_t begin, std::size_t end) {
  require(begin < end && end <= a.shape()[0], "slice: bad range");
  const std::size_t stride = a.size() / a.shape()[0];
  Shape shape = a.shape();
  shape[0] = end - begin;
  auto src = a.value().data().subspan(begin * stride, (end - begin) * stride);
  Array out(shape, std::vector<double>(src.begin(), src.end()));
  return make_op(std::move(out), {a}, [offset = begin * stride](NodeImpl& self) {
    const Node& a = self.parents[0];
    if (!a.requires_grad()) return;
    Array& g = a.get()->grad;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[offset + i] += self.grad[i];
  });
}

Node row(const Node& a, std::size_t index) {
  require(a.value().rank() == 2 && index < a.shape()[0], "row: index out of range");
  return reshape(slice(a, index, index + 1), {a.shape()[1]});
}

Node diagonal(const Node& a) {
  require(a.value().rank() == 2, "diagonal: expected a matrix");
  const std::size_t n = a.shape()[1];
  const std::size_t k = std::min(a.shape()[0], n);
  Array out({k});
  for (std::size_t i = 0; i < k; ++i) out[i] = a.value()[i * n + i];
  return make_op(std::move(out), {a}, [n, k](NodeImpl& self) {
    const Node& a = self.parents[0];
    if (!a.requires_grad()) return;
    Array& g = a.get()->grad;
    for (std::size_t i = 0; i < k; ++i) g[i * n + i] += self.grad[i];
  });
}

Node outer(const Node& a, const Node& b) {
  require(a.value().rank() == 1 && b.value().rank() == 1, "outer: expected vectors");
  const std::size_t m = a.size(), n = b.size();
  Array out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.value()[i] * b.value()[j];
  return make_op(std::move(out), {a, b}, [m, n](NodeImpl& self) {
    const Node& a = self.parents[0];
    const Node& b = self.parents[1];
    const Array& G = self.grad;
    if (a.requires_grad()) {
      Array& ga = a.get()->grad;
      for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * b.value()[j];
        ga[i] += acc;
      }
    }
    if (b.requires_grad()) {
      Array& gb = b.get()->grad;
      for (std::size_t i = 0; i < m; ++i) {
        const double ai = a.value()[i];
        for (std::size_t j = 0; j < n; ++j) gb[j] += G[i * n + j] * ai;
      }
    }
  });
}

Node gather_rows(const Node& table, std::span<const std::size_t> ids) {
  require(table.value().rank() == 2, "gather_rows: expected a matrix table");
  require(!ids.empty(), "gather_rows: no ids");
  const std::size_t rows = table.shape()[0], d = table.shape()[1];
  Array out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] < rows, "gather_rows: id " + std::to_string(ids[i]) + " out of range");
    std::copy_n(table.value().data().begin() + ids[i] * d, d, out.data().begin() + i * d);
  }
  return make_op(std::move(out), {table}, [ids = std::vector<std::size_t>(ids.begin(), ids.end()), d](NodeImpl& self) {
    const Node& t = self.parents[0];
    if (!t.requires_grad()) return;
    Array& g = t.get()->grad;
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t k = 0; k < d; ++k) g[ids[i] * d + k] += self.grad[i * d + k];
  });
}

Node weighted_sum(std::span<const Node> xs, const Node& w) {
  require(!xs.empty(), "weighted_sum: no inputs");
  require(w.value().rank() == 1 && w.size() == xs.size(), "weighted_sum: need one weight per input");
  const Shape& shape = xs[0].shape();
  for (const auto& x : xs) require(x.shape() == shape, "weighted_sum: inputs differ in shape");
  Array out(shape);
  for (std::size_t j = 0; j < xs.size(); ++j) {
    const double wj = w.value()[j];
    const auto& x = xs[j].value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += wj * x[i];
  }
  std::vector<Node> parents(xs.begin(), xs.end());
  parents.push_back(w);
  return make_op(std::move(out), std::move(parents), [](NodeImpl& self) {
    const std::size_t n = self.parents.size() - 1;
    const Node& w = self.parents[n];
    for (std::size_t j = 0; j < n; ++j) {
      const Node& x = self.parents[j];
      if (x.requires_grad()) {
        const double wj = w.value()[j];
        Array& g = x.get()->grad;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * wj;
      }
      if (w.requires_grad()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * x.value()[i];
        w.get()->grad[j] += acc;
      }
    }
  });
}

Node softmax(const Node& a, const std::vector<bool>& mask) {
  const Array& x = a.value();
  require(x.rank() == 1 || x.rank() == 2, "softmax: expected rank 1 or 2");
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.size() / cols;
  require(mask.empty() || mask.size() == cols, "softmax: mask length differs from last extent");
  if (!mask.empty()) require(std::find(mask.begin(), mask.end(), true) != mask.end(), "softmax: every column masked");
  for (double v : x.data())
    if (std::isnan(v)) throw Error("softmax: NaN input");
  auto live = [&](std::size_t j) { return mask.empty() || mask[j]; };

  Array out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = &x.data()[r * cols];
    double* o = &out.data()[r * cols];
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j)
      if (live(j)) mx = std::max(mx, in[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      o[j] = live(j) ? std::exp(in[j] - mx) : 0.0;
      total += o[j];
    }
    for (std::size_t j = 0; j < cols; ++j) o[j] /= total;
  }
  return make_op(std::move(out), {a}, [rows, cols](NodeImpl& self) {
    const Node& a = self.parents[0];
    if (!a.requires_grad()) return;
    Array& g = a.get()->grad;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* s = &self.value.data()[r * cols];
      const double* up = &self.grad.data()[r * cols];
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += s[j] * up[j];
      for (std::size_t j = 0; j < cols; ++j) g[r * cols + j] += s[j] * (up[j] - dot);
    }
  });
}

Node conv2d(const Node& input, const Node& kernels, const Node& bias) {
  require(input.value().rank() == 3 && input.shape()[0] == 1, "conv2d: input must be [1 x H x W]");
  require(kernels.value().rank() == 3, "conv2d: kernels must be [C x kh x kw]");
  const std::size_t H = input.shape()[1], W = input.shape()[2];
  const std::size_t C = kernels.shape()[0], kh = kernels.shape()[1], kw = kernels.shape()[2];
  require(bias.value().rank() == 1 && bias.size() == C, "conv2d: bias must be [C]");
  require(kh <= H && kw <= W, "conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                                  " larger than input " + std::to_string(H) + "x" + std::to_string(W));
  const std::size_t Ho = H - kh + 1, Wo = W - kw + 1;
  const double* in = input.value().data().data();
  const double* K = kernels.value().data().data();
  Array out({C, Ho, Wo});
  for (std::size_t c = 0; c < C; ++c) {
    double* o = &out.data()[c * Ho * Wo];
    std::fill(o, o + Ho * Wo, bias.value()[c]);
    for (std::size_t u = 0; u < kh; ++u)
      for (std::size_t v = 0; v < kw; ++v) {
        const double k = K[(c * kh + u) * kw + v];
        for (std::size_t y = 0; y < Ho; ++y) {
          const double* src = in + (y + u) * W + v;
          double* dst = o + y * Wo;
          for (std::size_t x = 0; x < Wo; ++x) dst[x] += k * src[x];
        }
      }
  }
  return make_op(std::move(out), {input, kernels, bias}, [=](NodeImpl& self) {
    const Node& input = self.parents[0];
    const Node& kernels = self.parents[1];
    const Node& bias = self.parents[2];
    const double* G = self.grad.data().data();
    const double* in = input.value().data().data();
    const double* K = kernels.value().data().data();
    for (std::size_t c = 0; c < C; ++c) {
      const double* gc = G + c * Ho * Wo;
      if (bias.requires_grad()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < Ho * Wo; ++i) acc += gc[i];
        bias.get()->grad[c] += acc;
      }
      for (std::size_t u = 0; u < kh; ++u)
        for (std::size_t v = 0; v < kw; ++v) {
          const std::size_t kidx = (c * kh + u) * kw + v;
          if (kernels.requires_grad()) {
            double acc = 0.0;
            for (std::size_t y = 0; y < Ho; ++y) {
              const double* src = in + (y + u) * W + v;
              const double* g = gc + y * Wo;
              for (std::size_t x = 0; x < Wo; ++x) acc += g[x] * src[x];
            }
            kernels.get()->grad[kidx] += acc;
          }
          if (input.requires_grad()) {
            const double k = K[kidx];
            double* gin = input.get()->grad.data().data();
            for (std::size_t y = 0; y < Ho; ++y) {
              double* dst = gin + (y + u) * W + v;
              const double* g = gc + y * Wo;
              for (std::size_t x = 0; x < Wo; ++x) dst[x] += k * g[x];
            }
          }
        }
    }
  });
}

Node maxpool2d(const Node& input, std::size_t ph, std::size_t pw) {
  require(input.value().rank() == 3, "maxpool2d: input must be [C x H x W]");
  const std::size_t C = input.shape()[0], H = input.shape()[1], W = input.shape()[2];
  require(ph >= 1 && pw >= 1 && ph <= H && pw <= W, "maxpool2d: window exceeds input");
  const std::size_t Ho = H / ph, Wo = W / pw;
  const double* in = input.value().data().data();
  Array out({C, Ho, Wo});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t x = 0; x < Wo; ++x) {
        std::size_t best = (c * H + y * ph) * W + x * pw;
        for (std::size_t u = 0; u < ph; ++u)
          for (std::size_t v = 0; v < pw; ++v) {
            std::size_t idx = (c * H + y * ph + u) * W + x * pw + v;
            if (in[idx] > in[best]) best = idx;
          }
        const std::size_t o = (c * Ho + y) * Wo + x;
        out[o] = in[best];
        argmax[o] = best;
      }
  return make_op(std::move(out), {input}, [argmax = std::move(argmax)](NodeImpl& self) {
    const Node& input = self.parents[0];
    if (!input.requires_grad()) return;
    Array& g = input.get()->grad;
    for (std::size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += self.grad[o];
  });
}

}  // namespace qitsa::ad
