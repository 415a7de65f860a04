#include "qitsa/featext.hpp"

#include <cmath>

#include "qitsa/error.hpp"

namespace qitsa::featext {

namespace {

constexpr const char* kGateNames[4] = {"i", "f", "o", "g"};

ad::Array uniform_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  ad::Array a({rows, cols});
  for (double& x : a.data()) x = rng.uniform(-bound, bound);
  return a;
}

}  // namespace

LstmParams LstmParams::init(std::size_t input_dim, std::size_t hidden_dim, Rng& rng, const std::string& name) {
  LstmParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  for (std::size_t g = 0; g < 4; ++g) {
    p.W[g] = ad::parameter(uniform_matrix(hidden_dim, input_dim, rng), name + ".W_" + kGateNames[g]);
    p.U[g] = ad::parameter(uniform_matrix(hidden_dim, hidden_dim, rng), name + ".U_" + kGateNames[g]);
    p.b[g] = ad::parameter(ad::Array({hidden_dim}, g == kForget ? 1.0 : 0.0), name + ".b_" + kGateNames[g]);
  }
  return p;
}

LstmParams LstmParams::zeros(std::size_t input_dim, std::size_t hidden_dim, const std::string& name) {
  LstmParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  for (std::size_t g = 0; g < 4; ++g) {
    p.W[g] = ad::parameter(ad::Array({hidden_dim, input_dim}), name + ".W_" + kGateNames[g]);
    p.U[g] = ad::parameter(ad::Array({hidden_dim, hidden_dim}), name + ".U_" + kGateNames[g]);
    p.b[g] = ad::parameter(ad::Array({hidden_dim}), name + ".b_" + kGateNames[g]);
  }
  return p;
}

std::vector<Node> LstmParams::parameters() const {
  std::vector<Node> out;
  for (std::size_t g = 0; g < 4; ++g) out.insert(out.end(), {W[g], U[g], b[g]});
  return out;
}

Node lstm_forward(const Node& x, const LstmParams& params, const std::vector<bool>& mask) {
  if (x.value().rank() != 2 || x.shape()[1] != params.input_dim)
    throw ShapeError("lstm_forward: input " + ad::shape_string(x.shape()) + " does not match input_dim " +
                     std::to_string(params.input_dim));
  const std::size_t n = x.shape()[0];
  const std::size_t h = params.hidden_dim;
  if (n == 0) throw ShapeError("lstm_forward: empty sequence");
  if (!mask.empty() && mask.size() != n) throw ShapeError("lstm_forward: mask length differs from steps");

  // Input projections for all steps at once: [n x h] per gate.
  std::array<Node, 4> xw;
  std::array<Node, 4> u_t;
  for (std::size_t g = 0; g < 4; ++g) {
    xw[g] = ad::matmul(x, ad::transpose(params.W[g]));
    u_t[g] = ad::transpose(params.U[g]);
  }

  Node h_prev = ad::constant(ad::Array({h}));
  Node c_prev = ad::constant(ad::Array({h}));
  std::vector<Node> states;
  states.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    if (!mask.empty() && !mask[t]) {
      states.push_back(h_prev);
      continue;
    }
    Node h_row = ad::reshape(h_prev, {1, h});
    std::array<Node, 4> pre;
    for (std::size_t g = 0; g < 4; ++g)
      pre[g] = ad::add(ad::add(ad::row(xw[g], t), ad::reshape(ad::matmul(h_row, u_t[g]), {h})), params.b[g]);
    Node i = ad::sigmoid(pre[kInput]);
    Node f = ad::sigmoid(pre[kForget]);
    Node o = ad::sigmoid(pre[kOutput]);
    Node g = ad::tanh(pre[kCandidate]);
    Node c = ad::add(ad::mul(f, c_prev), ad::mul(i, g));
    Node hs = ad::mul(o, ad::tanh(c));
    states.push_back(hs);
    h_prev = hs;
    c_prev = c;
  }
  return ad::stack(states);
}

AttentionParams AttentionParams::init(std::size_t dim, Rng& rng, const std::string& name) {
  return from(uniform_matrix(dim, dim, rng), uniform_matrix(dim, dim, rng), uniform_matrix(dim, dim, rng), name);
}

AttentionParams AttentionParams::from(ad::Array wq, ad::Array wk, ad::Array wv, const std::string& name) {
  AttentionParams p;
  p.dim = wq.shape()[0];
  for (const auto* w : {&wq, &wk, &wv})
    if (w->rank() != 2 || w->shape()[0] != p.dim || w->shape()[1] != p.dim)
      throw ShapeError("attention weights must be square and equal in size");
  p.W_q = ad::parameter(std::move(wq), name + ".W_q");
  p.W_k = ad::parameter(std::move(wk), name + ".W_k");
  p.W_v = ad::parameter(std::move(wv), name + ".W_v");
  return p;
}

double AttentionParams::scale() const { return std::sqrt(static_cast<double>(dim)); }

AttentionOutput self_attention_detail(const Node& r, const AttentionParams& params, const std::vector<bool>& mask) {
  if (r.value().rank() != 2 || r.shape()[1] != params.dim)
    throw ShapeError("self_attention: input " + ad::shape_string(r.shape()) + " does not match dim " +
                     std::to_string(params.dim));
  if (!mask.empty() && mask.size() != r.shape()[0]) throw ShapeError("self_attention: mask length differs from rows");
  Node q = ad::matmul(r, params.W_q);
  Node k = ad::matmul(r, params.W_k);
  Node v = ad::matmul(r, params.W_v);
  Node scores = ad::scale(ad::matmul(q, ad::transpose(k)), 1.0 / params.scale());
  Node weights = ad::softmax(scores, mask);
  return {weights, ad::matmul(weights, v)};
}

}  // namespace qitsa::featext
