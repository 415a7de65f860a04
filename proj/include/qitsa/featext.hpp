#pragma once

// Context modelling ahead of the complex embedding: a single-layer LSTM per
// track and single-head scaled dot-product self-attention on the amplitude
// track.

#include <array>
#include <string>
#include <vector>

#include "qitsa/autodiff.hpp"
#include "qitsa/rng.hpp"

namespace qitsa::featext {

using ad::Node;

enum Gate : std::size_t { kInput = 0, kForget = 1, kOutput = 2, kCandidate = 3 };

struct LstmParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::array<Node, 4> W;  // [hidden x input], gate order i, f, o, g
  std::array<Node, 4> U;  // [hidden x hidden]
  std::array<Node, 4> b;  // [hidden]

  // Weights uniform in +-1/sqrt(fan_in), biases zero except forget = 1.
  static LstmParams init(std::size_t input_dim, std::size_t hidden_dim, Rng& rng, const std::string& name);
  // All-zero parameters (used by tests to hand-set values).
  static LstmParams zeros(std::size_t input_dim, std::size_t hidden_dim, const std::string& name);

  std::vector<Node> parameters() const;
};

// x [n x input] -> hidden states [n x hidden], zero initial state. Steps whose
// mask entry is false carry the previous state forward unchanged.
Node lstm_forward(const Node& x, const LstmParams& params, const std::vector<bool>& mask = {});

struct AttentionParams {
  std::size_t dim = 0;
  Node W_q, W_k, W_v;  // [dim x dim]

  static AttentionParams init(std::size_t dim, Rng& rng, const std::string& name);
  static AttentionParams from(ad::Array wq, ad::Array wk, ad::Array wv, const std::string& name);

  double scale() const;
  std::vector<Node> parameters() const { return {W_q, W_k, W_v}; }
};

struct AttentionOutput {
  Node weights;  // F [n x n], rows sum to 1, masked columns exactly 0
  Node output;   // F (r W_v) [n x dim]
};

AttentionOutput self_attention_detail(const Node& r, const AttentionParams& params,
                                      const std::vector<bool>& mask = {});

inline Node self_attention(const Node& r, const AttentionParams& params, const std::vector<bool>& mask = {}) {
  return self_attention_detail(r, params, mask).output;
}

}  // namespace qitsa::featext
