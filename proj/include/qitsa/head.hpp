#pragma once

// Feature concentration over a sentence density matrix and the final
// single-logit classifier over the concatenated imaginary and real features.

#include <optional>
#include <string>
#include <vector>

#include "qitsa/autodiff.hpp"
#include "qitsa/rng.hpp"

namespace qitsa::head {

using ad::Node;

enum class Reduction { CnnMaxPool, MaxPool, CnnDiagonal, Diagonal };

std::string_view to_string(Reduction r);
Reduction parse_reduction(std::string_view text);
// Row label as used in ablation tables.
std::string_view display_name(Reduction r);

struct ReductionConfig {
  Reduction variant = Reduction::CnnMaxPool;
  std::size_t kernels = 8;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t pool_h = 2;
  std::size_t pool_w = 2;

  bool uses_conv() const { return variant == Reduction::CnnMaxPool || variant == Reduction::CnnDiagonal; }
};

// Output length of reduce() for a d x d input; throws ShapeError when the
// configuration cannot be applied to d.
std::size_t feature_dim(std::size_t d, const ReductionConfig& cfg);

struct ConvParams {
  Node kernels;  // [C x kh x kw]
  Node bias;     // [C]

  static ConvParams init(const ReductionConfig& cfg, Rng& rng, const std::string& name);
};

// rho [d x d] -> features [feature_dim]. `conv` is required for the CNN
// variants and ignored otherwise.
Node reduce(const Node& rho, const ReductionConfig& cfg, const ConvParams* conv = nullptr);

// One reduce instance with its own (untied) convolution parameters.
class Reducer {
 public:
  Reducer(std::size_t d, ReductionConfig cfg, Rng& rng, const std::string& name);

  Node forward(const Node& rho) const;
  std::size_t feature_dim() const { return feature_dim_; }
  const ReductionConfig& config() const { return cfg_; }
  std::vector<Node> parameters() const;

 private:
  ReductionConfig cfg_;
  std::size_t feature_dim_;
  std::optional<ConvParams> conv_;
};

struct ClassifierParams {
  Node weight;  // [2 f x 1]
  Node bias;    // [1]

  static ClassifierParams init(std::size_t feature_dim, Rng& rng, const std::string& name);
  static ClassifierParams from(ad::Array weight, double bias, const std::string& name);
  std::vector<Node> parameters() const { return {weight, bias}; }
};

// sigmoid(FC([f_imag ; f_real])) as a one-element node.
Node classify(const Node& f_real, const Node& f_imag, const ClassifierParams& params);

}  // namespace qitsa::head
