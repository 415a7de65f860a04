#include "qitsa/head.hpp"

#include <array>
#include <cmath>

#include "qitsa/error.hpp"

namespace qitsa::head {

std::string_view to_string(Reduction r) {
  switch (r) {
    case Reduction::CnnMaxPool: return "cnn_maxpool";
    case Reduction::MaxPool: return "maxpool";
    case Reduction::CnnDiagonal: return "cnn_diagonal";
    case Reduction::Diagonal: return "diagonal";
  }
  return "cnn_maxpool";
}

Reduction parse_reduction(std::string_view text) {
  if (text == "cnn_maxpool") return Reduction::CnnMaxPool;
  if (text == "maxpool") return Reduction::MaxPool;
  if (text == "cnn_diagonal") return Reduction::CnnDiagonal;
  if (text == "diagonal") return Reduction::Diagonal;
  throw Error("unknown reduction '" + std::string(text) + "'");
}

std::string_view display_name(Reduction r) {
  switch (r) {
    case Reduction::CnnMaxPool: return "CNN-MaxPooling";
    case Reduction::MaxPool: return "MaxPooling";
    case Reduction::CnnDiagonal: return "CNN-Diagonal";
    case Reduction::Diagonal: return "Diagonal";
  }
  return "";
}

std::size_t feature_dim(std::size_t d, const ReductionConfig& cfg) {
  auto fail = [&](const std::string& why) -> std::size_t {
    throw ShapeError("reduction " + std::string(to_string(cfg.variant)) + " on " + std::to_string(d) + "x" +
                     std::to_string(d) + ": " + why);
  };
  if (d == 0) return fail("empty matrix");
  std::size_t h = d, w = d, channels = 1;
  if (cfg.uses_conv()) {
    if (cfg.kernels == 0 || cfg.kernel_h == 0 || cfg.kernel_w == 0) return fail("empty kernel configuration");
    if (cfg.kernel_h > d || cfg.kernel_w > d) return fail("kernel larger than input");
    h = d - cfg.kernel_h + 1;
    w = d - cfg.kernel_w + 1;
    channels = cfg.kernels;
  }
  switch (cfg.variant) {
    case Reduction::CnnMaxPool:
    case Reduction::MaxPool:
      if (cfg.pool_h == 0 || cfg.pool_w == 0 || cfg.pool_h > h || cfg.pool_w > w) return fail("pool window exceeds input");
      return channels * (h / cfg.pool_h) * (w / cfg.pool_w);
    case Reduction::CnnDiagonal:
    case Reduction::Diagonal:
      return channels * std::min(h, w);
  }
  return fail("unknown variant");
}

ConvParams ConvParams::init(const ReductionConfig& cfg, Rng& rng, const std::string& name) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.kernel_h * cfg.kernel_w));
  ad::Array k({cfg.kernels, cfg.kernel_h, cfg.kernel_w});
  for (double& x : k.data()) x = rng.uniform(-bound, bound);
  return {ad::parameter(std::move(k), name + ".kernels"), ad::parameter(ad::Array({cfg.kernels}), name + ".bias")};
}

Node reduce(const Node& rho, const ReductionConfig& cfg, const ConvParams* conv) {
  if (rho.value().rank() != 2 || rho.shape()[0] != rho.shape()[1])
    throw ShapeError("reduce: expected a square matrix, got " + ad::shape_string(rho.shape()));
  const std::size_t d = rho.shape()[0];
  feature_dim(d, cfg);
  if (cfg.uses_conv() && !conv) throw Error("reduce: CNN variant without convolution parameters");

  Node grid = ad::reshape(rho, {1, d, d});
  switch (cfg.variant) {
    case Reduction::Diagonal:
      return ad::diagonal(rho);
    case Reduction::MaxPool: {
      Node pooled = ad::maxpool2d(grid, cfg.pool_h, cfg.pool_w);
      return ad::reshape(pooled, {pooled.size()});
    }
    case Reduction::CnnMaxPool: {
      Node pooled = ad::maxpool2d(ad::conv2d(grid, conv->kernels, conv->bias), cfg.pool_h, cfg.pool_w);
      return ad::reshape(pooled, {pooled.size()});
    }
    case Reduction::CnnDiagonal: {
      Node maps = ad::conv2d(grid, conv->kernels, conv->bias);
      const std::size_t c = maps.shape()[0], h = maps.shape()[1], w = maps.shape()[2];
      std::vector<Node> diags;
      diags.reserve(c);
      for (std::size_t k = 0; k < c; ++k) diags.push_back(ad::diagonal(ad::reshape(ad::slice(maps, k, k + 1), {h, w})));
      return ad::concat(diags);
    }
  }
  throw Error("reduce: unknown variant");
}

Reducer::Reducer(std::size_t d, ReductionConfig cfg, Rng& rng, const std::string& name)
    : cfg_(cfg), feature_dim_(head::feature_dim(d, cfg)) {
  if (cfg_.uses_conv()) conv_ = ConvParams::init(cfg_, rng, name);
}

Node Reducer::forward(const Node& rho) const { return reduce(rho, cfg_, conv_ ? &*conv_ : nullptr); }

std::vector<Node> Reducer::parameters() const {
  if (!conv_) return {};
  return {conv_->kernels, conv_->bias};
}

ClassifierParams ClassifierParams::init(std::size_t feature_dim, Rng& rng, const std::string& name) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(2 * feature_dim));
  ad::Array w({2 * feature_dim, 1});
  for (double& x : w.data()) x = rng.uniform(-bound, bound);
  return from(std::move(w), 0.0, name);
}

ClassifierParams ClassifierParams::from(ad::Array weight, double bias, const std::string& name) {
  if (weight.rank() != 2 || weight.shape()[1] != 1) throw ShapeError("classifier weight must be [2f x 1]");
  return {ad::parameter(std::move(weight), name + ".weight"), ad::parameter(ad::Array::scalar(bias), name + ".bias")};
}

Node classify(const Node& f_real, const Node& f_imag, const ClassifierParams& params) {
  if (f_real.shape() != f_imag.shape() || f_real.value().rank() != 1)
    throw ShapeError("classify: feature vectors differ");
  if (params.weight.shape()[0] != 2 * f_real.size())
    throw ShapeError("classify: weight expects " + std::to_string(params.weight.shape()[0] / 2) + " features per track");
  std::array<Node, 2> parts{f_imag, f_real};
  Node features = ad::reshape(ad::concat(parts), {1, 2 * f_real.size()});
  Node logit = ad::add(ad::reshape(ad::matmul(features, params.weight), {1}), params.bias);
  return ad::sigmoid(logit);
}

}  // namespace qitsa::head
