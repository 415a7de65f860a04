#include "qitsa/qembed.hpp"

#include <algorithm>
#include <cmath>

#include "qitsa/error.hpp"

namespace qitsa::qembed {

namespace {

ad::Array table_array(const AmplitudeTable& table) {
  return ad::Array({table.rows(), table.dim}, table.data);
}

std::vector<std::size_t> as_indices(std::span<const TokenId> ids) {
  return {ids.begin(), ids.end()};
}

void require_words(std::span<const DensityPair> words, const char* op) {
  if (words.empty()) throw Error(std::string(op) + ": empty sentence");
}

}  // namespace

EmbeddingTable::EmbeddingTable(const AmplitudeTable& table, bool trainable, std::string name)
    : EmbeddingTable(table_array(table), trainable, std::move(name)) {}

EmbeddingTable::EmbeddingTable(ad::Array weights, bool trainable, std::string name) : trainable_(trainable) {
  if (weights.rank() != 2) throw ShapeError("embedding table must be a matrix");
  weights_ = trainable ? ad::parameter(std::move(weights), std::move(name)) : ad::constant(std::move(weights));
}

std::vector<bool> token_mask(std::span<const TokenId> ids) {
  std::vector<bool> mask(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) mask[i] = ids[i] != kPadId;
  return mask;
}

Node lookup_amplitude(std::span<const TokenId> ids, const EmbeddingTable& table) {
  return ad::gather_rows(table.weights(), as_indices(ids));
}

std::string_view to_string(PhaseSource source) {
  switch (source) {
    case PhaseSource::Sentiment: return "sentiment";
    case PhaseSource::EmbeddingTable: return "embedding_table";
    case PhaseSource::PrecomputedFile: return "precomputed_file";
  }
  return "sentiment";
}

PhaseSource parse_phase_source(std::string_view text) {
  if (text == "sentiment") return PhaseSource::Sentiment;
  if (text == "embedding_table") return PhaseSource::EmbeddingTable;
  if (text == "precomputed_file") return PhaseSource::PrecomputedFile;
  throw Error("unknown phase source '" + std::string(text) + "'");
}

EmbeddingTable make_phase_table(PhaseSource source, const Vocabulary& vocab, std::size_t dim,
                                const PhaseAssets& assets) {
  switch (source) {
    case PhaseSource::Sentiment: {
      if (!assets.lexicon) throw Error("phase source 'sentiment' needs a polarity lexicon");
      ad::Array rows({vocab.size(), dim});
      for (TokenId id = 2; id < vocab.size(); ++id) {
        const double s = assets.lexicon->score(vocab.token(id));
        std::fill_n(rows.data().begin() + id * dim, dim, s);
      }
      return EmbeddingTable(std::move(rows), false, "phase.table");
    }
    case PhaseSource::EmbeddingTable: {
      if (assets.vectors) {
        if (assets.vectors->dim != dim || assets.vectors->rows() != vocab.size())
          throw ShapeError("phase embedding init table does not match vocabulary/dim");
        return EmbeddingTable(*assets.vectors, true, "phase.table");
      }
      return EmbeddingTable(random_amplitude_table(vocab, dim, assets.seed), true, "phase.table");
    }
    case PhaseSource::PrecomputedFile: {
      if (!assets.vectors) throw Error("phase source 'precomputed_file' needs a vector file");
      if (assets.vectors->dim != dim || assets.vectors->rows() != vocab.size())
        throw ShapeError("precomputed phase table does not match vocabulary/dim");
      return EmbeddingTable(*assets.vectors, false, "phase.table");
    }
  }
  throw Error("unknown phase source");
}

Node lookup_phase(std::span<const TokenId> ids, PhaseSource source, const Vocabulary& vocab, std::size_t dim,
                  const PhaseAssets& assets) {
  for (TokenId id : ids)
    if (id >= vocab.size()) throw Error("token id " + std::to_string(id) + " out of vocabulary range");
  return lookup_phase(ids, make_phase_table(source, vocab, dim, assets));
}

Node lookup_phase(std::span<const TokenId> ids, const EmbeddingTable& phase_table) {
  return ad::gather_rows(phase_table.weights(), as_indices(ids));
}

ComplexWordState euler_split(const Node& r, const Node& beta) {
  if (r.shape() != beta.shape())
    throw ShapeError("euler_split: amplitude " + ad::shape_string(r.shape()) + " vs phase " +
                     ad::shape_string(beta.shape()));
  return {r, beta, ad::mul(r, ad::cos(beta)), ad::mul(r, ad::sin(beta))};
}

DensityPair word_density(const Node& re, const Node& im) {
  if (re.shape() != im.shape() || re.value().rank() != 1)
    throw ShapeError("word_density: re and im must be vectors of equal length");
  return {ad::sub(ad::outer(re, re), ad::outer(im, im)), ad::add(ad::outer(re, im), ad::outer(im, re))};
}

std::pair<Node, Node> normalize_word(const Node& re, const Node& im) {
  Node sq = ad::add(ad::sum(ad::mul(re, re)), ad::sum(ad::mul(im, im)));
  // 1 / sqrt(|v|^2 + tiny) via exp(-log(.) / 2)
  Node inv = ad::exp(ad::scale(ad::log(ad::shift(sq, 1e-12)), -0.5));
  return {ad::scale_by(re, inv), ad::scale_by(im, inv)};
}

std::vector<DensityPair> word_densities(const ComplexWordState& state, const std::vector<bool>& mask,
                                        bool normalize_words) {
  const std::size_t n = state.re.shape()[0];
  if (!mask.empty() && mask.size() != n) throw ShapeError("word_densities: mask length differs from rows");
  std::vector<DensityPair> out;
  for (std::size_t j = 0; j < n; ++j) {
    if (!mask.empty() && !mask[j]) continue;
    Node re = ad::row(state.re, j);
    Node im = ad::row(state.im, j);
    if (normalize_words) std::tie(re, im) = normalize_word(re, im);
    out.push_back(word_density(re, im));
  }
  return out;
}

MixtureWeights MixtureWeights::ones(bool trainable, std::string name) {
  ad::Array w({2}, 1.0);
  return {trainable ? ad::parameter(std::move(w), std::move(name)) : ad::constant(std::move(w))};
}

Node fuse_part(std::span<const DensityPair> words, const Node& per_word_w, DensityPart part, const Node& part_weight) {
  require_words(words, "fuse_part");
  std::vector<Node> mats;
  mats.reserve(words.size());
  for (const auto& w : words) mats.push_back(part == DensityPart::Real ? w.real : w.imag);
  return ad::scale_by(ad::weighted_sum(mats, per_word_w), part_weight);
}

DensityPair sentence_mixture(std::span<const DensityPair> words, const Node& per_word_w,
                             const MixtureWeights& part_w) {
  require_words(words, "sentence_mixture");
  return {fuse_part(words, per_word_w, DensityPart::Real, ad::slice(part_w.part, 0, 1)),
          fuse_part(words, per_word_w, DensityPart::Imag, ad::slice(part_w.part, 1, 2))};
}

QAttentionScores q_attention(std::span<const DensityPair> words, DensityPart part) {
  require_words(words, "q_attention");
  std::vector<Node> diags;
  diags.reserve(words.size());
  for (const auto& w : words) diags.push_back(ad::diagonal(part == DensityPart::Real ? w.real : w.imag));
  Node d = ad::stack(diags);
  Node scores = ad::matmul(d, ad::transpose(d));
  Node alpha = ad::softmax(ad::sum_rows(scores));
  return {scores, alpha};
}

DensityPair q_attention_fusion(std::span<const DensityPair> words, const MixtureWeights& part_w) {
  Node alpha_real = q_attention(words, DensityPart::Real).alpha;
  Node alpha_imag = q_attention(words, DensityPart::Imag).alpha;
  return {fuse_part(words, alpha_real, DensityPart::Real, ad::slice(part_w.part, 0, 1)),
          fuse_part(words, alpha_imag, DensityPart::Imag, ad::slice(part_w.part, 1, 2))};
}

Node uniform_weights(std::size_t n) {
  if (n == 0) throw Error("uniform_weights: empty sentence");
  return ad::constant(ad::Array({n}, 1.0 / static_cast<double>(n)));
}

DensityPair mean_fusion(std::span<const DensityPair> words) {
  return mean_fusion(words, MixtureWeights::ones(false));
}

DensityPair mean_fusion(std::span<const DensityPair> words, const MixtureWeights& part_w) {
  require_words(words, "mean_fusion");
  return sentence_mixture(words, uniform_weights(words.size()), part_w);
}

}  // namespace qitsa::qembed
