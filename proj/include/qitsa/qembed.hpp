#pragma once

// Complex-valued word representations and their density matrices.
//
// A word is r * exp(i * beta) with amplitude r (semantics) and phase beta
// (sentiment). It is carried as the real pair (re, im) = (r cos beta,
// r sin beta). A word density matrix is kept as two real d x d parts using
// the unconjugated expansion
//
//   real = re re^T - im im^T,    imag = re im^T + im re^T,
//
// and a sentence is a weighted mixture of its word matrices, each part on
// its own track.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qitsa/autodiff.hpp"
#include "qitsa/corpus.hpp"

namespace qitsa::qembed {

using ad::Node;

// Row lookup table over token ids, optionally trainable.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(const AmplitudeTable& table, bool trainable, std::string name);
  EmbeddingTable(ad::Array weights, bool trainable, std::string name);

  const Node& weights() const { return weights_; }
  Node& weights() { return weights_; }
  bool trainable() const { return trainable_; }
  std::size_t rows() const { return weights_.shape()[0]; }
  std::size_t dim() const { return weights_.shape()[1]; }

 private:
  Node weights_;
  bool trainable_ = false;
};

// true for every non-PAD position.
std::vector<bool> token_mask(std::span<const TokenId> ids);

// Row-stacked amplitude vectors [n x d]. PAD rows come back as the table's
// PAD row (zero); callers drop them with token_mask().
Node lookup_amplitude(std::span<const TokenId> ids, const EmbeddingTable& table);

enum class PhaseSource { Sentiment, EmbeddingTable, PrecomputedFile };

std::string_view to_string(PhaseSource source);
PhaseSource parse_phase_source(std::string_view text);

// Per-vocabulary phase rows. Sentiment rows broadcast the lexicon polarity
// to every coordinate; embedding-table rows are trainable; precomputed rows
// come verbatim from a vector file (zeros for tokens absent from it).
struct PhaseAssets {
  const PhaseLexicon* lexicon = nullptr;
  const AmplitudeTable* vectors = nullptr;  // precomputed rows, or init for the embedding table
  std::uint64_t seed = 7;
};

EmbeddingTable make_phase_table(PhaseSource source, const Vocabulary& vocab, std::size_t dim,
                                const PhaseAssets& assets);

// Phase rows [n x d] straight from the source, for one-off use outside a
// model (visualisation, tests).
Node lookup_phase(std::span<const TokenId> ids, PhaseSource source, const Vocabulary& vocab,
                  std::size_t dim, const PhaseAssets& assets);
Node lookup_phase(std::span<const TokenId> ids, const EmbeddingTable& phase_table);

struct ComplexWordState {
  Node r;
  Node beta;
  Node re;
  Node im;
};

ComplexWordState euler_split(const Node& r, const Node& beta);

struct DensityPair {
  Node real;
  Node imag;
};

// re, im are rank-1 [d].
DensityPair word_density(const Node& re, const Node& im);

// Scales [re; im] to unit L2 norm (zero vectors stay zero).
std::pair<Node, Node> normalize_word(const Node& re, const Node& im);

// Per-row density matrices of an [n x d] state, keeping rows where mask is
// true (all rows when mask is empty).
std::vector<DensityPair> word_densities(const ComplexWordState& state, const std::vector<bool>& mask = {},
                                        bool normalize_words = false);

// Learnable part weights [2]; index 0 scales the real track, 1 the imaginary.
struct MixtureWeights {
  Node part;

  static MixtureWeights ones(bool trainable, std::string name = "mixture.part");
};

enum class DensityPart { Real, Imag };

// part_weight * sum_j per_word_w[j] * rho_j(part).
Node fuse_part(std::span<const DensityPair> words, const Node& per_word_w, DensityPart part,
               const Node& part_weight);

DensityPair sentence_mixture(std::span<const DensityPair> words, const Node& per_word_w,
                             const MixtureWeights& part_w);

struct QAttentionScores {
  Node scores;  // S[i, j] = tr(rho_i . rho_j) = sum_k rho_i[k, k] rho_j[k, k]
  Node alpha;   // softmax_j of column sums of S
};

QAttentionScores q_attention(std::span<const DensityPair> words, DensityPart part);

// Sentence matrix with per-part Q-attention weights.
DensityPair q_attention_fusion(std::span<const DensityPair> words, const MixtureWeights& part_w);

Node uniform_weights(std::size_t n);

DensityPair mean_fusion(std::span<const DensityPair> words);
DensityPair mean_fusion(std::span<const DensityPair> words, const MixtureWeights& part_w);

}  // namespace qitsa::qembed
