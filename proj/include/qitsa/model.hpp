#pragma once

// End-to-end sentiment model: lookups -> LSTM (+ self-attention on the
// amplitude track) -> complex split -> word density matrices -> sentence
// fusion -> per-track reduction -> classifier. Also the checkpoint format.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "qitsa/autodiff.hpp"
#include "qitsa/corpus.hpp"
#include "qitsa/featext.hpp"
#include "qitsa/head.hpp"
#include "qitsa/qembed.hpp"
#include "qitsa/rng.hpp"

namespace qitsa {

enum class Fusion { QAttention, Mean };
enum class AmplitudeSource { EmbeddingTable, PrecomputedFile };

std::string_view to_string(Fusion f);
Fusion parse_fusion(std::string_view text);
std::string_view to_string(AmplitudeSource s);
AmplitudeSource parse_amplitude_source(std::string_view text);

struct ModelConfig {
  std::size_t dim = 100;
  std::size_t hidden_dim = 0;  // 0: same as dim
  AmplitudeSource amplitude_source = AmplitudeSource::EmbeddingTable;
  qembed::PhaseSource phase_source = qembed::PhaseSource::Sentiment;
  bool trainable_amplitude = true;
  bool normalize_words = false;
  Fusion fusion = Fusion::QAttention;
  head::ReductionConfig reduction;
  std::uint64_t seed = 1;

  std::size_t hidden() const { return hidden_dim ? hidden_dim : dim; }
};

struct ForwardTrace {
  std::vector<bool> mask;
  std::vector<TokenId> kept_ids;          // non-PAD ids, in order
  qembed::ComplexWordState inputs;        // raw lookups, split
  qembed::ComplexWordState features;      // after LSTM / self-attention, split
  std::vector<qembed::DensityPair> words; // one per kept id
  ad::Node alpha_real;                    // per-word weights, real track
  ad::Node alpha_imag;                    // per-word weights, imaginary track
  qembed::DensityPair sentence;
  ad::Node f_real;
  ad::Node f_imag;
  ad::Node probability;
};

class QitsaModel {
 public:
  QitsaModel(ModelConfig cfg, Vocabulary vocab, qembed::EmbeddingTable amplitude, qembed::EmbeddingTable phase);

  // `ids` may carry a PAD suffix (batch padding); at least one id must be
  // a real token.
  ForwardTrace forward(std::span<const TokenId> ids) const;
  ad::Node probability(std::span<const TokenId> ids) const { return forward(ids).probability; }
  double predict(std::span<const TokenId> ids) const;

  // Trainable leaves, in a fixed order.
  std::vector<ad::Node> parameters() const;
  // Every tensor that defines the model (trainable or not), in a fixed order.
  std::vector<std::pair<std::string, ad::Node>> state() const;

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  const qembed::EmbeddingTable& amplitude_table() const { return amplitude_; }
  const qembed::EmbeddingTable& phase_table() const { return phase_; }
  std::size_t feature_dim() const { return reduce_real_.feature_dim(); }

 private:
  QitsaModel(ModelConfig cfg, Vocabulary vocab, qembed::EmbeddingTable amplitude, qembed::EmbeddingTable phase,
             Rng&& init_rng);

  ModelConfig cfg_;
  Vocabulary vocab_;
  qembed::EmbeddingTable amplitude_;
  qembed::EmbeddingTable phase_;
  featext::LstmParams lstm_amplitude_;
  featext::LstmParams lstm_phase_;
  featext::AttentionParams attention_;
  qembed::MixtureWeights mixture_;
  head::Reducer reduce_real_;
  head::Reducer reduce_imag_;
  head::ClassifierParams classifier_;
};

// Word-level assets a model may draw on. Any may be null.
struct ModelAssets {
  const AmplitudeTable* word_vectors = nullptr;  // GloVe-style table aligned to the vocabulary
  const AmplitudeTable* precomputed = nullptr;   // per-token vectors (e.g. exported BERT)
  const PhaseLexicon* lexicon = nullptr;
};

// Throws Error when the chosen sources need an asset that is missing.
QitsaModel build_model(const ModelConfig& cfg, const Vocabulary& vocab, const ModelAssets& assets);

// Binary checkpoint, little-endian:
//   "QITSACKP" | u32 version | u64 len, config text | u64 vocab size,
//   (u32 len, bytes) per token | u64 tensor count, then per tensor:
//   u32 len, name | u8 trainable | u32 rank | u64 extents[rank] | f64 values
struct Checkpoint {
  static constexpr char kMagic[8] = {'Q', 'I', 'T', 'S', 'A', 'C', 'K', 'P'};
  static constexpr std::uint32_t kVersion = 1;

  struct Tensor {
    bool trainable = false;
    ad::Array value;
  };

  std::string config_text;
  std::vector<std::string> vocab_tokens;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const;
};

Checkpoint make_checkpoint(const QitsaModel& model, std::string config_text);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Rebuilds the model described by `cfg` and copies every tensor in.
QitsaModel model_from_checkpoint(const ModelConfig& cfg, const Checkpoint& ckpt);

}  // namespace qitsa
