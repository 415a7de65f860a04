#pragma once

// Dataset ingestion, tokenization, vocabulary and the two external word-level
// assets: amplitude vectors (GloVe-style text files) and polarity lexicons.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace qitsa {

using TokenId = std::uint32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr std::size_t kDefaultMaxLen = 64;

enum class DatasetName { MR, SST, SUBJ, CR, MPQA, Custom };
enum class LabelSemantics { PosNeg, SubjObj };
enum class DatasetFormat { Tsv, Presplit };

std::string_view to_string(DatasetName name);
DatasetName parse_dataset_name(std::string_view text);
LabelSemantics label_semantics(DatasetName name);

struct LabeledSentence {
  std::vector<std::string> words;
  std::vector<TokenId> tokens;  // filled by Dataset::index
  int label = 0;
  std::string raw_text;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;

  std::size_t total() const { return train + validation + test; }
  bool operator==(const SplitSizes&) const = default;
};

// Split sizes of the canonical distributions of the five benchmarks.
// Custom has none.
std::optional<SplitSizes> canonical_split_sizes(DatasetName name);

class Vocabulary;

struct Dataset {
  DatasetName name = DatasetName::Custom;
  LabelSemantics semantics = LabelSemantics::PosNeg;
  std::vector<LabeledSentence> train;
  std::vector<LabeledSentence> validation;
  std::vector<LabeledSentence> test;

  SplitSizes sizes() const { return {train.size(), validation.size(), test.size()}; }

  // Every tokenized sentence across all splits, in split order.
  std::vector<std::vector<std::string>> all_words() const;

  // Maps words to ids under `vocab` and truncates to `max_len` tokens.
  void index(const Vocabulary& vocab, std::size_t max_len = kDefaultMaxLen);

  // Empty when sizes match the canonical counts or no canonical
  // counts exist; otherwise a human-readable mismatch note.
  std::string canonical_mismatch() const;
};

// Lowercases ASCII, isolates every ASCII punctuation character as its own
// token, then splits on whitespace.
std::vector<std::string> tokenize(std::string_view raw_text);

// `tsv`: one `label<TAB>text` file split 80/10/10 after a seeded shuffle.
// `presplit`: a directory with train.tsv, validation.tsv and test.tsv.
Dataset load_dataset(const std::filesystem::path& path, DatasetName name, DatasetFormat format,
                     std::uint64_t split_seed = 7);

// Parses `label<TAB>text` lines. Throws ParseError on the first bad line.
std::vector<LabeledSentence> read_labeled_file(const std::filesystem::path& path);

class Vocabulary {
 public:
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();

  // Rebuilds from an id-ordered token list whose first two entries are the
  // PAD and UNK tokens.
  static Vocabulary from_tokens(std::vector<std::string> id_to_token);

  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const { return id_to_token_.at(id); }
  bool contains(std::string_view token) const;
  std::size_t size() const { return id_to_token_.size(); }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  std::vector<TokenId> encode(std::span<const std::string> words) const;

 private:
  friend Vocabulary build_vocab(const std::vector<std::vector<std::string>>&, std::size_t);
  void push(std::string token);

  std::unordered_map<std::string, TokenId> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// Ids ordered by descending frequency, ties broken lexicographically.
// Tokens seen fewer than `min_count` times are left out (they map to UNK).
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& sentences,
                       std::size_t min_count = 1);

// Dense per-id vector table, row-major vocab_size x dim.
struct AmplitudeTable {
  std::size_t dim = 0;
  std::vector<double> data;
  std::size_t found = 0;   // vocab tokens present in the file
  std::size_t missing = 0; // vocab tokens initialised without a file vector

  std::size_t rows() const { return dim ? data.size() / dim : 0; }
  std::span<const double> row(TokenId id) const { return {data.data() + id * dim, dim}; }
  std::span<double> row(TokenId id) { return {data.data() + id * dim, dim}; }
  double coverage() const {
    return found + missing ? static_cast<double>(found) / static_cast<double>(found + missing) : 0.0;
  }
};

enum class MissingRows { RandomUniform, Zero };

inline constexpr double kMissingInitBound = 0.1;

// Seeded table for when no vector file is supplied: every non-PAD row is
// uniform in [-0.1, 0.1].
AmplitudeTable random_amplitude_table(const Vocabulary& vocab, std::size_t dim, std::uint64_t seed);

// Reads `token v1 ... vd` lines. A leading word2vec `count dim` header is
// skipped. Vocab tokens absent from the file get uniform [-0.1, 0.1] rows
// drawn in id order (or zeros); the PAD row is always zero.
AmplitudeTable load_amplitude_table(const std::filesystem::path& path, const Vocabulary& vocab,
                                    std::size_t dim, std::uint64_t seed = 7,
                                    MissingRows missing = MissingRows::RandomUniform);

class PhaseLexicon {
 public:
  double score(std::string_view token) const;
  bool contains(std::string_view token) const;
  std::size_t size() const { return scores_.size(); }
  double default_score() const { return default_score_; }

  void set(std::string token, double score);

 private:
  std::unordered_map<std::string, double> scores_;
  double default_score_ = 0.0;
};

enum class LexiconAggregation { Mean };

// Reads `token pos_score neg_score` lines (one per synset, `#` comments and
// blank lines allowed). The stored polarity is the mean of pos - neg.
PhaseLexicon load_phase_lexicon(const std::filesystem::path& path,
                                LexiconAggregation aggregation = LexiconAggregation::Mean);

}  // namespace qitsa
