#include "qitsa/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "qitsa/error.hpp"
#include "qitsa/rng.hpp"

namespace qitsa {

namespace {

std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool parse_double(std::string_view text, double& out) {
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && std::isfinite(out);
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

}  // namespace

std::string_view to_string(DatasetName name) {
  switch (name) {
    case DatasetName::MR: return "MR";
    case DatasetName::SST: return "SST";
    case DatasetName::SUBJ: return "SUBJ";
    case DatasetName::CR: return "CR";
    case DatasetName::MPQA: return "MPQA";
    case DatasetName::Custom: return "custom";
  }
  return "custom";
}

DatasetName parse_dataset_name(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "mr") return DatasetName::MR;
  if (lower == "sst") return DatasetName::SST;
  if (lower == "subj") return DatasetName::SUBJ;
  if (lower == "cr") return DatasetName::CR;
  if (lower == "mpqa") return DatasetName::MPQA;
  if (lower == "custom") return DatasetName::Custom;
  throw Error("unknown dataset name '" + std::string(text) + "'");
}

LabelSemantics label_semantics(DatasetName name) {
  return name == DatasetName::SUBJ ? LabelSemantics::SubjObj : LabelSemantics::PosNeg;
}

std::optional<SplitSizes> canonical_split_sizes(DatasetName name) {
  switch (name) {
    case DatasetName::MR: return SplitSizes{8530, 1065, 1067};
    case DatasetName::SST: return SplitSizes{67349, 872, 1821};
    case DatasetName::SUBJ: return SplitSizes{8000, 1000, 1000};
    case DatasetName::CR: return SplitSizes{3024, 364, 384};
    case DatasetName::MPQA: return SplitSizes{8496, 1035, 1072};
    case DatasetName::Custom: return std::nullopt;
  }
  return std::nullopt;
}

std::vector<std::vector<std::string>> Dataset::all_words() const {
  std::vector<std::vector<std::string>> out;
  out.reserve(train.size() + validation.size() + test.size());
  for (const auto* split : {&train, &validation, &test})
    for (const auto& s : *split) out.push_back(s.words);
  return out;
}

void Dataset::index(const Vocabulary& vocab, std::size_t max_len) {
  if (max_len == 0) throw Error("max_len must be positive");
  for (auto* split : {&train, &validation, &test}) {
    for (auto& s : *split) {
      s.tokens = vocab.encode(s.words);
      if (s.tokens.size() > max_len) s.tokens.resize(max_len);
    }
  }
}

std::string Dataset::canonical_mismatch() const {
  auto expected = canonical_split_sizes(name);
  if (!expected) return {};
  SplitSizes got = sizes();
  if (got == *expected) return {};
  std::ostringstream os;
  os << to_string(name) << " split sizes " << got.train << "/" << got.validation << "/" << got.test
     << " differ from canonical " << expected->train << "/" << expected->validation << "/"
     << expected->test;
  return os.str();
}

std::vector<std::string> tokenize(std::string_view raw_text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char ch : raw_text) {
    auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      tokens.emplace_back(1, ch);
    } else {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return tokens;
}

std::vector<LabeledSentence> read_labeled_file(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  std::vector<LabeledSentence> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim_cr(line);
    if (view.empty()) continue;
    auto tab = view.find('\t');
    if (tab == std::string_view::npos)
      throw ParseError(path.string(), line_no, "expected label<TAB>text");
    std::string_view label_text = view.substr(0, tab);
    int label = -1;
    auto [ptr, ec] = std::from_chars(label_text.data(), label_text.data() + label_text.size(), label);
    if (ec != std::errc() || ptr != label_text.data() + label_text.size())
      throw ParseError(path.string(), line_no, "label '" + std::string(label_text) + "' is not an integer");
    if (label != 0 && label != 1)
      throw ParseError(path.string(), line_no, "label " + std::to_string(label) + " outside {0,1}");
    LabeledSentence s;
    s.raw_text = std::string(view.substr(tab + 1));
    s.words = tokenize(s.raw_text);
    if (s.words.empty()) throw ParseError(path.string(), line_no, "sentence has no tokens");
    s.label = label;
    out.push_back(std::move(s));
  }
  if (out.empty()) throw ParseError(path.string(), 0, "no records");
  return out;
}

Dataset load_dataset(const std::filesystem::path& path, DatasetName name, DatasetFormat format,
                     std::uint64_t split_seed) {
  Dataset ds;
  ds.name = name;
  ds.semantics = label_semantics(name);
  if (format == DatasetFormat::Presplit) {
    ds.train = read_labeled_file(path / "train.tsv");
    ds.validation = read_labeled_file(path / "validation.tsv");
    ds.test = read_labeled_file(path / "test.tsv");
    return ds;
  }
  auto records = read_labeled_file(path);
  Rng rng(split_seed);
  rng.shuffle(records);
  const std::size_t n = records.size();
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_val = n / 10;
  auto begin = std::make_move_iterator(records.begin());
  ds.train.assign(begin, begin + static_cast<std::ptrdiff_t>(n_train));
  ds.validation.assign(begin + static_cast<std::ptrdiff_t>(n_train),
                       begin + static_cast<std::ptrdiff_t>(n_train + n_val));
  ds.test.assign(begin + static_cast<std::ptrdiff_t>(n_train + n_val),
                 std::make_move_iterator(records.end()));
  return ds;
}

Vocabulary::Vocabulary() {
  push(std::string(kPadToken));
  push(std::string(kUnkToken));
}

void Vocabulary::push(std::string token) {
  auto id = static_cast<TokenId>(id_to_token_.size());
  if (!token_to_id_.emplace(token, id).second) throw Error("duplicate vocabulary token '" + token + "'");
  id_to_token_.push_back(std::move(token));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> id_to_token) {
  if (id_to_token.size() < 2 || id_to_token[0] != kPadToken || id_to_token[1] != kUnkToken)
    throw Error("vocabulary must start with the PAD and UNK tokens");
  Vocabulary v;
  for (std::size_t i = 2; i < id_to_token.size(); ++i) v.push(std::move(id_to_token[i]));
  return v;
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return token_to_id_.contains(std::string(token));
}

std::vector<TokenId> Vocabulary::encode(std::span<const std::string> words) const {
  std::vector<TokenId> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(id(w));
  return ids;
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& sentences, std::size_t min_count) {
  if (min_count < 1) throw Error("min_count must be at least 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& s : sentences)
    for (const auto& w : s) ++counts[w];
  if (counts.empty()) throw Error("cannot build a vocabulary from an empty corpus");
  std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  for (auto& [token, count] : ordered)
    if (count >= min_count && token != Vocabulary::kPadToken && token != Vocabulary::kUnkToken)
      vocab.push(token);
  return vocab;
}

AmplitudeTable random_amplitude_table(const Vocabulary& vocab, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw Error("embedding dimension must be positive");
  AmplitudeTable table;
  table.dim = dim;
  table.data.assign(vocab.size() * dim, 0.0);
  Rng rng(seed);
  for (TokenId id = 1; id < vocab.size(); ++id)
    for (double& x : table.row(id)) x = rng.uniform(-kMissingInitBound, kMissingInitBound);
  table.missing = vocab.size() - 2;
  return table;
}

AmplitudeTable load_amplitude_table(const std::filesystem::path& path, const Vocabulary& vocab,
                                    std::size_t dim, std::uint64_t seed, MissingRows missing) {
  if (dim == 0) throw Error("embedding dimension must be positive");
  auto in = open_or_throw(path);
  AmplitudeTable table;
  table.dim = dim;
  table.data.assign(vocab.size() * dim, 0.0);
  std::vector<bool> seen(vocab.size(), false);

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim_cr(line);
    auto fields = split_ws(view);
    if (fields.empty()) continue;
    if (line_no == 1 && fields.size() == 2 && dim != 1) {
      std::size_t a = 0, b = 0;
      auto r1 = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), a);
      auto r2 = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), b);
      if (r1.ec == std::errc() && r2.ec == std::errc()) continue;  // word2vec header
    }
    if (fields.size() != dim + 1)
      throw ParseError(path.string(), line_no,
                       "expected " + std::to_string(dim) + " values, found " + std::to_string(fields.size() - 1));
    std::string token(fields[0]);
    auto it = vocab.contains(token) ? vocab.id(token) : kPadId;
    if (it == kPadId || seen[it]) continue;  // first occurrence wins
    auto row = table.row(it);
    for (std::size_t k = 0; k < dim; ++k)
      if (!parse_double(fields[k + 1], row[k]))
        throw ParseError(path.string(), line_no, "bad value '" + std::string(fields[k + 1]) + "'");
    seen[it] = true;
  }

  Rng rng(seed);
  for (TokenId id = 1; id < vocab.size(); ++id) {
    if (seen[id]) {
      if (id != kUnkId) ++table.found;
      continue;
    }
    if (id != kUnkId) ++table.missing;
    if (missing == MissingRows::RandomUniform)
      for (double& x : table.row(id)) x = rng.uniform(-kMissingInitBound, kMissingInitBound);
  }
  return table;
}

double PhaseLexicon::score(std::string_view token) const {
  auto it = scores_.find(std::string(token));
  return it == scores_.end() ? default_score_ : it->second;
}

bool PhaseLexicon::contains(std::string_view token) const {
  return scores_.contains(std::string(token));
}

void PhaseLexicon::set(std::string token, double score) {
  if (!(score >= -1.0 && score <= 1.0)) throw Error("polarity score outside [-1, 1] for '" + token + "'");
  scores_[std::move(token)] = score;
}

PhaseLexicon load_phase_lexicon(const std::filesystem::path& path, LexiconAggregation) {
  auto in = open_or_throw(path);
  // Sorted so the summation order (and therefore every bit of the mean) is
  // independent of line order within a token.
  std::unordered_map<std::string, std::vector<double>> diffs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim_cr(line);
    auto fields = split_ws(view);
    if (fields.empty() || fields[0].front() == '#') continue;
    if (fields.size() != 3) throw ParseError(path.string(), line_no, "expected 'token pos_score neg_score'");
    double pos = 0, neg = 0;
    if (!parse_double(fields[1], pos) || !parse_double(fields[2], neg))
      throw ParseError(path.string(), line_no, "scores must be numbers");
    if (pos < 0.0 || pos > 1.0 || neg < 0.0 || neg > 1.0)
      throw ParseError(path.string(), line_no, "scores must lie in [0, 1]");
    diffs[std::string(fields[0])].push_back(pos - neg);
  }
  PhaseLexicon lexicon;
  for (auto& [token, values] : diffs) {
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    lexicon.set(token, std::clamp(sum / static_cast<double>(values.size()), -1.0, 1.0));
  }
  return lexicon;
}

}  // namespace qitsa
