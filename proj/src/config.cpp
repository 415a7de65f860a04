#include "qitsa/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace qitsa::cli {

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Default: return "default";
    case Provenance::Checkpoint: return "checkpoint";
    case Provenance::File: return "file";
    case Provenance::Flag: return "flag";
  }
  return "default";
}

const std::vector<KeySpec>& config_keys() {
  using T = ValueType;
  static const std::vector<KeySpec> keys = {
      {"dataset", T::DatasetList, "custom", {}, "comma-separated datasets: mr, sst, subj, cr, mpqa, custom"},
      {"mr_path", T::Path, "", {}, "MR data (tsv file or presplit directory)"},
      {"sst_path", T::Path, "", {}, "SST data"},
      {"subj_path", T::Path, "", {}, "SUBJ data"},
      {"cr_path", T::Path, "", {}, "CR data"},
      {"mpqa_path", T::Path, "", {}, "MPQA data"},
      {"custom_path", T::Path, "", {}, "custom data"},
      {"data_format", T::Choice, "auto", {"auto", "tsv", "presplit"}, "auto: directory means presplit"},
      {"split_seed", T::Count, "7", {}, "shuffle seed for splitting single-file data"},
      {"amplitude_path", T::Path, "", {}, "GloVe-style word vectors"},
      {"bert_path", T::Path, "", {}, "precomputed per-token vectors"},
      {"lexicon_path", T::Path, "", {}, "polarity lexicon: token pos neg"},
      {"amplitude_source", T::Choice, "embedding_table", {"embedding_table", "precomputed_file"}, ""},
      {"phase_source", T::Choice, "sentiment", {"sentiment", "embedding_table", "precomputed_file"}, ""},
      {"trainable_amplitude", T::Bool, "true", {}, "update the amplitude table during training"},
      {"normalize_words", T::Bool, "false", {}, "scale each complex word vector to unit norm"},
      {"dim", T::Count, "100", {}, "embedding dimension"},
      {"hidden_dim", T::Count, "0", {}, "LSTM hidden size, 0 means dim"},
      {"max_len", T::Count, "64", {}, "sentences are truncated to this many tokens"},
      {"min_count", T::Count, "1", {}, "minimum token frequency for the vocabulary"},
      {"fusion", T::Choice, "q_attention", {"q_attention", "mean"}, ""},
      {"reduction", T::Choice, "cnn_maxpool", {"cnn_maxpool", "maxpool", "cnn_diagonal", "diagonal"}, ""},
      {"kernels", T::Count, "8", {}, "convolution channels"},
      {"kernel_h", T::Count, "3", {}, ""},
      {"kernel_w", T::Count, "3", {}, ""},
      {"pool_h", T::Count, "2", {}, ""},
      {"pool_w", T::Count, "2", {}, ""},
      {"lr", T::Real, "0.001", {}, "AdamW learning rate"},
      {"beta1", T::Real, "0.9", {}, ""},
      {"beta2", T::Real, "0.999", {}, ""},
      {"adam_eps", T::Real, "1e-08", {}, ""},
      {"weight_decay", T::Real, "0.01", {}, "decoupled weight decay"},
      {"epochs", T::Count, "51", {}, ""},
      {"batch_size", T::Count, "16", {}, ""},
      {"seed", T::Count, "1", {}, "initialisation and shuffling seed"},
      {"output_dir", T::Path, "runs/qitsa", {}, "where artifacts are written"},
      {"svg", T::Bool, "false", {}, "also write SVG training curves"},
      {"jobs", T::Count, "1", {}, "parallel ablation runs"},
      {"tie_rule", T::Choice, "min", {"min", "average"}, "rank ties in ablation reports"},
  };
  return keys;
}

const KeySpec* find_key(std::string_view name) {
  for (const auto& k : config_keys())
    if (k.name == name) return &k;
  return nullptr;
}

namespace {

const std::set<std::string> kPositiveCounts = {"dim",    "max_len", "min_count", "kernels",    "kernel_h", "kernel_w",
                                               "pool_h", "pool_w",  "epochs",    "batch_size", "jobs"};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::optional<std::uint64_t> parse_count(const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (v.empty() || ec != std::errc() || ptr != end) return std::nullopt;
  return out;
}

std::optional<double> parse_real(const std::string& v) {
  if (v.empty()) return std::nullopt;
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || !std::isfinite(out)) return std::nullopt;
  return out;
}

std::optional<bool> parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  return std::nullopt;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

[[noreturn]] void type_error(const std::string& key, const std::string& value, const std::string& expected) {
  throw ConfigError("config key '" + key + "': expected " + expected + ", got '" + value + "'");
}

std::string validate(const KeySpec& spec, const std::string& raw) {
  const std::string value = trim(raw);
  switch (spec.type) {
    case ValueType::String:
    case ValueType::Path: return value;
    case ValueType::Bool:
      if (!parse_bool(value)) type_error(spec.name, value, "true or false");
      return value;
    case ValueType::Count: {
      const auto n = parse_count(value);
      if (!n) type_error(spec.name, value, "a non-negative integer");
      if (kPositiveCounts.count(spec.name) && *n == 0) type_error(spec.name, value, "a positive integer");
      return value;
    }
    case ValueType::Real: {
      const auto x = parse_real(value);
      if (!x) type_error(spec.name, value, "a finite number");
      if ((spec.name == "lr" || spec.name == "weight_decay") && *x < 0) type_error(spec.name, value, "a value >= 0");
      if ((spec.name == "beta1" || spec.name == "beta2") && (*x < 0 || *x >= 1))
        type_error(spec.name, value, "a value in [0, 1)");
      if (spec.name == "adam_eps" && *x <= 0) type_error(spec.name, value, "a positive value");
      return value;
    }
    case ValueType::Choice: {
      if (std::find(spec.choices.begin(), spec.choices.end(), value) == spec.choices.end()) {
        std::string expected = "one of";
        for (const auto& c : spec.choices) expected += " " + c;
        type_error(spec.name, value, expected);
      }
      return value;
    }
    case ValueType::DatasetList: {
      std::string normalized;
      std::set<DatasetName> seen;
      for (const auto& item : split_list(value)) {
        DatasetName name;
        try {
          name = parse_dataset_name(item);
        } catch (const Error&) {
          type_error(spec.name, value, "dataset names from mr, sst, subj, cr, mpqa, custom");
        }
        if (!seen.insert(name).second) type_error(spec.name, value, "each dataset at most once");
        std::string lower(to_string(name));
        std::transform(lower.begin(), lower.end(), lower.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        normalized += (normalized.empty() ? "" : ",") + lower;
      }
      if (normalized.empty()) type_error(spec.name, value, "at least one dataset");
      return normalized;
    }
  }
  return value;
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) entries_[k.name] = {k.default_value, Provenance::Default};
}

void RunConfig::set(const std::string& key, const std::string& value, Provenance source) {
  const KeySpec* spec = find_key(key);
  if (!spec) throw ConfigError("unknown config key '" + key + "'");
  entries_[key] = {validate(*spec, value), source};
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second.value;
}

Provenance RunConfig::provenance(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second.source;
}

bool RunConfig::get_bool(const std::string& key) const { return *parse_bool(get(key)); }
std::size_t RunConfig::get_count(const std::string& key) const { return *parse_count(get(key)); }
double RunConfig::get_real(const std::string& key) const { return *parse_real(get(key)); }

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& [k, e] : entries_) out += k + "=" + e.value + "\n";
  return out;
}

std::string RunConfig::describe() const {
  std::size_t width = 0;
  for (const auto& [k, e] : entries_) width = std::max(width, k.size());
  std::string out;
  for (const auto& [k, e] : entries_)
    out += k + std::string(width - k.size(), ' ') + " = " + e.value + "  [" + std::string(to_string(e.source)) +
           "]\n";
  return out;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.dim = get_count("dim");
  m.hidden_dim = get_count("hidden_dim");
  m.amplitude_source = parse_amplitude_source(get("amplitude_source"));
  m.phase_source = qembed::parse_phase_source(get("phase_source"));
  m.trainable_amplitude = get_bool("trainable_amplitude");
  m.normalize_words = get_bool("normalize_words");
  m.fusion = parse_fusion(get("fusion"));
  m.reduction.variant = head::parse_reduction(get("reduction"));
  m.reduction.kernels = get_count("kernels");
  m.reduction.kernel_h = get_count("kernel_h");
  m.reduction.kernel_w = get_count("kernel_w");
  m.reduction.pool_h = get_count("pool_h");
  m.reduction.pool_w = get_count("pool_w");
  m.seed = get_count("seed");
  return m;
}

train::TrainConfig RunConfig::train_config() const {
  train::TrainConfig t;
  t.optimizer.lr = get_real("lr");
  t.optimizer.beta1 = get_real("beta1");
  t.optimizer.beta2 = get_real("beta2");
  t.optimizer.eps = get_real("adam_eps");
  t.optimizer.weight_decay = get_real("weight_decay");
  t.epochs = get_count("epochs");
  t.batch_size = get_count("batch_size");
  t.seed = get_count("seed");
  t.model = model_config();
  return t;
}

std::vector<DatasetName> RunConfig::datasets() const {
  std::vector<DatasetName> out;
  for (const auto& item : split_list(get("dataset"))) out.push_back(parse_dataset_name(item));
  return out;
}

std::filesystem::path RunConfig::dataset_path(DatasetName name) const {
  std::string key(to_string(name));
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  key += "_path";
  const std::string& value = get(key);
  if (value.empty()) throw ConfigError("dataset '" + std::string(to_string(name)) + "' needs " + key);
  return value;
}

DatasetFormat RunConfig::dataset_format(const std::filesystem::path& path) const {
  const std::string& f = get("data_format");
  if (f == "tsv") return DatasetFormat::Tsv;
  if (f == "presplit") return DatasetFormat::Presplit;
  return std::filesystem::is_directory(path) ? DatasetFormat::Presplit : DatasetFormat::Tsv;
}

std::optional<std::filesystem::path> RunConfig::optional_path(const std::string& key) const {
  const std::string& value = get(key);
  if (value.empty()) return std::nullopt;
  return value;
}

RunConfig apply_config_text(RunConfig base, const std::string& text, const std::string& source_name,
                            Provenance source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    const std::string where = source_name + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected key=value");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError(where + "config key '" + key + "' given twice");
    try {
      base.set(key, t.substr(eq + 1), source);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return base;
}

RunConfig parse_config(const std::optional<std::filesystem::path>& file,
                       const std::vector<std::pair<std::string, std::string>>& flags, const RunConfig* base) {
  RunConfig cfg = base ? *base : RunConfig();
  if (file) {
    std::ifstream in(*file, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + file->string());
    std::stringstream ss;
    ss << in.rdbuf();
    cfg = apply_config_text(std::move(cfg), ss.str(), file->string(), Provenance::File);
  }
  for (const auto& [k, v] : flags) cfg.set(k, v, Provenance::Flag);
  return cfg;
}

}  // namespace qitsa::cli
