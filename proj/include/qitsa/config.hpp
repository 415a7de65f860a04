#pragma once

// Flat key=value run configuration with per-key provenance.
//
// File format: one `key = value` per line, `#` starts a comment line, blank
// lines are ignored. Every key is listed in config_keys() with its default.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qitsa/ablation.hpp"
#include "qitsa/corpus.hpp"
#include "qitsa/error.hpp"
#include "qitsa/model.hpp"
#include "qitsa/train.hpp"

namespace qitsa::cli {

class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class Provenance { Default, Checkpoint, File, Flag };
std::string_view to_string(Provenance p);

enum class ValueType { String, Path, Bool, Count, Real, Choice, DatasetList };

struct KeySpec {
  std::string name;
  ValueType type;
  std::string default_value;
  std::vector<std::string> choices;  // for Choice
  std::string help;
};

const std::vector<KeySpec>& config_keys();
const KeySpec* find_key(std::string_view name);

class RunConfig {
 public:
  RunConfig();  // all defaults

  // Validates `value` against the key's type; throws ConfigError naming the key.
  void set(const std::string& key, const std::string& value, Provenance source);

  const std::string& get(const std::string& key) const;
  Provenance provenance(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::size_t get_count(const std::string& key) const;
  double get_real(const std::string& key) const;

  // Sorted `key=value` lines; parses back to the same values.
  std::string serialize() const;
  // Sorted `key = value  [provenance]` lines.
  std::string describe() const;

  ModelConfig model_config() const;
  train::TrainConfig train_config() const;

  std::vector<DatasetName> datasets() const;
  // Throws ConfigError when the dataset's path key is empty.
  std::filesystem::path dataset_path(DatasetName name) const;
  DatasetFormat dataset_format(const std::filesystem::path& path) const;
  std::optional<std::filesystem::path> optional_path(const std::string& key) const;

 private:
  struct Entry {
    std::string value;
    Provenance source = Provenance::Default;
  };
  std::map<std::string, Entry> entries_;
};

// Applies `key=value` lines from `text` on top of `base`. Unknown keys,
// malformed lines and repeated keys raise ConfigError.
RunConfig apply_config_text(RunConfig base, const std::string& text, const std::string& source_name,
                            Provenance source);

// Precedence, lowest first: defaults, `base` (e.g. a checkpoint's config),
// the file, the flags.
RunConfig parse_config(const std::optional<std::filesystem::path>& file,
                       const std::vector<std::pair<std::string, std::string>>& flags,
                       const RunConfig* base = nullptr);

}  // namespace qitsa::cli
