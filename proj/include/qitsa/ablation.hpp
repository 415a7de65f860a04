#pragma once

// Ablation harness: trains one model per (row, dataset), keeps the best test
// accuracy of each run and ranks the rows per dataset.

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "qitsa/corpus.hpp"
#include "qitsa/model.hpp"
#include "qitsa/train.hpp"

namespace qitsa::ablation {

enum class Suite { Embedding, Reduction, Fusion };

std::string_view to_string(Suite s);
Suite parse_suite(std::string_view text);

// One dataset with everything a row might need. The vector tables must be
// aligned to `vocab` and have the model dimension.
struct DatasetBundle {
  std::string label;
  Dataset data;  // already indexed with `vocab`
  Vocabulary vocab;
  std::optional<AmplitudeTable> glove;
  std::optional<AmplitudeTable> bert;
  const PhaseLexicon* lexicon = nullptr;
};

struct RowSpec {
  std::string label;
  ModelConfig model;
  bool needs_glove = false;
  bool needs_bert = false;
  bool needs_lexicon = false;
};

// Rows in the order they are reported. Reduction and fusion rows vary only
// that setting on top of `base`.
std::vector<RowSpec> suite_rows(Suite suite, const ModelConfig& base);

// Names the first asset `row` needs that `bundle` lacks; empty when none.
std::string missing_asset(const RowSpec& row, const DatasetBundle& bundle);

enum class TieRule {
  Min,      // tied rows share the best position: 1 + number of strictly better rows
  Average,  // tied rows share the mean of the positions they span
};

std::string_view to_string(TieRule rule);
TieRule parse_tie_rule(std::string_view text);

struct Ranking {
  std::vector<std::vector<std::optional<double>>> per_dataset;  // [row][dataset]
  std::vector<std::optional<double>> average;                   // over the datasets a row has
  std::vector<std::optional<std::size_t>> final_rank;           // competition rank of `average`
};

// `acc[row][dataset]`, higher is better; empty cells are left out.
Ranking compute_ranks(const std::vector<std::vector<std::optional<double>>>& acc, TieRule rule = TieRule::Min);

struct AblationReport {
  Suite suite = Suite::Fusion;
  std::uint64_t seed = 0;
  TieRule tie_rule = TieRule::Min;
  std::vector<std::string> datasets;
  std::vector<std::string> rows;
  std::vector<std::vector<std::optional<double>>> accuracy;  // best test accuracy in [0, 1]
  Ranking ranking;
  std::vector<std::string> notices;

  bool empty() const { return rows.empty(); }
  bool has_rank_columns() const { return suite != Suite::Fusion; }
};

struct AblationOptions {
  std::size_t jobs = 1;
  TieRule tie_rule = TieRule::Min;
  std::ostream* log = nullptr;
};

AblationReport run_ablation(Suite suite, std::span<const DatasetBundle> datasets, const train::TrainConfig& base,
                            const AblationOptions& options = {});

// Accuracies are written as percentages.
std::string to_csv(const AblationReport& report);
std::string to_text_table(const AblationReport& report);

}  // namespace qitsa::ablation
