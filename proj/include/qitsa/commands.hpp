#pragma once

// Command implementations behind the `qitsa` executable.
//
// Every command reads a resolved RunConfig, writes its artifacts under
// `output_dir` and returns a process exit code. ConfigError propagates so
// the caller can report it as a usage error.

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "qitsa/ablation.hpp"
#include "qitsa/config.hpp"
#include "qitsa/corpus.hpp"
#include "qitsa/model.hpp"

namespace qitsa::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct LoadedData {
  Dataset data;
  Vocabulary vocab;
};

// Reads the dataset, builds the vocabulary from all splits (or uses `vocab`
// when given) and indexes every sentence.
LoadedData load_data(const RunConfig& cfg, DatasetName name, const Vocabulary* vocab = nullptr);

struct LoadedAssets {
  std::optional<AmplitudeTable> glove;
  std::optional<AmplitudeTable> bert;
  std::optional<PhaseLexicon> lexicon;

  ModelAssets view() const;
};

LoadedAssets load_assets(const RunConfig& cfg, const Vocabulary& vocab);

// Writes checkpoint.bin, curves.csv (plus SVGs when `svg`) and metrics.json.
int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err);

// Evaluates every split of the configured dataset; writes eval_metrics.json.
int cmd_eval(const RunConfig& cfg, const Checkpoint& ckpt, std::ostream& out, std::ostream& err);

// Writes ablation_<suite>.csv and ablation_<suite>.txt. Returns kExitFailure
// when no row could run.
int cmd_ablate(const RunConfig& cfg, ablation::Suite suite, std::ostream& out, std::ostream& err);

enum class VizStage { Inputs, PostFeatext, PostQembed };
std::string_view to_string(VizStage s);
VizStage parse_viz_stage(std::string_view text);

// Writes output_dir/viz_<stage>/{real,imag,phase_scores}.csv, and for
// post_qembed also density_real.csv, density_imag.csv and weights.csv.
// Post-* stages need `ckpt`; the inputs stage without one builds the model
// from `cfg` over a vocabulary of the sentence's own tokens.
int cmd_export_viz(const RunConfig& cfg, const std::string& sentence, VizStage stage, const Checkpoint* ckpt,
                   std::ostream& out, std::ostream& err);

// The whole command line: `qitsa <train|eval|ablate|export-viz> [options]`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace qitsa::cli
