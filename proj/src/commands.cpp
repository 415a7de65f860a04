#include "qitsa/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>

#include "CLI11.hpp"
#include "json.hpp"
#include "qitsa/train.hpp"

namespace qitsa::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

ModelAssets LoadedAssets::view() const {
  ModelAssets a;
  a.word_vectors = glove ? &*glove : nullptr;
  a.precomputed = bert ? &*bert : nullptr;
  a.lexicon = lexicon ? &*lexicon : nullptr;
  return a;
}

LoadedData load_data(const RunConfig& cfg, DatasetName name, const Vocabulary* vocab) {
  const fs::path path = cfg.dataset_path(name);
  LoadedData out;
  out.data = load_dataset(path, name, cfg.dataset_format(path), cfg.get_count("split_seed"));
  out.vocab = vocab ? *vocab : build_vocab(out.data.all_words(), cfg.get_count("min_count"));
  out.data.index(out.vocab, cfg.get_count("max_len"));
  return out;
}

LoadedAssets load_assets(const RunConfig& cfg, const Vocabulary& vocab) {
  LoadedAssets a;
  const std::size_t dim = cfg.get_count("dim");
  const std::uint64_t seed = cfg.get_count("seed");
  if (auto p = cfg.optional_path("amplitude_path")) a.glove = load_amplitude_table(*p, vocab, dim, seed + 1);
  if (auto p = cfg.optional_path("bert_path"))
    a.bert = load_amplitude_table(*p, vocab, dim, seed + 1, MissingRows::Zero);
  if (auto p = cfg.optional_path("lexicon_path")) a.lexicon = load_phase_lexicon(*p);
  return a;
}

namespace {

DatasetName single_dataset(const RunConfig& cfg) {
  const auto names = cfg.datasets();
  if (names.size() != 1) throw ConfigError("this command takes exactly one dataset, got '" + cfg.get("dataset") + "'");
  return names.front();
}

ordered_json metrics_json(const train::Evaluation& e) {
  const auto& m = e.metrics;
  const auto& c = e.counts;
  return ordered_json{{"accuracy", m.accuracy},
                      {"recall", m.recall},
                      {"precision", m.precision},
                      {"f1", m.f1},
                      {"recall_undefined", m.recall_undefined},
                      {"precision_undefined", m.precision_undefined},
                      {"f1_undefined", m.f1_undefined},
                      {"tp", c.tp},
                      {"tn", c.tn},
                      {"fp", c.fp},
                      {"fn", c.fn}};
}

ordered_json config_json(const RunConfig& cfg) {
  ordered_json j = ordered_json::object();
  for (const auto& k : config_keys()) j[k.name] = cfg.get(k.name);
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
  if (!os) throw Error("failed writing " + path.string());
}

fs::path ensure_output_dir(const RunConfig& cfg) {
  const fs::path dir = cfg.get("output_dir");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

void print_metrics(std::ostream& out, const std::string& split, const train::Evaluation& e) {
  char buf[200];
  std::snprintf(buf, sizeof(buf), "%-10s acc %.4f  recall %.4f  precision %.4f  f1 %.4f  (n=%zu)", split.c_str(),
                e.metrics.accuracy, e.metrics.recall, e.metrics.precision, e.metrics.f1, e.counts.total());
  out << buf << "\n";
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const DatasetName name = single_dataset(cfg);
  out << "resolved config:\n" << cfg.describe();
  LoadedData loaded = load_data(cfg, name);
  if (auto note = loaded.data.canonical_mismatch(); !note.empty()) err << "warning: " << note << "\n";
  const auto sizes = loaded.data.sizes();
  out << "dataset " << to_string(name) << ": " << sizes.train << " train / " << sizes.validation << " validation / "
      << sizes.test << " test, vocabulary " << loaded.vocab.size() << "\n";
  LoadedAssets assets = load_assets(cfg, loaded.vocab);
  if (assets.glove)
    out << "word vectors cover " << assets.glove->found << " of " << assets.glove->found + assets.glove->missing
        << " tokens\n";

  const train::TrainConfig tcfg = cfg.train_config();
  QitsaModel model = build_model(tcfg.model, loaded.vocab, assets.view());
  const fs::path dir = ensure_output_dir(cfg);

  train::FitResult result;
  try {
    result = train::fit(model, loaded.data, tcfg, [&](const train::CurveRow& r) {
      char buf[200];
      std::snprintf(buf, sizeof(buf), "epoch %3zu  loss %.6f  train_acc %.4f  test_acc %.4f  test_f1 %.4f", r.epoch,
                    r.train_loss, r.train_acc, r.test_acc, r.test_f1);
      out << buf << "\n";
    });
  } catch (const train::TrainingError& e) {
    err << "training aborted: " << e.what() << "\n";
    return kExitFailure;
  }

  write_checkpoint(dir / "checkpoint.bin", make_checkpoint(model, cfg.serialize()));
  train::emit_curves(result.log, dir / "curves.csv", cfg.get_bool("svg"));

  ordered_json report{{"seed", tcfg.seed},
                      {"dataset", std::string(to_string(name))},
                      {"epochs", tcfg.epochs},
                      {"best_test_accuracy", result.best_test_accuracy},
                      {"best_epoch", result.best_epoch},
                      {"final_train_loss", result.log.rows.back().train_loss},
                      {"loss_trend_flag", result.loss_trend_flag},
                      {"train", metrics_json(result.final_train)},
                      {"test", metrics_json(result.final_test)},
                      {"config", config_json(cfg)}};
  if (!loaded.data.validation.empty())
    report["validation"] = metrics_json(train::evaluate(model, loaded.data.validation));
  write_text(dir / "metrics.json", report.dump(2) + "\n");

  print_metrics(out, "train", result.final_train);
  print_metrics(out, "test", result.final_test);
  char buf[120];
  std::snprintf(buf, sizeof(buf), "best test accuracy %.4f at epoch %zu\n", result.best_test_accuracy,
                result.best_epoch);
  out << buf;
  if (result.loss_trend_flag) err << "warning: smoothed training loss rose over a 10-epoch window after epoch 20\n";
  out << "artifacts written to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const Checkpoint& ckpt, std::ostream& out, std::ostream& err) {
  const DatasetName name = single_dataset(cfg);
  out << "resolved config:\n" << cfg.describe();
  QitsaModel model = model_from_checkpoint(cfg.model_config(), ckpt);
  LoadedData loaded = load_data(cfg, name, &model.vocab());
  if (auto note = loaded.data.canonical_mismatch(); !note.empty()) err << "warning: " << note << "\n";

  ordered_json report{{"seed", cfg.get_count("seed")}, {"dataset", std::string(to_string(name))}};
  const std::pair<const char*, const std::vector<LabeledSentence>*> splits[] = {
      {"train", &loaded.data.train}, {"validation", &loaded.data.validation}, {"test", &loaded.data.test}};
  for (const auto& [split, data] : splits) {
    if (data->empty()) continue;
    const auto e = train::evaluate(model, *data);
    print_metrics(out, split, e);
    report[split] = metrics_json(e);
  }
  const fs::path dir = ensure_output_dir(cfg);
  write_text(dir / "eval_metrics.json", report.dump(2) + "\n");
  return kExitOk;
}

int cmd_ablate(const RunConfig& cfg, ablation::Suite suite, std::ostream& out, std::ostream& err) {
  out << "resolved config:\n" << cfg.describe();
  std::vector<ablation::DatasetBundle> bundles;
  std::vector<std::optional<PhaseLexicon>> lexicons;
  lexicons.reserve(cfg.datasets().size());
  for (DatasetName name : cfg.datasets()) {
    LoadedData loaded = load_data(cfg, name);
    if (auto note = loaded.data.canonical_mismatch(); !note.empty()) err << "warning: " << note << "\n";
    LoadedAssets assets = load_assets(cfg, loaded.vocab);
    ablation::DatasetBundle b;
    b.label = std::string(to_string(name));
    b.data = std::move(loaded.data);
    b.vocab = std::move(loaded.vocab);
    b.glove = std::move(assets.glove);
    b.bert = std::move(assets.bert);
    lexicons.push_back(std::move(assets.lexicon));
    bundles.push_back(std::move(b));
  }
  for (std::size_t i = 0; i < bundles.size(); ++i) bundles[i].lexicon = lexicons[i] ? &*lexicons[i] : nullptr;

  ablation::AblationOptions options;
  options.jobs = cfg.get_count("jobs");
  options.tie_rule = ablation::parse_tie_rule(cfg.get("tie_rule"));
  options.log = &out;
  const auto report = ablation::run_ablation(suite, bundles, cfg.train_config(), options);

  const fs::path dir = ensure_output_dir(cfg);
  const std::string stem = "ablation_" + std::string(ablation::to_string(suite));
  write_text(dir / (stem + ".csv"), ablation::to_csv(report));
  const std::string table = ablation::to_text_table(report);
  write_text(dir / (stem + ".txt"), table);
  out << table;
  if (report.empty()) {
    err << "no ablation row could run: every row is missing an asset\n";
    return kExitFailure;
  }
  return kExitOk;
}

std::string_view to_string(VizStage s) {
  switch (s) {
    case VizStage::Inputs: return "inputs";
    case VizStage::PostFeatext: return "post_featext";
    case VizStage::PostQembed: return "post_qembed";
  }
  return "inputs";
}

VizStage parse_viz_stage(std::string_view text) {
  if (text == "inputs") return VizStage::Inputs;
  if (text == "post_featext") return VizStage::PostFeatext;
  if (text == "post_qembed") return VizStage::PostQembed;
  throw ConfigError("unknown stage '" + std::string(text) + "' (expected inputs, post_featext or post_qembed)");
}

namespace {

void write_matrix(const fs::path& path, const std::vector<std::string>& labels, const std::string& label_header,
                  const ad::Array& m) {
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  std::string text = label_header;
  for (std::size_t c = 0; c < cols; ++c) text += ",d" + std::to_string(c);
  text += "\n";
  for (std::size_t r = 0; r < rows; ++r) {
    text += csv_field(labels[r]);
    for (std::size_t c = 0; c < cols; ++c) text += "," + fmt17(m.at(r, c));
    text += "\n";
  }
  write_text(path, text);
}

}  // namespace

int cmd_export_viz(const RunConfig& cfg, const std::string& sentence, VizStage stage, const Checkpoint* ckpt,
                   std::ostream& out, std::ostream& err) {
  if (stage != VizStage::Inputs && !ckpt)
    throw Error("stage " + std::string(to_string(stage)) + " needs a trained checkpoint (--checkpoint)");
  const auto words = tokenize(sentence);
  if (words.empty()) throw ConfigError("--sentence has no tokens");

  std::optional<QitsaModel> model;
  if (ckpt) {
    model.emplace(model_from_checkpoint(cfg.model_config(), *ckpt));
  } else {
    Vocabulary vocab = build_vocab({words});
    LoadedAssets assets = load_assets(cfg, vocab);
    model.emplace(build_model(cfg.model_config(), vocab, assets.view()));
  }
  const Vocabulary& vocab = model->vocab();
  std::vector<TokenId> ids = vocab.encode(words);
  if (ids.size() > cfg.get_count("max_len")) ids.resize(cfg.get_count("max_len"));
  if (std::all_of(ids.begin(), ids.end(), [](TokenId id) { return id == kUnkId; }))
    err << "warning: no token of the sentence is in the vocabulary; every row is the unknown-token row\n";

  ad::NoGradGuard no_grad;
  const ForwardTrace trace = model->forward(ids);
  std::vector<std::string> labels(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(ids.size()));

  const fs::path dir = ensure_output_dir(cfg) / ("viz_" + std::string(to_string(stage)));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());

  const std::size_t n = ids.size();
  const std::size_t d = model->config().dim;
  switch (stage) {
    case VizStage::Inputs:
      write_matrix(dir / "real.csv", labels, "token", trace.inputs.re.value());
      write_matrix(dir / "imag.csv", labels, "token", trace.inputs.im.value());
      break;
    case VizStage::PostFeatext:
      write_matrix(dir / "real.csv", labels, "token", trace.features.re.value());
      write_matrix(dir / "imag.csv", labels, "token", trace.features.im.value());
      break;
    case VizStage::PostQembed: {
      // Row j is word j's weighted contribution to the diagonal of the
      // sentence density matrix.
      ad::Array re({n, d}), im({n, d});
      const auto& ar = trace.alpha_real.value();
      const auto& ai = trace.alpha_imag.value();
      for (std::size_t j = 0; j < n; ++j) {
        const auto& wr = trace.words[j].real.value();
        const auto& wi = trace.words[j].imag.value();
        for (std::size_t k = 0; k < d; ++k) {
          re.at(j, k) = ar.data()[j] * wr.at(k, k);
          im.at(j, k) = ai.data()[j] * wi.at(k, k);
        }
      }
      write_matrix(dir / "real.csv", labels, "token", re);
      write_matrix(dir / "imag.csv", labels, "token", im);
      std::vector<std::string> dims;
      for (std::size_t k = 0; k < d; ++k) dims.push_back("d" + std::to_string(k));
      write_matrix(dir / "density_real.csv", dims, "dim", trace.sentence.real.value());
      write_matrix(dir / "density_imag.csv", dims, "dim", trace.sentence.imag.value());
      std::string w = "token,alpha_real,alpha_imag\n";
      for (std::size_t j = 0; j < n; ++j)
        w += csv_field(labels[j]) + "," + fmt17(ar.data()[j]) + "," + fmt17(ai.data()[j]) + "\n";
      write_text(dir / "weights.csv", w);
      break;
    }
  }

  // Mean of the token's phase row; for lexicon phases every entry is the
  // polarity score itself.
  const ad::Array& phase = model->phase_table().weights().value();
  std::string scores = "token,phase_score\n";
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += phase.at(ids[j], k);
    scores += csv_field(labels[j]) + "," + fmt17(s / static_cast<double>(d)) + "\n";
  }
  write_text(dir / "phase_scores.csv", scores);
  out << "# seed=" << cfg.get_count("seed") << "\nwrote " << to_string(stage) << " matrices (" << n << " tokens x "
      << d << " dims) to " << dir.string() << "\n";
  return kExitOk;
}

namespace {

struct KeyOptions {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::vector<std::string> sets;
  std::string config_file;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "key=value config file");
    app->add_option("--set", sets, "override as key=value (repeatable)");
    for (const auto& k : config_keys()) {
      std::string dashed = k.name;
      std::replace(dashed.begin(), dashed.end(), '_', '-');
      std::string names = "--" + dashed;
      if (dashed != k.name) names += ",--" + k.name;
      std::string help = k.help.empty() ? "" : k.help + " ";
      help += "(default: " + (k.default_value.empty() ? std::string("unset") : k.default_value) + ")";
      options[k.name] = app->add_option(names, values[k.name], help);
    }
  }

  std::vector<std::pair<std::string, std::string>> flags() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) out.emplace_back(key, values.at(key));
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    return out;
  }

  std::optional<fs::path> file() const {
    if (config_file.empty()) return std::nullopt;
    return fs::path(config_file);
  }
};

// Config for commands that start from a checkpoint: the checkpoint's stored
// config is the base, overlaid by the file and the flags.
RunConfig resolve_with_checkpoint(const KeyOptions& keys, const Checkpoint& ckpt) {
  RunConfig base = apply_config_text(RunConfig(), ckpt.config_text, "checkpoint", Provenance::Checkpoint);
  return parse_config(keys.file(), keys.flags(), &base);
}

fs::path checkpoint_path(const std::string& explicit_path, const KeyOptions& keys) {
  if (!explicit_path.empty()) return explicit_path;
  return fs::path(parse_config(keys.file(), keys.flags()).get("output_dir")) / "checkpoint.bin";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Complex-valued density-matrix sentiment classifier"};
  app.require_subcommand(1, 1);

  KeyOptions train_keys, eval_keys, ablate_keys, viz_keys;
  auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoint, curves and metrics");
  train_keys.attach(train_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on every split of the dataset");
  std::string eval_ckpt;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file (default: <output_dir>/checkpoint.bin)");
  eval_keys.attach(eval_cmd);

  auto* ablate_cmd = app.add_subcommand("ablate", "run an ablation suite and write its report");
  std::string suite;
  ablate_cmd->add_option("--suite", suite, "embedding, reduction or fusion")
      ->required()
      ->check(CLI::IsMember({"embedding", "reduction", "fusion"}));
  ablate_keys.attach(ablate_cmd);

  auto* viz_cmd = app.add_subcommand("export-viz", "export one sentence's matrices at a pipeline stage as CSV");
  std::string stage, sentence, viz_ckpt;
  viz_cmd->add_option("--stage", stage, "inputs, post_featext or post_qembed")
      ->required()
      ->check(CLI::IsMember({"inputs", "post_featext", "post_qembed"}));
  viz_cmd->add_option("--sentence", sentence, "raw sentence text")->required();
  viz_cmd->add_option("--checkpoint", viz_ckpt, "checkpoint file (default: <output_dir>/checkpoint.bin)");
  viz_keys.attach(viz_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(parse_config(train_keys.file(), train_keys.flags()), out, err);
    if (ablate_cmd->parsed())
      return cmd_ablate(parse_config(ablate_keys.file(), ablate_keys.flags()), ablation::parse_suite(suite), out, err);
    if (eval_cmd->parsed()) {
      const fs::path path = checkpoint_path(eval_ckpt, eval_keys);
      if (!fs::exists(path)) throw Error("missing checkpoint " + path.string());
      const Checkpoint ckpt = read_checkpoint(path);
      return cmd_eval(resolve_with_checkpoint(eval_keys, ckpt), ckpt, out, err);
    }
    if (viz_cmd->parsed()) {
      const VizStage s = parse_viz_stage(stage);
      const fs::path path = checkpoint_path(viz_ckpt, viz_keys);
      if (fs::exists(path)) {
        const Checkpoint ckpt = read_checkpoint(path);
        return cmd_export_viz(resolve_with_checkpoint(viz_keys, ckpt), sentence, s, &ckpt, out, err);
      }
      if (!viz_ckpt.empty() || s != VizStage::Inputs) throw Error("missing checkpoint " + path.string());
      return cmd_export_viz(parse_config(viz_keys.file(), viz_keys.flags()), sentence, s, nullptr, out, err);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace qitsa::cli
