#include "qitsa/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "qitsa/error.hpp"

namespace qitsa::ablation {

std::string_view to_string(Suite s) {
  switch (s) {
    case Suite::Embedding: return "embedding";
    case Suite::Reduction: return "reduction";
    case Suite::Fusion: return "fusion";
  }
  return "fusion";
}

Suite parse_suite(std::string_view text) {
  if (text == "embedding") return Suite::Embedding;
  if (text == "reduction") return Suite::Reduction;
  if (text == "fusion") return Suite::Fusion;
  throw Error("unknown ablation suite '" + std::string(text) + "' (expected embedding, reduction or fusion)");
}

std::string_view to_string(TieRule rule) { return rule == TieRule::Min ? "min" : "average"; }

TieRule parse_tie_rule(std::string_view text) {
  if (text == "min") return TieRule::Min;
  if (text == "average") return TieRule::Average;
  throw Error("unknown tie rule '" + std::string(text) + "' (expected min or average)");
}

namespace {

void mark_sources(RowSpec& row) {
  const auto& m = row.model;
  row.needs_bert = m.amplitude_source == AmplitudeSource::PrecomputedFile ||
                   m.phase_source == qembed::PhaseSource::PrecomputedFile;
  row.needs_lexicon = m.phase_source == qembed::PhaseSource::Sentiment;
}

}  // namespace

std::vector<RowSpec> suite_rows(Suite suite, const ModelConfig& base) {
  std::vector<RowSpec> rows;
  switch (suite) {
    case Suite::Embedding: {
      enum class Src { Word, Bert, Sentiment };
      const std::pair<Src, Src> combos[] = {{Src::Word, Src::Bert}, {Src::Word, Src::Word},
                                            {Src::Word, Src::Sentiment}, {Src::Bert, Src::Word},
                                            {Src::Bert, Src::Bert}, {Src::Bert, Src::Sentiment}};
      auto name = [](Src s) -> std::string {
        return s == Src::Word ? "Word_Embedding" : s == Src::Bert ? "BERT" : "Sentiment";
      };
      for (auto [amp, phase] : combos) {
        RowSpec row{name(amp) + " + " + name(phase), base};
        row.model.amplitude_source =
            amp == Src::Bert ? AmplitudeSource::PrecomputedFile : AmplitudeSource::EmbeddingTable;
        row.model.phase_source = phase == Src::Bert   ? qembed::PhaseSource::PrecomputedFile
                                 : phase == Src::Word ? qembed::PhaseSource::EmbeddingTable
                                                      : qembed::PhaseSource::Sentiment;
        mark_sources(row);
        row.needs_glove = amp == Src::Word || phase == Src::Word;
        rows.push_back(std::move(row));
      }
      break;
    }
    case Suite::Reduction:
      for (auto variant : {head::Reduction::CnnMaxPool, head::Reduction::MaxPool, head::Reduction::CnnDiagonal,
                           head::Reduction::Diagonal}) {
        RowSpec row{std::string(head::display_name(variant)), base};
        row.model.reduction.variant = variant;
        mark_sources(row);
        rows.push_back(std::move(row));
      }
      break;
    case Suite::Fusion:
      for (auto fusion : {Fusion::QAttention, Fusion::Mean}) {
        RowSpec row{fusion == Fusion::QAttention ? "Q-Attention" : "Mean", base};
        row.model.fusion = fusion;
        mark_sources(row);
        rows.push_back(std::move(row));
      }
      break;
  }
  return rows;
}

std::string missing_asset(const RowSpec& row, const DatasetBundle& bundle) {
  if (row.needs_glove && !bundle.glove) return "word vectors (amplitude_path)";
  if (row.needs_bert && !bundle.bert) return "precomputed vectors (bert_path)";
  if (row.needs_lexicon && !bundle.lexicon) return "polarity lexicon (lexicon_path)";
  return {};
}

Ranking compute_ranks(const std::vector<std::vector<std::optional<double>>>& acc, TieRule rule) {
  const std::size_t n_rows = acc.size();
  std::size_t n_data = 0;
  for (const auto& r : acc) n_data = std::max(n_data, r.size());
  Ranking out;
  out.per_dataset.assign(n_rows, std::vector<std::optional<double>>(n_data));
  for (std::size_t d = 0; d < n_data; ++d) {
    auto cell = [&](std::size_t r) -> std::optional<double> {
      return d < acc[r].size() ? acc[r][d] : std::nullopt;
    };
    for (std::size_t r = 0; r < n_rows; ++r) {
      const auto v = cell(r);
      if (!v) continue;
      std::size_t better = 0, equal = 0;
      for (std::size_t o = 0; o < n_rows; ++o) {
        const auto w = cell(o);
        if (!w) continue;
        if (*w > *v) ++better;
        else if (*w == *v) ++equal;
      }
      double rank = 1.0 + static_cast<double>(better);
      if (rule == TieRule::Average) rank += static_cast<double>(equal - 1) / 2.0;
      out.per_dataset[r][d] = rank;
    }
  }
  out.average.resize(n_rows);
  for (std::size_t r = 0; r < n_rows; ++r) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& v : out.per_dataset[r])
      if (v) {
        sum += *v;
        ++count;
      }
    if (count) out.average[r] = sum / static_cast<double>(count);
  }
  out.final_rank.resize(n_rows);
  constexpr double kTol = 1e-9;
  for (std::size_t r = 0; r < n_rows; ++r) {
    if (!out.average[r]) continue;
    std::size_t better = 0;
    for (std::size_t o = 0; o < n_rows; ++o)
      if (out.average[o] && *out.average[o] < *out.average[r] - kTol) ++better;
    out.final_rank[r] = better + 1;
  }
  return out;
}

AblationReport run_ablation(Suite suite, std::span<const DatasetBundle> datasets, const train::TrainConfig& base,
                            const AblationOptions& options) {
  AblationReport report;
  report.suite = suite;
  report.seed = base.seed;
  report.tie_rule = options.tie_rule;
  for (const auto& b : datasets) report.datasets.push_back(b.label);

  const auto rows = suite_rows(suite, base.model);
  struct Item {
    std::size_t row, data;
  };
  std::vector<Item> items;
  std::vector<std::vector<std::optional<double>>> acc(rows.size(),
                                                      std::vector<std::optional<double>>(datasets.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t d = 0; d < datasets.size(); ++d) {
      const std::string missing = missing_asset(rows[r], datasets[d]);
      if (missing.empty()) {
        items.push_back({r, d});
      } else {
        report.notices.push_back("skipped row '" + rows[r].label + "' on " + datasets[d].label + ": missing " +
                                 missing);
      }
    }

  std::mutex log_mutex;
  auto log = [&](const std::string& line) {
    if (!options.log) return;
    std::lock_guard lock(log_mutex);
    *options.log << line << "\n";
  };
  for (const auto& n : report.notices) log(n);

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(items.size());
  auto worker = [&] {
    for (std::size_t k = next++; k < items.size(); k = next++) {
      const auto [r, d] = items[k];
      try {
        const auto& bundle = datasets[d];
        train::TrainConfig cfg = base;
        cfg.model = rows[r].model;
        ModelAssets assets;
        assets.word_vectors = bundle.glove ? &*bundle.glove : nullptr;
        assets.precomputed = bundle.bert ? &*bundle.bert : nullptr;
        assets.lexicon = bundle.lexicon;
        QitsaModel model = build_model(cfg.model, bundle.vocab, assets);
        const auto result = train::fit(model, bundle.data, cfg);
        acc[r][d] = result.best_test_accuracy;
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s on %s: best test accuracy %.2f (epoch %zu)", rows[r].label.c_str(),
                      bundle.label.c_str(), 100.0 * result.best_test_accuracy, result.best_epoch);
        log(buf);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, items.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (std::none_of(acc[r].begin(), acc[r].end(), [](const auto& v) { return v.has_value(); })) continue;
    report.rows.push_back(rows[r].label);
    report.accuracy.push_back(acc[r]);
  }
  report.ranking = compute_ranks(report.accuracy, options.tie_rule);
  return report;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string to_csv(const AblationReport& report) {
  std::ostringstream os;
  os << "# seed=" << report.seed << " suite=" << to_string(report.suite) << " tie_rule=" << to_string(report.tie_rule)
     << "\n";
  os << "row";
  for (const auto& d : report.datasets) os << "," << csv_field(d);
  if (report.has_rank_columns()) os << ",avg_rank,final_rank";
  os << "\n";
  for (std::size_t r = 0; r < report.rows.size(); ++r) {
    os << csv_field(report.rows[r]);
    for (const auto& v : report.accuracy[r]) os << "," << (v ? fixed(100.0 * *v, 4) : "");
    if (report.has_rank_columns()) {
      const auto& avg = report.ranking.average[r];
      const auto& fin = report.ranking.final_rank[r];
      os << "," << (avg ? fixed(*avg, 4) : "") << "," << (fin ? std::to_string(*fin) : "");
    }
    os << "\n";
  }
  return os.str();
}

std::string to_text_table(const AblationReport& report) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"Model"};
  for (const auto& d : report.datasets) header.push_back(d);
  if (report.has_rank_columns()) {
    header.push_back("Avg. Rank");
    header.push_back("Final Rank");
  }
  cells.push_back(header);
  for (std::size_t r = 0; r < report.rows.size(); ++r) {
    std::vector<std::string> line{report.rows[r]};
    for (const auto& v : report.accuracy[r]) line.push_back(v ? fixed(100.0 * *v, 2) : "-");
    if (report.has_rank_columns()) {
      const auto& avg = report.ranking.average[r];
      const auto& fin = report.ranking.final_rank[r];
      line.push_back(avg ? fixed(*avg, 2) : "-");
      line.push_back(fin ? std::to_string(*fin) : "-");
    }
    cells.push_back(line);
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells)
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());

  std::ostringstream os;
  os << "# seed=" << report.seed << " suite=" << to_string(report.suite) << "\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t c = 0; c < cells[i].size(); ++c) {
      const std::string& s = cells[i][c];
      if (c == 0) {
        os << s << std::string(width[c] - s.size(), ' ');
      } else {
        os << "  " << std::string(width[c] - s.size(), ' ') << s;
      }
    }
    os << "\n";
    if (i == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      os << std::string(total - 2, '-') << "\n";
    }
  }
  return os.str();
}

}  // namespace qitsa::ablation
