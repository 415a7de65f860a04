#include "qitsa/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace qitsa::train {

AdamW::AdamW(std::vector<ad::Node> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void AdamW::step() {
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto theta = params_[k].mutable_value().data();
    const auto g = params_[k].grad().data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      theta[i] -= cfg_.lr * cfg_.weight_decay * theta[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      theta[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void ConfusionCounts::add(bool predicted_positive, int label) {
  if (predicted_positive) {
    ++(label == 1 ? tp : fp);
  } else {
    ++(label == 1 ? fn : tn);
  }
}

Metrics compute_metrics(const ConfusionCounts& c) {
  Metrics m;
  auto ratio = [](std::size_t num, std::size_t den, bool& undefined) {
    if (den == 0) {
      undefined = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  bool acc_undefined = false;
  m.accuracy = ratio(c.tp + c.tn, c.total(), acc_undefined);
  m.recall = ratio(c.tp, c.tp + c.fn, m.recall_undefined);
  m.precision = ratio(c.tp, c.tp + c.fp, m.precision_undefined);
  if (m.precision + m.recall == 0.0) {
    m.f1_undefined = true;
    m.f1 = 0.0;
  } else {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }
  return m;
}

ad::Node bce_loss(const ad::Node& p, int y) {
  ad::Node pc = ad::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  if (y == 1) return ad::scale(ad::log(pc), -1.0);
  return ad::scale(ad::log(ad::shift(ad::scale(pc, -1.0), 1.0)), -1.0);
}

Evaluation evaluate(const QitsaModel& model, std::span<const LabeledSentence> data) {
  if (data.empty()) throw Error("evaluate: empty split");
  Evaluation e;
  for (const auto& s : data) e.counts.add(model.predict(s.tokens) >= kDecisionThreshold, s.label);
  e.metrics = compute_metrics(e.counts);
  return e;
}

namespace {

std::string first_non_finite(const QitsaModel& model) {
  for (const auto& p : model.parameters()) {
    for (double v : p.value().data())
      if (!std::isfinite(v)) return p.name() + " (value)";
    for (double v : p.grad().data())
      if (!std::isfinite(v)) return p.name() + " (gradient)";
  }
  return "none";
}

}  // namespace

EpochStats train_epoch(QitsaModel& model, std::span<const LabeledSentence> data, const TrainConfig& cfg,
                       AdamW& optimizer, Rng& shuffle_rng, std::size_t epoch) {
  if (data.empty()) throw Error("train_epoch: empty training split");
  if (cfg.batch_size == 0) throw Error("batch_size must be positive");
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle_rng.shuffle(order);

  EpochStats stats;
  double loss_total = 0.0;
  std::size_t batch_index = 0;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
    const std::size_t end = std::min(order.size(), start + cfg.batch_size);
    const std::size_t batch = end - start;
    std::size_t width = 0;
    for (std::size_t k = start; k < end; ++k) width = std::max(width, data[order[k]].tokens.size());

    optimizer.zero_grad();
    double batch_loss = 0.0;
    for (std::size_t k = start; k < end; ++k) {
      const auto& s = data[order[k]];
      std::vector<TokenId> ids(s.tokens);
      ids.resize(width, kPadId);
      ad::Node p = model.probability(ids);
      stats.counts.add(p.item() >= kDecisionThreshold, s.label);
      ad::Node loss = ad::scale(bce_loss(p, s.label), 1.0 / static_cast<double>(batch));
      if (!std::isfinite(loss.item()))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index) + ", parameter " + first_non_finite(model));
      ad::backward(loss);
      batch_loss += loss.item();
    }
    for (const auto& p : model.parameters())
      for (double g : p.grad().data())
        if (!std::isfinite(g))
          throw TrainingError("non-finite gradient at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch_index) + ", parameter " + p.name());
    optimizer.step();
    loss_total += batch_loss * static_cast<double>(batch);
  }
  optimizer.zero_grad();
  stats.mean_loss = loss_total / static_cast<double>(data.size());
  return stats;
}

void emit_curves(const CurveLog& log, const std::filesystem::path& path, bool svg) {
  if (log.rows.empty()) throw Error("emit_curves: empty log");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  os << kCurveHeader << "\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const auto& r : log.rows)
    os << r.epoch << "," << num(r.train_loss) << "," << num(r.train_acc) << "," << num(r.test_acc) << ","
       << num(r.train_f1) << "," << num(r.test_f1) << "," << num(r.train_recall) << "," << num(r.test_recall) << "\n";
  if (!os) throw Error("failed writing " + path.string());
  if (!svg) return;

  struct Series {
    const char* name;
    double CurveRow::*field;
  };
  const Series series[] = {{"train_loss", &CurveRow::train_loss}, {"train_acc", &CurveRow::train_acc},
                           {"test_acc", &CurveRow::test_acc},     {"train_f1", &CurveRow::train_f1},
                           {"test_f1", &CurveRow::test_f1},       {"train_recall", &CurveRow::train_recall},
                           {"test_recall", &CurveRow::test_recall}};
  constexpr double W = 640, H = 360, pad = 40;
  for (const auto& s : series) {
    double lo = log.rows[0].*s.field, hi = lo;
    for (const auto& r : log.rows) {
      lo = std::min(lo, r.*s.field);
      hi = std::max(hi, r.*s.field);
    }
    if (hi - lo < 1e-12) hi = lo + 1.0;
    const double n = static_cast<double>(std::max<std::size_t>(1, log.rows.size() - 1));
    auto out_path = path.parent_path() / (path.stem().string() + "_" + s.name + ".svg");
    std::ofstream svg_os(out_path, std::ios::trunc);
    if (!svg_os) throw Error("cannot write " + out_path.string());
    svg_os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
           << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
           << "<text x=\"" << pad << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" << s.name
           << " (min " << num(lo) << ", max " << num(hi) << ")</text>\n"
           << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < log.rows.size(); ++i) {
      const double x = pad + (W - 2 * pad) * static_cast<double>(i) / n;
      const double y = H - pad - (H - 2 * pad) * ((log.rows[i].*s.field) - lo) / (hi - lo);
      svg_os << x << "," << y << " ";
    }
    svg_os << "\"/>\n</svg>\n";
  }
}

CurveLog read_curves(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCurveHeader) throw ParseError(path.string(), 1, "unexpected curve header");
  CurveLog log;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 8) throw ParseError(path.string(), line_no, "expected 8 columns");
    CurveRow r;
    try {
      r.epoch = std::stoul(fields[0]);
      r.train_loss = std::stod(fields[1]);
      r.train_acc = std::stod(fields[2]);
      r.test_acc = std::stod(fields[3]);
      r.train_f1 = std::stod(fields[4]);
      r.test_f1 = std::stod(fields[5]);
      r.train_recall = std::stod(fields[6]);
      r.test_recall = std::stod(fields[7]);
    } catch (const std::exception&) {
      throw ParseError(path.string(), line_no, "bad number");
    }
    log.rows.push_back(r);
  }
  return log;
}

bool loss_trend_flagged(const CurveLog& log) {
  constexpr std::size_t kSmooth = 5, kWindow = 10, kStart = 20;
  const auto& rows = log.rows;
  auto smoothed = [&](std::size_t e) {
    double s = 0.0;
    for (std::size_t k = e + 1 - kSmooth; k <= e; ++k) s += rows[k].train_loss;
    return s / kSmooth;
  };
  for (std::size_t e = kStart; e + kWindow < rows.size(); ++e)
    if (smoothed(e + kWindow) > smoothed(e) + 1e-6) return true;
  return false;
}

FitResult fit(QitsaModel& model, const Dataset& data, const TrainConfig& cfg,
              const std::function<void(const CurveRow&)>& on_epoch) {
  if (data.train.empty() || data.test.empty()) throw Error("fit: train and test splits must be non-empty");
  AdamW optimizer(model.parameters(), cfg.optimizer);
  Rng shuffle_rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);
  FitResult result;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochStats stats = train_epoch(model, data.train, cfg, optimizer, shuffle_rng, epoch);
    Metrics train_m = compute_metrics(stats.counts);
    Evaluation test = evaluate(model, data.test);
    CurveRow row{epoch,       stats.mean_loss,     train_m.accuracy,       test.metrics.accuracy,
                 train_m.f1,  test.metrics.f1,     train_m.recall,         test.metrics.recall};
    result.log.rows.push_back(row);
    if (result.best_epoch == 0 || test.metrics.accuracy > result.best_test_accuracy) {
      result.best_test_accuracy = test.metrics.accuracy;
      result.best_epoch = epoch;
    }
    if (on_epoch) on_epoch(row);
  }
  result.final_train = evaluate(model, data.train);
  result.final_test = evaluate(model, data.test);
  result.loss_trend_flag = loss_trend_flagged(result.log);
  return result;
}

}  // namespace qitsa::train
