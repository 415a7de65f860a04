#pragma once

// Optimisation loop, loss, evaluation metrics and per-epoch training curves.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qitsa/autodiff.hpp"
#include "qitsa/corpus.hpp"
#include "qitsa/error.hpp"
#include "qitsa/model.hpp"
#include "qitsa/rng.hpp"

namespace qitsa::train {

struct AdamWConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled weight decay Adam with bias-corrected moments:
//   theta -= lr * wd * theta
//   m = b1 m + (1 - b1) g,  v = b2 v + (1 - b2) g^2
//   theta -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
class AdamW {
 public:
  AdamW(std::vector<ad::Node> params, AdamWConfig cfg);

  void step();
  void zero_grad();
  std::size_t steps() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  std::vector<ad::Node> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamWConfig cfg_;
  std::size_t t_ = 0;
};

struct TrainConfig {
  AdamWConfig optimizer;
  std::size_t epochs = 51;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  ModelConfig model;
};

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  void add(bool predicted_positive, int label);
  std::size_t total() const { return tp + tn + fp + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

struct Metrics {
  double accuracy = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  // Set when the corresponding denominator was zero and the metric was
  // reported as 0.
  bool recall_undefined = false;
  bool precision_undefined = false;
  bool f1_undefined = false;
};

Metrics compute_metrics(const ConfusionCounts& c);

inline constexpr double kDecisionThreshold = 0.5;
inline constexpr double kProbabilityClamp = 1e-7;

// -(y log p + (1 - y) log(1 - p)) with p clamped to [1e-7, 1 - 1e-7].
ad::Node bce_loss(const ad::Node& p, int y);

struct Evaluation {
  ConfusionCounts counts;
  Metrics metrics;
};

Evaluation evaluate(const QitsaModel& model, std::span<const LabeledSentence> data);

class TrainingError : public Error {
 public:
  using Error::Error;
};

struct EpochStats {
  double mean_loss = 0.0;
  ConfusionCounts counts;
};

// One pass over `data` in seeded-shuffled batches. Each batch is padded to
// its longest sentence; the batch loss is the mean per-sentence BCE.
EpochStats train_epoch(QitsaModel& model, std::span<const LabeledSentence> data, const TrainConfig& cfg,
                       AdamW& optimizer, Rng& shuffle_rng, std::size_t epoch);

struct CurveRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double train_f1 = 0.0;
  double test_f1 = 0.0;
  double train_recall = 0.0;
  double test_recall = 0.0;

  bool operator==(const CurveRow&) const = default;
};

struct CurveLog {
  std::vector<CurveRow> rows;
  bool operator==(const CurveLog&) const = default;
};

inline constexpr std::string_view kCurveHeader =
    "epoch,train_loss,train_acc,test_acc,train_f1,test_f1,train_recall,test_recall";

// Writes the CSV; with `svg` also writes <stem>_<metric>.svg line charts
// next to it.
void emit_curves(const CurveLog& log, const std::filesystem::path& path, bool svg = false);
CurveLog read_curves(const std::filesystem::path& path);

// True when, after epoch 20, the 5-epoch trailing mean of the training loss
// rises over some 10-epoch window.
bool loss_trend_flagged(const CurveLog& log);

struct FitResult {
  CurveLog log;
  double best_test_accuracy = 0.0;
  std::size_t best_epoch = 0;
  Evaluation final_train;
  Evaluation final_test;
  bool loss_trend_flag = false;
};

// Trains for cfg.epochs, evaluating the test split after each epoch.
FitResult fit(QitsaModel& model, const Dataset& data, const TrainConfig& cfg,
              const std::function<void(const CurveRow&)>& on_epoch = {});

}  // namespace qitsa::train
