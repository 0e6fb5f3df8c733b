#pragma once

// Stratified splitting, mini-batch training with Adam, and evaluation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "gazetrack/depth_model.hpp"
#include "gazetrack/error.hpp"
#include "gazetrack/random.hpp"

namespace gazetrack {

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

struct DatasetSplit {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> val;
  std::vector<LabeledSample> test;
};

inline std::array<std::size_t, kNumLabels> class_counts(std::span<const LabeledSample> samples) {
  std::array<std::size_t, kNumLabels> counts{};
  for (const auto& s : samples) ++counts[static_cast<std::size_t>(s.label)];
  return counts;
}

/// Per-class shuffled split; every part receives every class.
inline DatasetSplit stratified_split(std::span<const LabeledSample> samples, SplitFractions fractions,
                                     std::uint64_t seed) {
  if (fractions.train <= 0.0 || fractions.val <= 0.0 || fractions.test <= 0.0 ||
      std::abs(fractions.train + fractions.val + fractions.test - 1.0) > 1e-9)
    throw InvalidArgument("split fractions must be positive and sum to 1");
  const auto counts = class_counts(samples);
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] < 10)
      throw InvalidArgument("degenerate split: class " + std::to_string(c) + " has " + std::to_string(counts[c]) +
                            " samples, need at least 10");

  Rng rng(seed);
  DatasetSplit split;
  for (int c = 0; c < kNumLabels; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (static_cast<int>(samples[i].label) == c) idx.push_back(i);
    rng.shuffle(std::span<std::size_t>(idx));
    const auto n = static_cast<double>(idx.size());
    const auto n_train = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n * fractions.train)));
    const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n * fractions.val)));
    if (n_train + n_val >= idx.size()) throw InvalidArgument("degenerate split: empty test part");
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto& part = k < n_train ? split.train : (k < n_train + n_val ? split.val : split.test);
      part.push_back(samples[idx[k]]);
    }
  }
  // Interleave classes so downstream order does not depend on label.
  rng.shuffle(std::span<LabeledSample>(split.train));
  rng.shuffle(std::span<LabeledSample>(split.val));
  rng.shuffle(std::span<LabeledSample>(split.test));
  return split;
}

/// Stores train-split feature mean and standard deviation in the parameters.
inline void fit_standardization(DepthModelParams& p, std::span<const LabeledSample> train) {
  if (train.empty()) throw InvalidArgument("cannot standardize on an empty split");
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    double mean = 0.0;
    for (const auto& s : train) mean += s.features[f];
    mean /= static_cast<double>(train.size());
    double var = 0.0;
    for (const auto& s : train) var += (s.features[f] - mean) * (s.features[f] - mean);
    var /= static_cast<double>(train.size());
    const double sd = std::sqrt(var);
    p.feature_mean[f] = mean;
    p.feature_scale[f] = sd > 1e-12 ? sd : 1.0;
  }
}

struct Metrics {
  double accuracy = 0.0;
  double mean_loss = 0.0;
  std::size_t count = 0;
  /// confusion[true][predicted]
  std::array<std::array<std::size_t, kNumLabels>, kNumLabels> confusion{};
};

inline Metrics evaluate(const DepthModelParams& p, std::span<const LabeledSample> samples, bool ablate_intra,
                        std::size_t chunk = 1024) {
  if (samples.empty()) throw InvalidArgument("evaluate needs a non-empty dataset");
  Metrics m;
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < samples.size(); start += chunk) {
    const auto part = samples.subspan(start, std::min(chunk, samples.size() - start));
    const Matrix probs = forward_batch(p, features_matrix(part), ablate_intra);
    for (std::size_t i = 0; i < part.size(); ++i) {
      const auto row = probs.row(static_cast<Eigen::Index>(i));
      const int truth = static_cast<int>(part[i].label);
      const int predicted = argmax(row);
      ++m.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)];
      correct += predicted == truth;
      loss -= std::log(std::max(row(truth), 1e-300));
    }
  }
  m.count = samples.size();
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.count);
  m.mean_loss = loss / static_cast<double>(m.count);
  return m;
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias-corrected first and second moment estimates.
class Adam {
 public:
  Adam(const DepthModelParams& shape, double learning_rate, AdamConfig cfg = {})
      : learning_rate_(learning_rate), cfg_(cfg) {
    shape.for_each_tensor([&](std::string_view, std::span<const double> values) {
      first_.emplace_back(values.size(), 0.0);
      second_.emplace_back(values.size(), 0.0);
    });
  }

  void step(DepthModelParams& params, const DepthModelParams& grads) {
    ++steps_;
    const double correction1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
    const double correction2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
    std::vector<std::span<const double>> grad_tensors;
    grads.for_each_tensor([&](std::string_view, std::span<const double> values) { grad_tensors.push_back(values); });
    std::size_t t = 0;
    params.for_each_tensor([&](std::string_view, std::span<double> values) {
      auto& m = first_[t];
      auto& v = second_[t];
      const auto g = grad_tensors[t];
      for (std::size_t i = 0; i < values.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double m_hat = m[i] / correction1;
        const double v_hat = v[i] / correction2;
        values[i] -= learning_rate_ * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
      }
      ++t;
    });
  }

  std::uint64_t steps() const noexcept { return steps_; }

 private:
  double learning_rate_;
  AdamConfig cfg_;
  std::uint64_t steps_ = 0;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  AdamConfig adam;
  /// Seeds initialization and batch order.
  std::uint64_t seed = 1;
  /// Seeds the stratified split; shared across trials so they see the same data.
  std::uint64_t split_seed = 0;
  bool ablate_intra = false;
  std::size_t embed_dim = kDefaultEmbedDim;
};

inline void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (cfg.epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (cfg.batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  if (cfg.embed_dim < 1) throw InvalidArgument("embed_dim must be >= 1");
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainResult {
  DepthModelParams params;  // best validation accuracy
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  Metrics test;
};

/// Mini-batch Adam on the train part of a stratified split. Train loss and
/// accuracy are running averages over the epoch's batches; the returned
/// parameters are those with the best validation accuracy (earliest on ties).
inline TrainResult train(std::span<const LabeledSample> samples, SplitFractions fractions, const TrainConfig& cfg) {
  validate(cfg);
  const DatasetSplit split = stratified_split(samples, fractions, cfg.split_seed);

  DepthModelParams params = DepthModelParams::initialize(cfg.seed, cfg.embed_dim, !cfg.ablate_intra);
  fit_standardization(params, split.train);
  Adam optimizer(params, cfg.learning_rate, cfg.adam);
  Rng order_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<LabeledSample> order = split.train;
  std::vector<LabeledSample> batch;
  batch.reserve(cfg.batch_size);

  TrainResult result;
  double best_val = -1.0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    order_rng.shuffle(std::span<LabeledSample>(order));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const LabeledSample> part(order.data() + start, end - start);
      LossAndGrads lg = loss_and_grads(params, part, cfg.ablate_intra);
      loss_sum += lg.loss * static_cast<double>(part.size());
      for (std::size_t i = 0; i < part.size(); ++i)
        correct += argmax(lg.probs.row(static_cast<Eigen::Index>(i))) == static_cast<int>(part[i].label);
      optimizer.step(params, lg.grads);
    }
    const Metrics val = evaluate(params, split.val, cfg.ablate_intra);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    rec.val_loss = val.mean_loss;
    rec.val_acc = val.accuracy;
    result.history.push_back(rec);
    if (val.accuracy > best_val) {
      best_val = val.accuracy;
      result.params = params;
      result.best_epoch = epoch;
    }
  }
  result.test = evaluate(result.params, split.test, cfg.ablate_intra);
  return result;
}

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
};

/// Sample mean and (n-1) standard deviation.
inline MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

}  // namespace gazetrack
