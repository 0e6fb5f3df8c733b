#include <cmath>
#include <cstring>
#include <set>

#include <gtest/gtest.h>

#include "gazetrack/training.hpp"

using namespace gazetrack;

namespace {

// Three tight clusters, one per class, far apart in every feature.
std::vector<LabeledSample> clusters(std::size_t per_class, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LabeledSample> out;
  for (int c = 0; c < kNumLabels; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      LabeledSample s;
      for (auto& f : s.features) f = 4.0 * c + rng.uniform(-0.3, 0.3);
      s.label = static_cast<DepthLabel>(c);
      out.push_back(s);
    }
  }
  return out;
}

std::vector<LabeledSample> with_counts(std::array<std::size_t, 3> counts, std::uint64_t seed) {
  auto data = generate_dataset(3 * *std::max_element(counts.begin(), counts.end()), seed);
  std::vector<LabeledSample> out;
  std::array<std::size_t, 3> taken{};
  for (const auto& s : data) {
    const auto c = static_cast<std::size_t>(s.label);
    if (taken[c] < counts[c]) {
      out.push_back(s);
      ++taken[c];
    }
  }
  return out;
}

bool same_bits(const DepthModelParams& a, const DepthModelParams& b) {
  std::vector<double> va, vb;
  a.for_each_tensor([&](std::string_view, std::span<const double> v) { va.insert(va.end(), v.begin(), v.end()); });
  b.for_each_tensor([&](std::string_view, std::span<const double> v) { vb.insert(vb.end(), v.begin(), v.end()); });
  return va.size() == vb.size() && std::memcmp(va.data(), vb.data(), va.size() * sizeof(double)) == 0;
}

std::string key(const LabeledSample& s) {
  return std::string(reinterpret_cast<const char*>(s.features.data()), sizeof(double) * kNumFeatures);
}

}  // namespace

TEST(Split, StratifiedDisjointAndComplete) {
  const auto data = generate_dataset(1000, 3);
  const auto split = stratified_split(data, {}, 9);
  EXPECT_EQ(split.train.size() + split.val.size() + split.test.size(), data.size());
  std::multiset<std::string> all, parts;
  for (const auto& s : data) all.insert(key(s));
  for (const auto* part : {&split.train, &split.val, &split.test})
    for (const auto& s : *part) parts.insert(key(s));
  EXPECT_EQ(all, parts);
  const auto total = class_counts(data);
  const auto train = class_counts(split.train);
  const auto test = class_counts(split.test);
  for (int c = 0; c < 3; ++c) {
    EXPECT_NEAR(static_cast<double>(train[c]) / static_cast<double>(total[c]), 0.70, 0.01);
    EXPECT_GT(test[c], 0u);
  }
}

TEST(Split, DeterministicPerSeed) {
  const auto data = generate_dataset(300, 3);
  const auto a = stratified_split(data, {}, 4);
  const auto b = stratified_split(data, {}, 4);
  const auto c = stratified_split(data, {}, 5);
  ASSERT_EQ(a.test.size(), b.test.size());
  for (std::size_t i = 0; i < a.test.size(); ++i) EXPECT_EQ(key(a.test[i]), key(b.test[i]));
  bool differs = false;
  for (std::size_t i = 0; i < a.test.size(); ++i) differs |= key(a.test[i]) != key(c.test[i]);
  EXPECT_TRUE(differs);
}

TEST(Split, DegenerateInputsAreRejected) {
  EXPECT_THROW(stratified_split(with_counts({50, 50, 9}, 1), {}, 1), InvalidArgument);
  const auto data = generate_dataset(300, 1);
  EXPECT_THROW(stratified_split(data, {0.5, 0.5, 0.0}, 1), InvalidArgument);
  EXPECT_THROW(stratified_split(data, {0.7, 0.2, 0.2}, 1), InvalidArgument);
}

TEST(Standardization, UsesTrainStatistics) {
  const auto data = generate_dataset(500, 2);
  auto p = DepthModelParams::zeros();
  fit_standardization(p, data);
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    double mean = 0.0;
    for (const auto& s : data) mean += s.features[f];
    mean /= static_cast<double>(data.size());
    EXPECT_NEAR(p.feature_mean[f], mean, 1e-12);
    EXPECT_GT(p.feature_scale[f], 0.0);
  }
  // A constant feature keeps unit scale instead of dividing by zero.
  auto constant = data;
  for (auto& s : constant) s.features[0] = 0.25;
  fit_standardization(p, constant);
  EXPECT_EQ(p.feature_scale[0], 1.0);
}

TEST(Evaluate, ZeroParamsPredictTheLowestIndex) {
  const auto data = with_counts({50, 30, 20}, 5);
  const auto m = evaluate(DepthModelParams::zeros(), data, false);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.5);
  EXPECT_NEAR(m.mean_loss, std::log(3.0), 1e-12);
  const std::array<std::size_t, 3> counts{50, 30, 20};
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(m.confusion[c][0], counts[c]);
    EXPECT_EQ(m.confusion[c][0] + m.confusion[c][1] + m.confusion[c][2], counts[c]);
  }
}

TEST(Evaluate, InvariantToShuffling) {
  auto data = generate_dataset(400, 6);
  const auto p = DepthModelParams::initialize(6);
  const auto a = evaluate(p, data, false, 64);
  Rng rng(1);
  rng.shuffle(std::span<LabeledSample>(data));
  const auto b = evaluate(p, data, false, 64);
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_EQ(a.confusion, b.confusion);
  EXPECT_NEAR(a.mean_loss, b.mean_loss, 1e-12);
}

TEST(Evaluate, EmptyDatasetIsAnError) {
  EXPECT_THROW(evaluate(DepthModelParams::zeros(), {}, false), InvalidArgument);
}

TEST(Train, SeparableClustersAreLearnedPerfectly) {
  const auto data = clusters(60, 3);
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = 16;
  cfg.learning_rate = 5e-3;
  const auto result = train(data, {}, cfg);
  EXPECT_EQ(result.test.accuracy, 1.0);
  const auto m = evaluate(result.params, data, false);
  EXPECT_EQ(m.accuracy, 1.0);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(m.confusion[r][c], r == c ? 60u : 0u);
}

TEST(Train, SingleEpochHistory) {
  TrainConfig cfg;
  cfg.epochs = 1;
  const auto result = train(clusters(10, 1), {}, cfg);
  ASSERT_EQ(result.history.size(), 1u);
  EXPECT_EQ(result.history[0].epoch, 1u);
  EXPECT_EQ(result.best_epoch, 1u);
}

TEST(Train, ReturnsTheBestValidationEpoch) {
  TrainConfig cfg;
  cfg.epochs = 8;
  const auto data = generate_dataset(600, 8);
  const auto result = train(data, {}, cfg);
  ASSERT_EQ(result.history.size(), 8u);
  double best = -1.0;
  std::size_t best_epoch = 0;
  for (const auto& r : result.history) {
    EXPECT_GE(r.train_acc, 0.0);
    EXPECT_LE(r.train_acc, 1.0);
    EXPECT_GT(r.train_loss, 0.0);
    if (r.val_acc > best) {
      best = r.val_acc;
      best_epoch = r.epoch;
    }
  }
  EXPECT_EQ(result.best_epoch, best_epoch);
  const auto split = stratified_split(data, {}, cfg.split_seed);
  EXPECT_EQ(evaluate(result.params, split.val, false).accuracy, best);
}

TEST(Train, BitIdenticalForAFixedSeed) {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 17;
  const auto data = generate_dataset(600, 9);
  const auto a = train(data, {}, cfg);
  const auto b = train(data, {}, cfg);
  EXPECT_EQ(a.history, b.history);
  EXPECT_TRUE(same_bits(a.params, b.params));
  cfg.seed = 18;
  const auto c = train(data, {}, cfg);
  EXPECT_NE(a.history, c.history);
}

TEST(Train, AblatedModelHasNoIntraTensors) {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.ablate_intra = true;
  const auto result = train(clusters(10, 2), {}, cfg);
  EXPECT_FALSE(result.params.has_intra);
  EXPECT_EQ(result.params.parameter_count(), DepthModelParams::zeros(kDefaultEmbedDim, false).parameter_count());
}

TEST(Train, ConfigValidation) {
  const auto data = clusters(10, 1);
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(train(data, {}, cfg), InvalidArgument);
  cfg = {};
  cfg.learning_rate = 0.0;
  EXPECT_THROW(train(data, {}, cfg), InvalidArgument);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(train(data, {}, cfg), InvalidArgument);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstTheGradientSign) {
  auto params = DepthModelParams::zeros(4);
  auto grads = params.zeros_like();
  grads.head_b << 0.5, -2.0, 0.0;
  Adam adam(params, 0.01);
  adam.step(params, grads);
  EXPECT_NEAR(params.head_b(0), -0.01, 1e-9);
  EXPECT_NEAR(params.head_b(1), 0.01, 1e-9);
  EXPECT_EQ(params.head_b(2), 0.0);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Adam, MatchesHandComputedSecondStep) {
  auto params = DepthModelParams::zeros(4);
  auto grads = params.zeros_like();
  Adam adam(params, 0.1);
  grads.head_b << 1.0, 0.0, 0.0;
  adam.step(params, grads);
  grads.head_b << 3.0, 0.0, 0.0;
  adam.step(params, grads);
  const double m = 0.9 * 0.1 * 1.0 + 0.1 * 3.0;
  const double v = 0.999 * 0.001 * 1.0 + 0.001 * 9.0;
  const double m_hat = m / (1 - 0.81), v_hat = v / (1 - 0.999 * 0.999);
  const double after_first = -0.1 * 1.0 / (1.0 + 1e-8);
  EXPECT_NEAR(params.head_b(0), after_first - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8), 1e-12);
}

TEST(MeanStd, SampleStatistics) {
  const std::vector<double> v{0.95, 0.97, 0.96, 0.98, 0.94};
  const auto ms = mean_std(v);
  EXPECT_NEAR(ms.mean, 0.96, 1e-12);
  EXPECT_NEAR(ms.stddev, std::sqrt(0.001 / 4.0), 1e-12);
  EXPECT_EQ(mean_std(std::vector<double>{1.0}).stddev, 0.0);
}
