#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "gazetrack/depth_model.hpp"
#include "gazetrack/training.hpp"
#include "reference_model.hpp"

using namespace gazetrack;

namespace {

AttentionParams random_attention(std::size_t d, Rng& rng, double scale = 1.0) {
  AttentionParams p = AttentionParams::zeros(d);
  for (Eigen::Index i = 0; i < p.w_a.size(); ++i) p.w_a.data()[i] = rng.uniform(-scale, scale);
  for (Eigen::Index i = 0; i < p.w_c.size(); ++i) p.w_c.data()[i] = rng.uniform(-scale, scale);
  for (Eigen::Index i = 0; i < p.b_a.size(); ++i) p.b_a(i) = rng.uniform(-scale, scale);
  return p;
}

// Seeded weights with non-trivial biases and standardization, so every
// tensor carries gradient.
DepthModelParams busy_params(std::uint64_t seed, bool has_intra = true, std::size_t d = kDefaultEmbedDim) {
  DepthModelParams p = DepthModelParams::initialize(seed, d, has_intra);
  fit_standardization(p, generate_dataset(300, seed + 1));
  Rng rng(seed + 2);
  p.for_each_tensor([&](std::string_view name, std::span<double> values) {
    const bool bias = name.ends_with("bias") || name.ends_with("b_a");
    for (double& v : values) v = bias ? rng.uniform(-0.2, 0.2) : v * 3.0;
  });
  return p;
}

// The regression parameters: seeded init, fitted standardization, larger head.
DepthModelParams pinned_params() {
  auto p = DepthModelParams::initialize(42);
  fit_standardization(p, generate_dataset(300, 45));
  p.head_w *= 20.0;
  p.inter.w_c *= 5.0;
  return p;
}

std::vector<std::vector<double>> tensors(const DepthModelParams& p) {
  std::vector<std::vector<double>> out;
  p.for_each_tensor([&](std::string_view, std::span<const double> v) { out.emplace_back(v.begin(), v.end()); });
  return out;
}

std::vector<std::string> tensor_names(const DepthModelParams& p) {
  std::vector<std::string> out;
  p.for_each_tensor([&](std::string_view name, std::span<const double>) { out.emplace_back(name); });
  return out;
}

double norm(const std::vector<double>& v) { return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)); }

// Central differences of the reference loss, one parameter at a time.
void expect_gradients_match(const DepthModelParams& params, std::span<const LabeledSample> batch, bool ablate) {
  const auto analytic = tensors(loss_and_grads(params, batch, ablate).grads);
  const auto names = tensor_names(params);
  DepthModelParams probe = params;
  std::vector<std::span<double>> slots;
  probe.for_each_tensor([&](std::string_view, std::span<double> v) { slots.push_back(v); });
  constexpr double h = 1e-5;
  for (std::size_t t = 0; t < slots.size(); ++t) {
    if (ablate && names[t].starts_with("intra.")) continue;
    std::vector<double> numeric(slots[t].size());
    for (std::size_t i = 0; i < slots[t].size(); ++i) {
      const double saved = slots[t][i];
      slots[t][i] = saved + h;
      const double up = reference::loss(probe, batch, ablate);
      slots[t][i] = saved - h;
      const double down = reference::loss(probe, batch, ablate);
      slots[t][i] = saved;
      numeric[i] = (up - down) / (2.0 * h);
    }
    std::vector<double> diff(numeric.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = analytic[t][i] - numeric[i];
    const double scale = std::max({norm(analytic[t]), norm(numeric), 1e-8});
    EXPECT_LE(norm(diff) / scale, 1e-4) << names[t] << (ablate ? " (ablated)" : "");
  }
}

}  // namespace

TEST(Attention, ZeroParamsGiveUniformWeights) {
  for (std::size_t d : {1u, 4u, 32u}) {
    const auto p = AttentionParams::zeros(d);
    Rng rng(d);
    Vector y(static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = rng.uniform(-2, 2);
    const Vector w = attention_weights(p, y);
    const Vector out = elementwise_attention(p, y);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      EXPECT_DOUBLE_EQ(w(i), 1.0 / static_cast<double>(d));
      EXPECT_DOUBLE_EQ(out(i), y(i) / static_cast<double>(d));
    }
  }
}

TEST(Attention, ZeroInputGivesZeroOutput) {
  Rng rng(5);
  const auto p = random_attention(8, rng, 3.0);
  const Vector out = elementwise_attention(p, Vector::Zero(8));
  EXPECT_EQ(out, Vector::Zero(8));
}

TEST(Attention, MatchesScalarReference) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_attention(4, rng);
    reference::Vec y(4);
    Vector ye(4);
    for (int i = 0; i < 4; ++i) ye(i) = y[static_cast<std::size_t>(i)] = rng.uniform(-1, 1);
    const Vector got = elementwise_attention(p, ye);
    const auto want = reference::attention(p, y);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(got(i), want[static_cast<std::size_t>(i)], 1e-12);
    EXPECT_NEAR(attention_weights(p, ye).sum(), 1.0, 1e-12);
  }
}

TEST(Attention, ShapeAndFinitenessErrors) {
  const auto p = AttentionParams::zeros(4);
  EXPECT_THROW(elementwise_attention(p, Vector::Zero(5)), ShapeMismatch);
  Vector y = Vector::Zero(4);
  y(2) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(elementwise_attention(p, y), NonFiniteValue);
  AttentionParams bad = p;
  bad.w_c = Matrix::Zero(4, 3);
  EXPECT_THROW(elementwise_attention(bad, Vector::Zero(4)), ShapeMismatch);
}

TEST(Forward, ProbabilitiesFormADistribution) {
  const auto p = busy_params(8);
  for (const auto& s : generate_dataset(300, 9)) {
    for (bool ablate : {false, true}) {
      const auto probs = forward(p, s.features, ablate).probs;
      double sum = 0.0;
      for (double v : probs) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
  }
}

TEST(Forward, ZeroParamsGiveExactThirds) {
  const auto p = DepthModelParams::zeros();
  const auto s = generate_dataset(1, 1)[0];
  const auto probs = predict(p, s.features, false);
  for (double v : probs) EXPECT_EQ(v, 1.0 / 3.0);
}

TEST(Forward, MatchesScalarReference) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto p = busy_params(seed);
    for (const auto& s : generate_dataset(50, seed + 10)) {
      for (bool ablate : {false, true}) {
        const auto got = predict(p, s.features, ablate);
        const auto want = reference::forward(p, s.features, ablate);
        for (int k = 0; k < kNumLabels; ++k) EXPECT_NEAR(got[k], want[static_cast<std::size_t>(k)], 1e-12);
      }
    }
  }
}

TEST(Forward, PinnedRegressionVector) {
  const auto p = pinned_params();
  const auto s = generate_dataset(3, 44)[0];
  // Computed once with the scalar reference path.
  const std::array<double, 3> full{0.3333996080563344, 0.33317464190182761, 0.333425750041838};
  const std::array<double, 3> ablated{0.33457481457272853, 0.34424162814924786, 0.32118355727802356};
  const auto got_full = predict(p, s.features, false);
  const auto got_ablated = predict(p, s.features, true);
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(got_full[k], full[static_cast<std::size_t>(k)], 1e-12);
    EXPECT_NEAR(got_ablated[k], ablated[static_cast<std::size_t>(k)], 1e-12);
  }
}

TEST(Forward, BatchedRowsEqualSingleSamples) {
  const auto p = busy_params(4);
  const auto data = generate_dataset(40, 5);
  const Matrix batch = forward_batch(p, features_matrix(data), false);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto single = predict(p, data[i].features, false);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(batch(static_cast<Eigen::Index>(i), k), single[k], 1e-15);
  }
}

TEST(Forward, NonFiniteInputNamesTheLayer) {
  const auto p = busy_params(4);
  auto s = generate_dataset(1, 1)[0];
  s.features[3] = std::nan("");
  try {
    predict(p, s.features, false);
    FAIL() << "expected NonFiniteValue";
  } catch (const NonFiniteValue& e) {
    EXPECT_NE(std::string(e.what()).find("input"), std::string::npos);
  }
  auto huge = busy_params(4);
  huge.embed[0].bias.setConstant(std::numeric_limits<double>::infinity());
  const auto clean = generate_dataset(1, 2)[0];
  try {
    predict(huge, clean.features, false);
    FAIL() << "expected NonFiniteValue";
  } catch (const NonFiniteValue& e) {
    EXPECT_NE(std::string(e.what()).find("embed.rotation"), std::string::npos) << e.what();
  }
}

TEST(Forward, ArgmaxIsStableUnderPositiveLogitScaling) {
  Rng rng(31);
  for (int trial = 0; trial < 500; ++trial) {
    Matrix logits(1, 3);
    for (int k = 0; k < 3; ++k) logits(0, k) = rng.uniform(-5, 5);
    const int base = argmax(detail::softmax_rows(logits).row(0));
    for (double c : {0.01, 0.5, 2.0, 100.0}) EXPECT_EQ(argmax(detail::softmax_rows(c * logits).row(0)), base);
  }
  EXPECT_EQ(argmax(Probabilities{0.4, 0.4, 0.2}), 0);
  EXPECT_EQ(argmax(Probabilities{0.2, 0.4, 0.4}), 1);
}

TEST(Ablation, TraceDropsExactlyTheIntraLayers) {
  const auto p = busy_params(12);
  const auto s = generate_dataset(1, 3)[0];
  const auto full = forward(p, s.features, false).trace;
  const auto ablated = forward(p, s.features, true).trace;
  std::vector<std::string> full_names, ablated_names, expected;
  for (const auto& t : full)
    if (!t.layer.starts_with("intra.")) full_names.push_back(t.layer);
  for (const auto& t : ablated) ablated_names.push_back(t.layer);
  EXPECT_EQ(full_names, ablated_names);
  EXPECT_EQ(full.size(), ablated.size() + 3);
  expected = {"embed.rotation", "intra.rotation", "embed.position", "intra.position",
              "embed.intersection", "intra.intersection", "inter", "head", "softmax"};
  std::vector<std::string> all;
  for (const auto& t : full) all.push_back(t.layer);
  EXPECT_EQ(all, expected);
  // Embeddings are shared computation and identical in both graphs.
  EXPECT_EQ(full[0].values, ablated[0].values);
}

TEST(Ablation, ParameterCounts) {
  const std::size_t d = kDefaultEmbedDim;
  const std::size_t embed = (6 * d + d) * 2 + (3 * d + d);
  const std::size_t intra = 3 * (2 * d * d + d);
  const std::size_t inter = 2 * (3 * d) * (3 * d) + 3 * d;
  const std::size_t head = 3 * d * 3 + 3;
  EXPECT_EQ(DepthModelParams::zeros(d, true).parameter_count(), embed + intra + inter + head);
  EXPECT_EQ(DepthModelParams::zeros(d, false).parameter_count(), embed + inter + head);
  EXPECT_EQ(DepthModelParams::zeros(d, true).parameter_count(), 25635u);
}

TEST(Ablation, WeightsWithoutIntraRequireAblation) {
  const auto p = DepthModelParams::initialize(1, kDefaultEmbedDim, false);
  const auto s = generate_dataset(1, 1)[0];
  EXPECT_THROW(predict(p, s.features, false), ShapeMismatch);
  EXPECT_NO_THROW(predict(p, s.features, true));
}

TEST(Loss, UniformPredictionCostsLnThree) {
  const auto p = DepthModelParams::zeros();
  const auto batch = generate_dataset(1, 1);
  EXPECT_NEAR(loss_and_grads(p, batch, false).loss, std::log(3.0), 1e-15);
}

TEST(Loss, EmptyBatchIsAnError) {
  const auto p = DepthModelParams::zeros();
  EXPECT_THROW(loss_and_grads(p, {}, false), InvalidArgument);
}

TEST(Loss, MatchesReferenceLoss) {
  const auto p = busy_params(14);
  const auto batch = generate_dataset(16, 15);
  for (bool ablate : {false, true})
    EXPECT_NEAR(loss_and_grads(p, batch, ablate).loss, reference::loss(p, batch, ablate), 1e-12);
}

TEST(Loss, DuplicatedBatchGivesTheSameLossAndGradients) {
  const auto p = busy_params(16);
  const auto batch = generate_dataset(5, 17);
  std::vector<LabeledSample> tripled;
  for (int k = 0; k < 3; ++k) tripled.insert(tripled.end(), batch.begin(), batch.end());
  const auto once = loss_and_grads(p, batch, false);
  const auto thrice = loss_and_grads(p, tripled, false);
  EXPECT_NEAR(once.loss, thrice.loss, 1e-14);
  const auto a = tensors(once.grads), b = tensors(thrice.grads);
  for (std::size_t t = 0; t < a.size(); ++t)
    for (std::size_t i = 0; i < a[t].size(); ++i) EXPECT_NEAR(a[t][i], b[t][i], 1e-13 * (1.0 + std::abs(a[t][i])));
}

TEST(Gradients, MatchCentralDifferencesOnABatchOfFour) {
  const auto batch = generate_dataset(4, 21);
  expect_gradients_match(busy_params(20, true, 8), batch, false);
}

TEST(Gradients, MatchCentralDifferencesWhenAblated) {
  const auto batch = generate_dataset(4, 23);
  expect_gradients_match(busy_params(22, false, 8), batch, true);
}

TEST(Gradients, MatchCentralDifferencesAtFullWidth) {
  const auto batch = generate_dataset(4, 25);
  expect_gradients_match(busy_params(24), batch, false);
}
