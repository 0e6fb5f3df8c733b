#pragma once

// Three-stream gaze depth classifier.
//
//   rotation (6) ----> embed -> relu -> intra attention --+
//   position (6) ----> embed -> relu -> intra attention ---+-> concat -> inter attention -> head -> softmax
//   intersection (3) -> embed -> relu -> intra attention --+
//
// Every attention block gates its input element-wise:
//   out = softmax(W_c^T tanh(W_a y + b_a)) (*) y
// with the softmax taken over the embedding components.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gazetrack/error.hpp"
#include "gazetrack/gaze_geometry.hpp"
#include "gazetrack/random.hpp"

namespace gazetrack {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct StreamSpec {
  std::string_view name;
  std::size_t input_dim;
  std::size_t offset;  // first feature column
};

inline constexpr std::array<StreamSpec, 3> kStreams{{
    {"rotation", 6, 0},
    {"position", 6, 6},
    {"intersection", 3, 12},
}};
inline constexpr std::size_t kNumStreams = kStreams.size();
inline constexpr std::size_t kDefaultEmbedDim = 32;

struct AttentionParams {
  Matrix w_a;  // d x d
  Vector b_a;  // d
  Matrix w_c;  // d x d

  static AttentionParams zeros(std::size_t d) { return {Matrix::Zero(d, d), Vector::Zero(d), Matrix::Zero(d, d)}; }
  std::size_t dim() const { return static_cast<std::size_t>(b_a.size()); }
  std::size_t size() const { return static_cast<std::size_t>(w_a.size() + b_a.size() + w_c.size()); }
};

struct EmbeddingParams {
  Matrix weight;  // input_dim x embed_dim, h = weight^T x + bias
  Vector bias;
};

/// Every learnable tensor plus the (fixed) input standardization.
struct DepthModelParams {
  std::size_t embed_dim = kDefaultEmbedDim;
  bool has_intra = true;
  std::array<double, kNumFeatures> feature_mean{};
  std::array<double, kNumFeatures> feature_scale{};
  std::array<EmbeddingParams, kNumStreams> embed;
  std::array<AttentionParams, kNumStreams> intra;  // empty when !has_intra
  AttentionParams inter;                            // over 3 * embed_dim
  Matrix head_w;                                    // 3*embed_dim x kNumLabels
  Vector head_b;                                    // kNumLabels

  static DepthModelParams zeros(std::size_t embed_dim = kDefaultEmbedDim, bool has_intra = true) {
    if (embed_dim == 0) throw InvalidArgument("embed_dim must be positive");
    DepthModelParams p;
    p.embed_dim = embed_dim;
    p.has_intra = has_intra;
    p.feature_mean.fill(0.0);
    p.feature_scale.fill(1.0);
    for (std::size_t j = 0; j < kNumStreams; ++j) {
      p.embed[j] = {Matrix::Zero(kStreams[j].input_dim, embed_dim), Vector::Zero(embed_dim)};
      p.intra[j] = has_intra ? AttentionParams::zeros(embed_dim) : AttentionParams{};
    }
    p.inter = AttentionParams::zeros(kNumStreams * embed_dim);
    p.head_w = Matrix::Zero(kNumStreams * embed_dim, kNumLabels);
    p.head_b = Vector::Zero(kNumLabels);
    return p;
  }

  /// Weights uniform in +-1/sqrt(fan_in); biases zero; identity standardization.
  static DepthModelParams initialize(std::uint64_t seed, std::size_t embed_dim = kDefaultEmbedDim,
                                     bool has_intra = true) {
    DepthModelParams p = zeros(embed_dim, has_intra);
    Rng rng(seed);
    auto fill = [&](Matrix& m, std::size_t fan_in) {
      const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-limit, limit);
    };
    const std::size_t d = embed_dim;
    for (std::size_t j = 0; j < kNumStreams; ++j) fill(p.embed[j].weight, kStreams[j].input_dim);
    if (has_intra) {
      for (auto& a : p.intra) {
        fill(a.w_a, d);
        fill(a.w_c, d);
      }
    }
    fill(p.inter.w_a, kNumStreams * d);
    fill(p.inter.w_c, kNumStreams * d);
    fill(p.head_w, kNumStreams * d);
    return p;
  }

  /// Same shapes, every tensor zero; used as a gradient accumulator.
  DepthModelParams zeros_like() const {
    DepthModelParams g = zeros(embed_dim, has_intra);
    g.feature_mean = feature_mean;
    g.feature_scale = feature_scale;
    return g;
  }

  /// Visits learnable tensors in serialization order as (name, values).
  template <class Visitor>
  void for_each_tensor(Visitor&& visit) {
    visit_tensors(*this, visit);
  }
  template <class Visitor>
  void for_each_tensor(Visitor&& visit) const {
    visit_tensors(*this, visit);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_tensor([&](std::string_view, auto values) { n += values.size(); });
    return n;
  }

 private:
  template <class Self, class Visitor>
  static void visit_tensors(Self& self, Visitor& visit) {
    using Span = std::conditional_t<std::is_const_v<Self>, std::span<const double>, std::span<double>>;
    auto as_span = [](auto& tensor) { return Span(tensor.data(), static_cast<std::size_t>(tensor.size())); };
    for (std::size_t j = 0; j < kNumStreams; ++j) {
      const std::string prefix = "embed." + std::string(kStreams[j].name);
      visit(prefix + ".weight", as_span(self.embed[j].weight));
      visit(prefix + ".bias", as_span(self.embed[j].bias));
    }
    if (self.has_intra) {
      for (std::size_t j = 0; j < kNumStreams; ++j) {
        const std::string prefix = "intra." + std::string(kStreams[j].name);
        visit(prefix + ".w_a", as_span(self.intra[j].w_a));
        visit(prefix + ".b_a", as_span(self.intra[j].b_a));
        visit(prefix + ".w_c", as_span(self.intra[j].w_c));
      }
    }
    visit(std::string("inter.w_a"), as_span(self.inter.w_a));
    visit(std::string("inter.b_a"), as_span(self.inter.b_a));
    visit(std::string("inter.w_c"), as_span(self.inter.w_c));
    visit(std::string("head.weight"), as_span(self.head_w));
    visit(std::string("head.bias"), as_span(self.head_b));
  }
};

namespace detail {

inline void require_finite(const Matrix& m, std::string_view layer) {
  if (!m.allFinite()) throw NonFiniteValue("non-finite activation in layer " + std::string(layer));
}

/// Row-wise softmax with max subtraction.
inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out = logits;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double peak = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - peak).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

}  // namespace detail

struct AttentionCache {
  Matrix input;  // y
  Matrix gate;   // tanh(W_a y + b_a)
  Matrix probs;  // softmax(W_c^T gate)
};

/// Batched attention: rows of `y` are samples.
inline Matrix attention_forward(const AttentionParams& p, const Matrix& y, AttentionCache* cache = nullptr) {
  Matrix gate = ((y * p.w_a.transpose()).rowwise() + p.b_a.transpose()).array().tanh().matrix();
  Matrix probs = detail::softmax_rows(gate * p.w_c);
  Matrix out = probs.cwiseProduct(y);
  if (cache) *cache = {y, std::move(gate), std::move(probs)};
  return out;
}

/// Accumulates parameter gradients into `grad`; returns d loss / d y.
inline Matrix attention_backward(const AttentionParams& p, const AttentionCache& cache, const Matrix& grad_out,
                                 AttentionParams& grad) {
  Matrix grad_input = grad_out.cwiseProduct(cache.probs);
  const Matrix grad_probs = grad_out.cwiseProduct(cache.input);
  const Vector dot = grad_probs.cwiseProduct(cache.probs).rowwise().sum();
  const Matrix grad_logits = cache.probs.cwiseProduct(grad_probs.colwise() - dot);
  grad.w_c.noalias() += cache.gate.transpose() * grad_logits;
  const Matrix grad_gate = grad_logits * p.w_c.transpose();
  const Matrix grad_pre = grad_gate.cwiseProduct((1.0 - cache.gate.array().square()).matrix());
  grad.w_a.noalias() += grad_pre.transpose() * cache.input;
  grad.b_a += grad_pre.colwise().sum().transpose();
  grad_input.noalias() += grad_pre * p.w_a;
  return grad_input;
}

/// Single-vector attention with shape and finiteness checks.
inline Vector elementwise_attention(const AttentionParams& p, const Vector& y) {
  const auto d = static_cast<Eigen::Index>(p.dim());
  if (p.w_a.rows() != d || p.w_a.cols() != d || p.w_c.rows() != d || p.w_c.cols() != d)
    throw ShapeMismatch("attention parameters are not square in the embedding dimension");
  if (y.size() != d)
    throw ShapeMismatch("attention input has length " + std::to_string(y.size()) + ", expected " + std::to_string(d));
  if (!y.allFinite()) throw NonFiniteValue("non-finite attention input");
  return attention_forward(p, y.transpose()).transpose();
}

/// Attention weights alone (before the element-wise product).
inline Vector attention_weights(const AttentionParams& p, const Vector& y) {
  AttentionCache cache;
  attention_forward(p, y.transpose(), &cache);
  return cache.probs.row(0).transpose();
}

struct ForwardCache {
  std::array<Matrix, kNumStreams> inputs;  // standardized stream inputs
  std::array<Matrix, kNumStreams> pre;     // embedding pre-activations
  std::array<AttentionCache, kNumStreams> intra;
  AttentionCache inter;
  Matrix attended;  // inter-stream output
  Matrix probs;
};

/// One named activation in forward order.
struct TraceEntry {
  std::string layer;
  Vector values;
};

namespace detail {

inline void check_ablation(const DepthModelParams& p, bool ablate_intra) {
  if (!ablate_intra && !p.has_intra)
    throw ShapeMismatch("model has no intra-stream attention; evaluate it with ablation enabled");
}

inline Matrix standardize(const DepthModelParams& p, const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c)
    out.col(c) = (x.col(c).array() - p.feature_mean[c]) / p.feature_scale[c];
  return out;
}

}  // namespace detail

/// Batched forward pass over raw (unstandardized) features, one row per sample.
/// Returns class probabilities, one row per sample.
inline Matrix forward_batch(const DepthModelParams& p, const Matrix& features, bool ablate_intra,
                            ForwardCache* cache = nullptr, std::vector<TraceEntry>* trace = nullptr) {
  detail::check_ablation(p, ablate_intra);
  if (features.cols() != static_cast<Eigen::Index>(kNumFeatures))
    throw ShapeMismatch("expected " + std::to_string(kNumFeatures) + " feature columns");
  detail::require_finite(features, "input");
  const auto d = static_cast<Eigen::Index>(p.embed_dim);
  const Matrix x = detail::standardize(p, features);
  auto record = [&](std::string layer, const Matrix& m) {
    if (trace) trace->push_back({std::move(layer), m.row(0).transpose()});
  };

  Matrix concat(x.rows(), static_cast<Eigen::Index>(kNumStreams) * d);
  for (std::size_t j = 0; j < kNumStreams; ++j) {
    const auto& spec = kStreams[j];
    const std::string name(spec.name);
    Matrix input = x.middleCols(static_cast<Eigen::Index>(spec.offset), static_cast<Eigen::Index>(spec.input_dim));
    Matrix pre = (input * p.embed[j].weight).rowwise() + p.embed[j].bias.transpose();
    Matrix embedded = pre.cwiseMax(0.0);
    detail::require_finite(embedded, "embed." + name);
    record("embed." + name, embedded);
    Matrix stream_out;
    if (ablate_intra) {
      stream_out = std::move(embedded);
    } else {
      stream_out = attention_forward(p.intra[j], embedded, cache ? &cache->intra[j] : nullptr);
      detail::require_finite(stream_out, "intra." + name);
      record("intra." + name, stream_out);
    }
    concat.middleCols(static_cast<Eigen::Index>(j) * d, d) = stream_out;
    if (cache) {
      cache->inputs[j] = std::move(input);
      cache->pre[j] = std::move(pre);
    }
  }
  Matrix attended = attention_forward(p.inter, concat, cache ? &cache->inter : nullptr);
  detail::require_finite(attended, "inter");
  record("inter", attended);
  const Matrix logits = (attended * p.head_w).rowwise() + p.head_b.transpose();
  detail::require_finite(logits, "head");
  record("head", logits);
  Matrix probs = detail::softmax_rows(logits);
  record("softmax", probs);
  if (cache) {
    cache->attended = std::move(attended);
    cache->probs = probs;
  }
  return probs;
}

inline Matrix features_matrix(std::span<const LabeledSample> samples) {
  Matrix x(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(kNumFeatures));
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t f = 0; f < kNumFeatures; ++f)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = samples[i].features[f];
  return x;
}

using Probabilities = std::array<double, kNumLabels>;

struct ForwardResult {
  Probabilities probs{};
  std::vector<TraceEntry> trace;
};

/// Single-sample forward pass with an activation trace.
inline ForwardResult forward(const DepthModelParams& p, std::span<const double, kNumFeatures> features,
                             bool ablate_intra) {
  Matrix x(1, static_cast<Eigen::Index>(kNumFeatures));
  for (std::size_t f = 0; f < kNumFeatures; ++f) x(0, static_cast<Eigen::Index>(f)) = features[f];
  ForwardResult result;
  const Matrix probs = forward_batch(p, x, ablate_intra, nullptr, &result.trace);
  for (int k = 0; k < kNumLabels; ++k) result.probs[k] = probs(0, k);
  return result;
}

/// Single-sample class probabilities without tracing.
inline Probabilities predict(const DepthModelParams& p, std::span<const double, kNumFeatures> features,
                             bool ablate_intra) {
  Matrix x(1, static_cast<Eigen::Index>(kNumFeatures));
  for (std::size_t f = 0; f < kNumFeatures; ++f) x(0, static_cast<Eigen::Index>(f)) = features[f];
  const Matrix probs = forward_batch(p, x, ablate_intra);
  return {probs(0, 0), probs(0, 1), probs(0, 2)};
}

/// Index of the largest probability; ties go to the lowest index.
template <class Row>
int argmax(const Row& probs) {
  int best = 0;
  for (int k = 1; k < kNumLabels; ++k)
    if (probs[k] > probs[best]) best = k;
  return best;
}

struct LossAndGrads {
  double loss = 0.0;
  DepthModelParams grads;
  Matrix probs;  // batch predictions, reused for running accuracy
};

/// Mean cross-entropy over the batch and its exact gradient.
inline LossAndGrads loss_and_grads(const DepthModelParams& p, std::span<const LabeledSample> batch,
                                   bool ablate_intra) {
  if (batch.empty()) throw InvalidArgument("loss_and_grads needs a non-empty batch");
  ForwardCache cache;
  const Matrix x = features_matrix(batch);
  Matrix probs = forward_batch(p, x, ablate_intra, &cache);
  const auto n = static_cast<Eigen::Index>(batch.size());
  const double inv_n = 1.0 / static_cast<double>(n);

  LossAndGrads out;
  out.grads = p.zeros_like();
  DepthModelParams& g = out.grads;

  // Loss through log-sum-exp of the logits keeps it exact for tiny probabilities.
  const Matrix logits = (cache.attended * p.head_w).rowwise() + p.head_b.transpose();
  Matrix grad_logits = probs;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int label = static_cast<int>(batch[static_cast<std::size_t>(i)].label);
    const double peak = logits.row(i).maxCoeff();
    const double log_norm = peak + std::log((logits.row(i).array() - peak).exp().sum());
    loss += log_norm - logits(i, label);
    grad_logits(i, label) -= 1.0;
  }
  out.loss = loss * inv_n;
  grad_logits *= inv_n;

  g.head_w.noalias() += cache.attended.transpose() * grad_logits;
  g.head_b += grad_logits.colwise().sum().transpose();
  const Matrix grad_attended = grad_logits * p.head_w.transpose();
  const Matrix grad_concat = attention_backward(p.inter, cache.inter, grad_attended, g.inter);

  const auto d = static_cast<Eigen::Index>(p.embed_dim);
  for (std::size_t j = 0; j < kNumStreams; ++j) {
    Matrix grad_stream = grad_concat.middleCols(static_cast<Eigen::Index>(j) * d, d);
    if (!ablate_intra) grad_stream = attention_backward(p.intra[j], cache.intra[j], grad_stream, g.intra[j]);
    const Matrix grad_pre = grad_stream.cwiseProduct((cache.pre[j].array() > 0.0).cast<double>().matrix());
    g.embed[j].weight.noalias() += cache.inputs[j].transpose() * grad_pre;
    g.embed[j].bias += grad_pre.colwise().sum().transpose();
  }
  out.probs = std::move(probs);
  return out;
}

}  // namespace gazetrack
