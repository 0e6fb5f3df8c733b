#pragma once

// Plain-loop reimplementation of the depth model forward pass, used as an
// oracle for the Eigen implementation. Reads parameters only.

#include <cmath>
#include <vector>

#include "gazetrack/depth_model.hpp"

namespace reference {

using Vec = std::vector<double>;

inline Vec softmax(const Vec& z) {
  double peak = z[0];
  for (double v : z) peak = std::max(peak, v);
  Vec out(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] - peak);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

// softmax(W_c^T tanh(W_a y + b_a)) * y, one scalar at a time.
inline Vec attention(const gazetrack::AttentionParams& p, const Vec& y) {
  const std::size_t d = y.size();
  Vec gate(d);
  for (std::size_t i = 0; i < d; ++i) {
    double acc = p.b_a(static_cast<Eigen::Index>(i));
    for (std::size_t k = 0; k < d; ++k) acc += p.w_a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) * y[k];
    gate[i] = std::tanh(acc);
  }
  Vec logits(d);
  for (std::size_t j = 0; j < d; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) acc += p.w_c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * gate[i];
    logits[j] = acc;
  }
  const Vec w = softmax(logits);
  Vec out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = w[i] * y[i];
  return out;
}

inline Vec forward(const gazetrack::DepthModelParams& p, const std::array<double, gazetrack::kNumFeatures>& f,
                   bool ablate) {
  using gazetrack::kStreams;
  Vec concat;
  for (std::size_t j = 0; j < kStreams.size(); ++j) {
    const auto& s = kStreams[j];
    Vec h(p.embed_dim);
    for (std::size_t o = 0; o < p.embed_dim; ++o) {
      double acc = p.embed[j].bias(static_cast<Eigen::Index>(o));
      for (std::size_t i = 0; i < s.input_dim; ++i) {
        const std::size_t c = s.offset + i;
        const double x = (f[c] - p.feature_mean[c]) / p.feature_scale[c];
        acc += p.embed[j].weight(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(o)) * x;
      }
      h[o] = acc > 0.0 ? acc : 0.0;
    }
    const Vec a = ablate ? h : attention(p.intra[j], h);
    concat.insert(concat.end(), a.begin(), a.end());
  }
  const Vec attended = attention(p.inter, concat);
  Vec logits(gazetrack::kNumLabels);
  for (int k = 0; k < gazetrack::kNumLabels; ++k) {
    double acc = p.head_b(k);
    for (std::size_t i = 0; i < attended.size(); ++i) acc += p.head_w(static_cast<Eigen::Index>(i), k) * attended[i];
    logits[static_cast<std::size_t>(k)] = acc;
  }
  return softmax(logits);
}

inline double loss(const gazetrack::DepthModelParams& p, std::span<const gazetrack::LabeledSample> batch, bool ablate) {
  double total = 0.0;
  for (const auto& s : batch) total -= std::log(forward(p, s.features, ablate)[static_cast<std::size_t>(s.label)]);
  return total / static_cast<double>(batch.size());
}

}  // namespace reference
