#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mer/emotions.hpp"
#include "mer/tensor.hpp"

namespace mer {

struct FusionConfig {
  std::size_t d_visual = 512;
  std::size_t d_acoustic = 768;
  std::size_t d_textual = 768;
  std::size_t conv_channels = 128;
  std::size_t kernel = 3;
  std::size_t hidden = 256;
  std::size_t n_emotions = kNumEmotions;

  void validate() const;
  friend bool operator==(const FusionConfig&, const FusionConfig&) = default;
};

// Per-modality temporal convolution; w is C x (D*k), element (c, d*k + j).
struct ConvLayer {
  Matrix w;
  std::vector<double> b;

  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

struct FusionWeights {
  ConvLayer conv_vis;
  ConvLayer conv_aco;
  ConvLayer conv_txt;
  Matrix lin1_w;  // H x 3C
  std::vector<double> lin1_b;
  Matrix lin2_w;  // 6 x H
  std::vector<double> lin2_b;

  // All-zero weights shaped for cfg.
  static FusionWeights zeros(const FusionConfig& cfg);
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
  static FusionWeights random(const FusionConfig& cfg, std::uint64_t seed);

  void check(const FusionConfig& cfg) const;
  friend bool operator==(const FusionWeights&, const FusionWeights&) = default;
};

// Visits every tensor as (archive name, shape, values) in a fixed order:
// fus.conv.{vis,aco,txt}.{w,b}, fus.lin1.{w,b}, fus.lin2.{w,b}.
using TensorVisitor = std::function<void(const std::string& name,
                                         const std::vector<std::size_t>& shape,
                                         std::span<double> values)>;
void for_each_tensor(FusionWeights& w, const FusionConfig& cfg, const TensorVisitor& visit);

struct Prediction {
  EmotionVector logits{};
  EmotionVector probs{};
};

double sigmoid(double x);

// out[t, c] = b[c] + sum_{d, j} W[c, d, j] * x[t + j - (k-1)/2, d], zero padded.
Matrix conv1d_same(const Matrix& x, const ConvLayer& layer, std::size_t kernel);

// Column means of a T x C matrix.
std::vector<double> temporal_mean(const Matrix& x);

// Intermediate activations kept for backpropagation.
struct ForwardTrace {
  std::vector<double> fused;   // concat of the three temporal means (3C)
  std::vector<double> hidden_pre;  // W1 z + b1
  std::vector<double> hidden;      // relu(hidden_pre)
  Prediction prediction;
};

ForwardTrace forward_trace(const Matrix& visual, const Matrix& acoustic, const Matrix& textual,
                           const FusionWeights& w, const FusionConfig& cfg);

Prediction forward(const Matrix& visual, const Matrix& acoustic, const Matrix& textual,
                   const FusionWeights& w, const FusionConfig& cfg);

// Mean binary cross-entropy over the six emotions, probs clamped to
// [1e-7, 1 - 1e-7].
double bce_loss(const EmotionVector& probs, const EmotionVector& labels);

}  // namespace mer
