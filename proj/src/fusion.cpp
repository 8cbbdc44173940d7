#include "mer/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "mer/error.hpp"
#include "mer/kernels.hpp"
#include "mer/rng.hpp"

namespace mer {
namespace {

void expect(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::ShapeMismatch, what);
}

ConvLayer zero_conv(std::size_t channels, std::size_t dims, std::size_t kernel) {
  return {Matrix(channels, dims * kernel), std::vector<double>(channels, 0.0)};
}

void fill_uniform(std::span<double> values, double bound, Rng& rng) {
  for (double& v : values) v = rng.uniform(-bound, bound);
}

void check_conv(const ConvLayer& l, std::size_t c, std::size_t d, std::size_t k,
                const char* name) {
  expect(l.w.rows() == c && l.w.cols() == d * k && l.b.size() == c,
         std::string(name) + " shape does not match config");
}

}  // namespace

void FusionConfig::validate() const {
  if (kernel % 2 == 0 || kernel == 0) {
    throw Error(ErrorKind::InvalidConfig, "fusion kernel must be odd");
  }
  if (conv_channels == 0 || hidden == 0 || d_visual == 0 || d_acoustic == 0 ||
      d_textual == 0) {
    throw Error(ErrorKind::InvalidConfig, "fusion dims must be positive");
  }
  if (n_emotions != kNumEmotions) {
    throw Error(ErrorKind::InvalidConfig, "fusion head predicts exactly 6 emotions");
  }
}

FusionWeights FusionWeights::zeros(const FusionConfig& cfg) {
  cfg.validate();
  const std::size_t c = cfg.conv_channels;
  return {zero_conv(c, cfg.d_visual, cfg.kernel),
          zero_conv(c, cfg.d_acoustic, cfg.kernel),
          zero_conv(c, cfg.d_textual, cfg.kernel),
          Matrix(cfg.hidden, 3 * c),
          std::vector<double>(cfg.hidden, 0.0),
          Matrix(cfg.n_emotions, cfg.hidden),
          std::vector<double>(cfg.n_emotions, 0.0)};
}

FusionWeights FusionWeights::random(const FusionConfig& cfg, std::uint64_t seed) {
  FusionWeights w = zeros(cfg);
  Rng rng(seed);
  const auto bound = [](std::size_t fan_in) {
    return 1.0 / std::sqrt(static_cast<double>(fan_in));
  };
  fill_uniform(w.conv_vis.w.data(), bound(cfg.d_visual * cfg.kernel), rng);
  fill_uniform(w.conv_aco.w.data(), bound(cfg.d_acoustic * cfg.kernel), rng);
  fill_uniform(w.conv_txt.w.data(), bound(cfg.d_textual * cfg.kernel), rng);
  fill_uniform(w.lin1_w.data(), bound(3 * cfg.conv_channels), rng);
  fill_uniform(w.lin2_w.data(), bound(cfg.hidden), rng);
  return w;
}

void FusionWeights::check(const FusionConfig& cfg) const {
  const std::size_t c = cfg.conv_channels;
  check_conv(conv_vis, c, cfg.d_visual, cfg.kernel, "fus.conv.vis");
  check_conv(conv_aco, c, cfg.d_acoustic, cfg.kernel, "fus.conv.aco");
  check_conv(conv_txt, c, cfg.d_textual, cfg.kernel, "fus.conv.txt");
  expect(lin1_w.rows() == cfg.hidden && lin1_w.cols() == 3 * c && lin1_b.size() == cfg.hidden,
         "fus.lin1 shape does not match config");
  expect(lin2_w.rows() == cfg.n_emotions && lin2_w.cols() == cfg.hidden &&
             lin2_b.size() == cfg.n_emotions,
         "fus.lin2 shape does not match config");
}

void for_each_tensor(FusionWeights& w, const FusionConfig& cfg, const TensorVisitor& visit) {
  const std::size_t c = cfg.conv_channels;
  const std::size_t k = cfg.kernel;
  visit("fus.conv.vis.w", {c, cfg.d_visual, k}, w.conv_vis.w.data());
  visit("fus.conv.vis.b", {c}, w.conv_vis.b);
  visit("fus.conv.aco.w", {c, cfg.d_acoustic, k}, w.conv_aco.w.data());
  visit("fus.conv.aco.b", {c}, w.conv_aco.b);
  visit("fus.conv.txt.w", {c, cfg.d_textual, k}, w.conv_txt.w.data());
  visit("fus.conv.txt.b", {c}, w.conv_txt.b);
  visit("fus.lin1.w", {cfg.hidden, 3 * c}, w.lin1_w.data());
  visit("fus.lin1.b", {cfg.hidden}, w.lin1_b);
  visit("fus.lin2.w", {cfg.n_emotions, cfg.hidden}, w.lin2_w.data());
  visit("fus.lin2.b", {cfg.n_emotions}, w.lin2_b);
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix conv1d_same(const Matrix& x, const ConvLayer& layer, std::size_t kernel) {
  return kernels::conv1d_same(x, layer.w, layer.b, kernel);
}

std::vector<double> temporal_mean(const Matrix& x) {
  if (x.rows() == 0) throw Error(ErrorKind::EmptySequence, "temporal_mean of zero rows");
  std::vector<double> mean(x.cols(), 0.0);
  for (std::size_t t = 0; t < x.rows(); ++t) {
    const auto r = x.row(t);
    for (std::size_t c = 0; c < x.cols(); ++c) mean[c] += r[c];
  }
  for (double& m : mean) m /= static_cast<double>(x.rows());
  return mean;
}

ForwardTrace forward_trace(const Matrix& visual, const Matrix& acoustic, const Matrix& textual,
                           const FusionWeights& w, const FusionConfig& cfg) {
  expect(visual.cols() == cfg.d_visual, "visual embedding width mismatch");
  expect(acoustic.cols() == cfg.d_acoustic, "acoustic embedding width mismatch");
  expect(textual.cols() == cfg.d_textual, "textual embedding width mismatch");
  w.check(cfg);

  ForwardTrace tr;
  tr.fused.reserve(3 * cfg.conv_channels);
  for (const auto& [x, layer] : {std::pair{&visual, &w.conv_vis}, std::pair{&acoustic, &w.conv_aco},
                                 std::pair{&textual, &w.conv_txt}}) {
    const auto mean = temporal_mean(conv1d_same(*x, *layer, cfg.kernel));
    tr.fused.insert(tr.fused.end(), mean.begin(), mean.end());
  }

  tr.hidden_pre.assign(cfg.hidden, 0.0);
  tr.hidden.assign(cfg.hidden, 0.0);
  for (std::size_t h = 0; h < cfg.hidden; ++h) {
    double acc = w.lin1_b[h];
    const auto row = w.lin1_w.row(h);
    for (std::size_t i = 0; i < tr.fused.size(); ++i) acc += row[i] * tr.fused[i];
    tr.hidden_pre[h] = acc;
    tr.hidden[h] = acc > 0.0 || std::isnan(acc) ? acc : 0.0;
  }
  for (std::size_t e = 0; e < cfg.n_emotions; ++e) {
    double acc = w.lin2_b[e];
    const auto row = w.lin2_w.row(e);
    for (std::size_t h = 0; h < cfg.hidden; ++h) acc += row[h] * tr.hidden[h];
    tr.prediction.logits[e] = acc;
    tr.prediction.probs[e] = sigmoid(acc);
  }
  return tr;
}

Prediction forward(const Matrix& visual, const Matrix& acoustic, const Matrix& textual,
                   const FusionWeights& w, const FusionConfig& cfg) {
  return forward_trace(visual, acoustic, textual, w, cfg).prediction;
}

double bce_loss(const EmotionVector& probs, const EmotionVector& labels) {
  constexpr double kClamp = 1e-7;
  double total = 0.0;
  for (std::size_t e = 0; e < kNumEmotions; ++e) {
    const double p = std::clamp(probs[e], kClamp, 1.0 - kClamp);
    const double y = labels[e];
    total += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
  }
  return total / static_cast<double>(kNumEmotions);
}

}  // namespace mer
