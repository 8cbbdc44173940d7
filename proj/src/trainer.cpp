#include "mer/trainer.hpp"

#include <cmath>

namespace mer {
namespace {

// Accumulates d loss / d (conv layer) given d loss / d (temporal mean).
// Since the mean of a convolution is linear in the taps,
// dW[c, d, j] = g[c] / T * sum_t x[t + j - p, d] over in-range rows.
void conv_grad(const Matrix& x, std::span<const double> g, std::size_t kernel,
               ConvLayer& out) {
  const std::size_t steps = x.rows();
  const std::size_t dims = x.cols();
  const auto half = static_cast<std::ptrdiff_t>(kernel / 2);
  std::vector<double> tap_sum(dims * kernel, 0.0);
  for (std::size_t j = 0; j < kernel; ++j) {
    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - half;
    for (std::size_t t = 0; t < steps; ++t) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + shift;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) continue;
      const auto row = x.row(static_cast<std::size_t>(src));
      for (std::size_t d = 0; d < dims; ++d) tap_sum[d * kernel + j] += row[d];
    }
  }
  const double inv_t = 1.0 / static_cast<double>(steps);
  for (std::size_t c = 0; c < out.b.size(); ++c) {
    out.b[c] += g[c];
    auto wr = out.w.row(c);
    const double scale = g[c] * inv_t;
    if (scale == 0.0) continue;
    for (std::size_t i = 0; i < wr.size(); ++i) wr[i] += scale * tap_sum[i];
  }
}

}  // namespace

std::string tensor_group(const std::string& tensor_name) {
  const auto dot = tensor_name.rfind('.');
  return dot == std::string::npos ? tensor_name : tensor_name.substr(0, dot);
}

double batch_loss(const Dataset& batch, const FusionWeights& w, const FusionConfig& cfg) {
  double total = 0.0;
  for (const auto& s : batch) {
    total += bce_loss(forward(s.visual, s.acoustic, s.textual, w, cfg).probs, s.labels);
  }
  return batch.empty() ? 0.0 : total / static_cast<double>(batch.size());
}

Gradients backward(const Dataset& batch, const FusionWeights& w, const FusionConfig& cfg) {
  Gradients out{FusionWeights::zeros(cfg), 0.0};
  if (batch.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const std::size_t c = cfg.conv_channels;
  FusionWeights& g = out.grad;

  std::vector<double> d_logit(cfg.n_emotions);
  std::vector<double> d_hidden(cfg.hidden);
  std::vector<double> d_fused(3 * c);

  for (const auto& s : batch) {
    const ForwardTrace tr = forward_trace(s.visual, s.acoustic, s.textual, w, cfg);
    out.loss += bce_loss(tr.prediction.probs, s.labels);

    for (std::size_t e = 0; e < cfg.n_emotions; ++e) {
      d_logit[e] = (tr.prediction.probs[e] - s.labels[e]) /
                   static_cast<double>(cfg.n_emotions) * inv_n;
    }

    std::fill(d_hidden.begin(), d_hidden.end(), 0.0);
    for (std::size_t e = 0; e < cfg.n_emotions; ++e) {
      g.lin2_b[e] += d_logit[e];
      auto gw = g.lin2_w.row(e);
      const auto ww = w.lin2_w.row(e);
      for (std::size_t h = 0; h < cfg.hidden; ++h) {
        gw[h] += d_logit[e] * tr.hidden[h];
        d_hidden[h] += ww[h] * d_logit[e];
      }
    }

    std::fill(d_fused.begin(), d_fused.end(), 0.0);
    for (std::size_t h = 0; h < cfg.hidden; ++h) {
      if (!(tr.hidden_pre[h] > 0.0)) continue;
      const double dz = d_hidden[h];
      g.lin1_b[h] += dz;
      auto gw = g.lin1_w.row(h);
      const auto ww = w.lin1_w.row(h);
      for (std::size_t i = 0; i < 3 * c; ++i) {
        gw[i] += dz * tr.fused[i];
        d_fused[i] += ww[i] * dz;
      }
    }

    const std::span<const double> df(d_fused);
    conv_grad(s.visual, df.subspan(0, c), cfg.kernel, g.conv_vis);
    conv_grad(s.acoustic, df.subspan(c, c), cfg.kernel, g.conv_aco);
    conv_grad(s.textual, df.subspan(2 * c, c), cfg.kernel, g.conv_txt);
  }
  out.loss *= inv_n;
  return out;
}

TrainResult train_head(const Dataset& dataset, const FusionWeights& initial,
                       const FusionConfig& cfg, const TrainHyper& hyper) {
  TrainResult result{initial, {}};
  result.loss_trace.reserve(hyper.epochs + 1);

  std::map<std::string, double> scale;
  for (const char* group : kTensorGroups) {
    const auto it = hyper.group_lr_scale.find(group);
    scale[group] = it == hyper.group_lr_scale.end() ? 1.0 : it->second;
  }

  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    Gradients grads = backward(dataset, result.weights, cfg);
    if (!std::isfinite(grads.loss)) {
      throw NonFiniteLossError(epoch, result.loss_trace);
    }
    result.loss_trace.push_back(grads.loss);

    std::vector<std::span<double>> grad_tensors;
    for_each_tensor(grads.grad, cfg,
                    [&](const std::string&, const std::vector<std::size_t>&,
                        std::span<double> values) { grad_tensors.push_back(values); });
    std::size_t idx = 0;
    for_each_tensor(result.weights, cfg,
                    [&](const std::string& name, const std::vector<std::size_t>&,
                        std::span<double> values) {
                      const double step = hyper.lr * scale[tensor_group(name)];
                      const auto gvals = grad_tensors[idx++];
                      if (step == 0.0) return;
                      for (std::size_t i = 0; i < values.size(); ++i) values[i] -= step * gvals[i];
                    });
    bool finite = true;
    for_each_tensor(result.weights, cfg,
                    [&](const std::string&, const std::vector<std::size_t>&,
                        std::span<double> values) {
                      for (double v : values) finite = finite && std::isfinite(v);
                    });
    if (!finite) throw NonFiniteLossError(epoch + 1, result.loss_trace);
  }

  const double final_loss = batch_loss(dataset, result.weights, cfg);
  if (!std::isfinite(final_loss)) {
    throw NonFiniteLossError(hyper.epochs, result.loss_trace);
  }
  result.loss_trace.push_back(final_loss);
  return result;
}

}  // namespace mer
