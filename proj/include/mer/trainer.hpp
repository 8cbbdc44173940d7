#pragma once

#include <map>
#include <string>
#include <vector>

#include "mer/emotions.hpp"
#include "mer/error.hpp"
#include "mer/fusion.hpp"

namespace mer {

struct TrainingSample {
  Matrix visual;
  Matrix acoustic;
  Matrix textual;
  EmotionVector labels{};
};

using Dataset = std::vector<TrainingSample>;

struct Gradients {
  FusionWeights grad;
  double loss = 0.0;  // mean batch BCE at the given weights
};

// Exact gradients of the mean batch BCE with respect to every fusion tensor.
// The loss derivative at the logit is (p - y) / 6 (unclamped sigmoid).
Gradients backward(const Dataset& batch, const FusionWeights& w, const FusionConfig& cfg);

// Mean batch BCE without gradients.
double batch_loss(const Dataset& batch, const FusionWeights& w, const FusionConfig& cfg);

// Parameter groups for learning-rate scaling.
inline constexpr const char* kTensorGroups[] = {"fus.conv.vis", "fus.conv.aco", "fus.conv.txt",
                                                "fus.lin1", "fus.lin2"};

// Group of an archive tensor name (name without its trailing ".w"/".b").
std::string tensor_group(const std::string& tensor_name);

struct TrainHyper {
  double lr = 0.5;
  std::size_t epochs = 200;
  // Missing groups use 1.0.
  std::map<std::string, double> group_lr_scale;
};

struct TrainResult {
  FusionWeights weights;
  // loss_trace[i] is the loss before update i; the last entry is the loss of
  // the returned weights, so the trace has epochs + 1 entries.
  std::vector<double> loss_trace;
};

class NonFiniteLossError : public Error {
 public:
  NonFiniteLossError(std::size_t epoch, std::vector<double> trace)
      : Error(ErrorKind::NonFiniteLoss, "loss or weights became non-finite at epoch " + std::to_string(epoch)),
        trace_(std::move(trace)) {}
  const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

// Full-batch gradient descent from `initial`.
TrainResult train_head(const Dataset& dataset, const FusionWeights& initial,
                       const FusionConfig& cfg, const TrainHyper& hyper);

}  // namespace mer
