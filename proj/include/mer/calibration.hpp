#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "mer/emotions.hpp"

namespace mer {

using Thresholds = EmotionVector;

// Emotion e is active iff probs[e] > thresholds[e] (strict). Returns emotion
// indices in ascending order.
std::vector<std::size_t> apply_thresholds(const EmotionVector& probs, const Thresholds& t);

// 2TP / (2TP + FP + FN); 0 when the denominator is 0.
double f1_binary(std::span<const bool> pred, std::span<const bool> label);

// Grid k/100 for k = 1..99.
std::vector<double> default_grid();

struct CalibrationResult {
  Thresholds thresholds{};
  EmotionVector best_f1{};
};

// Per emotion, the grid threshold maximizing F1 under the strict rule; ties go
// to the smallest threshold.
CalibrationResult calibrate(const std::vector<EmotionVector>& probs,
                            const std::vector<EmotionVector>& labels,
                            const std::vector<double>& grid = default_grid());

struct EmotionMetrics {
  double accuracy = 0.0;
  double f1_positive = 0.0;
  double f1_weighted = 0.0;
};

struct EvalReport {
  std::array<EmotionMetrics, kNumEmotions> per_emotion{};
  EmotionMetrics mean;  // unweighted mean over emotions
};

EvalReport evaluate(const std::vector<EmotionVector>& probs,
                    const std::vector<EmotionVector>& labels, const Thresholds& t);

// {"emotions": [...], "thresholds": [6 reals]}
Thresholds load_thresholds(const std::filesystem::path& path);
void save_thresholds(const std::filesystem::path& path, const Thresholds& t);

}  // namespace mer
