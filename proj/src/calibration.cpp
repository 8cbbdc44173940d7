#include "mer/calibration.hpp"

#include <fstream>

#include <json.hpp>

#include "mer/error.hpp"

using nlohmann::json;

namespace mer {
namespace {

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

double f1_from(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

void check_rows(const std::vector<EmotionVector>& probs, const std::vector<EmotionVector>& labels) {
  if (probs.size() != labels.size()) {
    throw Error(ErrorKind::LengthMismatch, std::to_string(probs.size()) + " prob rows vs " +
                                               std::to_string(labels.size()) + " label rows");
  }
  if (probs.empty()) throw Error(ErrorKind::InvalidInput, "need at least one sample");
}

Counts count(const std::vector<EmotionVector>& probs, const std::vector<EmotionVector>& labels,
             std::size_t e, double threshold) {
  Counts c;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool p = probs[i][e] > threshold;
    const bool y = labels[i][e] > 0.5;
    if (p && y) ++c.tp;
    else if (p) ++c.fp;
    else if (y) ++c.fn;
    else ++c.tn;
  }
  return c;
}

}  // namespace

std::vector<std::size_t> apply_thresholds(const EmotionVector& probs, const Thresholds& t) {
  std::vector<std::size_t> active;
  for (std::size_t e = 0; e < kNumEmotions; ++e) {
    if (probs[e] > t[e]) active.push_back(e);
  }
  return active;
}

double f1_binary(std::span<const bool> pred, std::span<const bool> label) {
  if (pred.size() != label.size()) {
    throw Error(ErrorKind::LengthMismatch, "f1_binary: prediction and label lengths differ");
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] && label[i]) ++tp;
    else if (pred[i]) ++fp;
    else if (label[i]) ++fn;
  }
  return f1_from(tp, fp, fn);
}

std::vector<double> default_grid() {
  std::vector<double> grid;
  for (int k = 1; k <= 99; ++k) grid.push_back(k / 100.0);
  return grid;
}

CalibrationResult calibrate(const std::vector<EmotionVector>& probs,
                            const std::vector<EmotionVector>& labels,
                            const std::vector<double>& grid) {
  check_rows(probs, labels);
  if (grid.empty()) throw Error(ErrorKind::InvalidInput, "empty threshold grid");
  CalibrationResult result;
  // Emotions are independent; each iteration writes only its own slot.
#pragma omp parallel for schedule(static)
  for (int ei = 0; ei < static_cast<int>(kNumEmotions); ++ei) {
    const auto e = static_cast<std::size_t>(ei);
    double best = -1.0;
    double best_t = grid.front();
    for (double t : grid) {
      const Counts c = count(probs, labels, e, t);
      const double f1 = f1_from(c.tp, c.fp, c.fn);
      if (f1 > best) {
        best = f1;
        best_t = t;
      } else if (f1 == best && t < best_t) {
        best_t = t;
      }
    }
    result.thresholds[e] = best_t;
    result.best_f1[e] = best;
  }
  return result;
}

EvalReport evaluate(const std::vector<EmotionVector>& probs,
                    const std::vector<EmotionVector>& labels, const Thresholds& t) {
  check_rows(probs, labels);
  EvalReport report;
  const double n = static_cast<double>(probs.size());
  for (std::size_t e = 0; e < kNumEmotions; ++e) {
    const Counts c = count(probs, labels, e, t[e]);
    auto& m = report.per_emotion[e];
    m.accuracy = static_cast<double>(c.tp + c.tn) / n;
    m.f1_positive = f1_from(c.tp, c.fp, c.fn);
    // Negative class as positive: TN are hits, FN are false alarms, FP misses.
    const double f1_negative = f1_from(c.tn, c.fn, c.fp);
    const double n_pos = static_cast<double>(c.tp + c.fn);
    const double n_neg = static_cast<double>(c.tn + c.fp);
    m.f1_weighted = (n_pos * m.f1_positive + n_neg * f1_negative) / n;
    report.mean.accuracy += m.accuracy;
    report.mean.f1_positive += m.f1_positive;
    report.mean.f1_weighted += m.f1_weighted;
  }
  report.mean.accuracy /= kNumEmotions;
  report.mean.f1_positive /= kNumEmotions;
  report.mean.f1_weighted /= kNumEmotions;
  return report;
}

Thresholds load_thresholds(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  try {
    const json doc = json::parse(in);
    const auto names = doc.at("emotions").get<std::vector<std::string>>();
    const auto values = doc.at("thresholds").get<std::vector<double>>();
    if (names.size() != kNumEmotions || values.size() != kNumEmotions ||
        !std::equal(names.begin(), names.end(), kEmotionNames.begin())) {
      throw Error(ErrorKind::InvalidConfig,
                  path.string() + ": expected 6 thresholds in the canonical emotion order");
    }
    Thresholds t{};
    std::copy(values.begin(), values.end(), t.begin());
    return t;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  }
}

void save_thresholds(const std::filesystem::path& path, const Thresholds& t) {
  json names = json::array();
  for (auto e : kEmotionNames) names.push_back(std::string(e));
  std::ofstream(path) << json{{"emotions", names}, {"thresholds", t}}.dump() << '\n';
}

}  // namespace mer
