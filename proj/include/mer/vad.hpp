#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mer/media.hpp"

namespace mer {

struct VadConfig {
  double frame_ms = 30.0;
  double hop_ms = 10.0;
  double floor_percentile = 10.0;
  double onset_db_above_floor = 10.0;
  double min_speech_ms = 250.0;
  double min_silence_ms = 300.0;
  double pad_ms = 100.0;

  // Throws Error(InvalidConfig) when an invariant is broken.
  void validate() const;
};

struct UtteranceSpan {
  double start_s = 0.0;
  double end_s = 0.0;

  double length_s() const { return end_s - start_s; }
  friend bool operator==(const UtteranceSpan&, const UtteranceSpan&) = default;
};

// RMS level in dB (20*log10(rms + 1e-10)) per analysis frame. Frames start
// every hop_ms and span frame_ms; a trailing partial frame is dropped.
std::vector<double> frame_energies(const AudioTrack& track, const VadConfig& cfg);

// Percentile with linear interpolation between order statistics.
double percentile(std::vector<double> values, double pct);

// Relative-threshold speech detection with duration filtering, gap merging
// and padding. `energies` must come from frame_energies with the same cfg.
std::vector<UtteranceSpan> detect_spans(const std::vector<double>& energies,
                                        const VadConfig& cfg, double duration_s);

// Sorts, clips to [0, duration_s], drops empty spans and merges overlaps.
std::vector<UtteranceSpan> normalize_spans(std::vector<UtteranceSpan> spans,
                                           double duration_s);

class VadBackend {
 public:
  virtual ~VadBackend() = default;
  virtual std::vector<UtteranceSpan> detect(const AudioTrack& track) = 0;
  virtual std::string name() const = 0;
};

class EnergyVad final : public VadBackend {
 public:
  explicit EnergyVad(VadConfig cfg = {});
  std::vector<UtteranceSpan> detect(const AudioTrack& track) override;
  std::string name() const override { return "energy"; }
  const VadConfig& config() const { return cfg_; }

 private:
  VadConfig cfg_;
};

// Adapter for an external VAD process. The command template receives
// `{audio}` (a mono WAV path). It must print
// {"spans": [{"start_s": .., "end_s": ..}, ...]} on stdout.
class ExternalVad final : public VadBackend {
 public:
  explicit ExternalVad(std::string command_template);
  std::vector<UtteranceSpan> detect(const AudioTrack& track) override;
  std::string name() const override { return "external"; }

 private:
  std::string command_;
};

// Runs the backend and normalizes its output. Backend errors surface as
// Error(BackendFailure).
std::vector<UtteranceSpan> segment(const AudioTrack& track, VadBackend& backend);

// [{"start_s":..,"end_s":..}] with 6 decimals.
std::string spans_to_json(const std::vector<UtteranceSpan>& spans);

}  // namespace mer
