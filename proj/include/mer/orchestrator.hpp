#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "mer/calibration.hpp"
#include "mer/encoders.hpp"
#include "mer/extraction.hpp"
#include "mer/media.hpp"
#include "mer/model_archive.hpp"
#include "mer/vad.hpp"

namespace mer {

// Which implementation backs each pluggable stage. Commands are subprocess
// templates (see the adapter classes for their placeholders).
struct BackendConfig {
  std::string vad = "energy";  // energy | external
  std::string vad_command;
  std::string face = "center";  // center | external
  std::string face_command;
  std::string stt = "sidecar";  // sidecar | external | none
  std::string stt_command;
  std::string encoder = "reference";  // reference | external
  std::string encoder_command;
  std::string encoder_graph;
  bool encoder_concurrent_safe = false;
};

struct PipelineConfig {
  std::filesystem::path model;
  std::filesystem::path vocab;
  std::filesystem::path thresholds;
  VadConfig vad;
  BackendConfig backends;
  std::uint32_t sample_rate_hz = kDefaultSampleRate;
};

struct InputSummary {
  std::size_t n_real_frames = 0;
  double audio_real_s = 0.0;
  std::size_t n_real_tokens = 0;
};

struct UtteranceResult {
  std::size_t index = 0;
  UtteranceSpan span;
  std::string transcript;
  EmotionVector probs{};
  std::vector<std::size_t> active;
  InputSummary input_summary;
  std::vector<std::string> diagnostics;
};

enum class VideoStatus { Ok, NoSpeech };

struct UtteranceFailure {
  std::size_t index = 0;
  std::string error;
};

struct VideoResult {
  std::vector<UtteranceResult> utterances;
  std::vector<UtteranceFailure> failures;
  EmotionVector avg_probs{};
  std::vector<std::size_t> avg_active;
  VideoStatus status = VideoStatus::Ok;
};

// VAD backend selected by cfg.backends.vad.
std::unique_ptr<VadBackend> make_vad_backend(const PipelineConfig& cfg);

// Elementwise mean; zeros for an empty list.
EmotionVector average_probs(const std::vector<UtteranceResult>& results);

// One NDJSON line (without trailing newline) per event.
using EventSink = std::function<void(const std::string& line)>;

std::string utterance_event(const UtteranceResult& r, const Thresholds& t);
std::string utterance_error_event(std::size_t index, const std::string& error);
std::string final_event(const VideoResult& result);
std::string status_name(VideoStatus status);
std::string format_number(double v);

struct RunControl {
  // Checked before each utterance; when set, run throws Error(Canceled).
  const std::atomic<bool>* cancel = nullptr;
  // Called with each successfully extracted clip before it is encoded.
  std::function<void(std::size_t index, const UtteranceClip& clip)> on_clip;
  // Called after each utterance event is emitted.
  std::function<void(std::size_t index)> after_utterance;
};

class Pipeline {
 public:
  Pipeline(ModelWeights model, Vocab vocab, Thresholds thresholds, PipelineConfig cfg);

  // Loads model, vocab and thresholds from the paths in cfg.
  static std::shared_ptr<const Pipeline> load(const PipelineConfig& cfg);

  // segment -> per utterance (extract, encode, fuse, threshold) -> events in
  // index order -> one final event. The sink has seen every event when this
  // returns.
  VideoResult run(const MediaBundle& bundle, const EventSink& sink,
                  const RunControl& control = {}) const;

  // Same as run, but stage settings (VAD parameters, backends) come from
  // `cfg`; model, vocab and thresholds stay those loaded at construction.
  VideoResult run_with(const PipelineConfig& cfg, const MediaBundle& bundle,
                       const EventSink& sink, const RunControl& control = {}) const;

  const PipelineConfig& config() const { return cfg_; }
  const Thresholds& thresholds() const { return thresholds_; }
  const Vocab& vocab() const { return vocab_; }
  const ModelWeights& model() const { return model_; }

 private:
  UtteranceResult process_utterance(const PipelineConfig& cfg, const MediaBundle& bundle,
                                    const UtteranceSpan& span, std::size_t index,
                                    FaceCropBackend& face, SttBackend* stt,
                                    EncoderBackend& encoders, const RunControl& control) const;

  ModelWeights model_;
  Vocab vocab_;
  Thresholds thresholds_;
  PipelineConfig cfg_;
  // Serializes non-concurrent-safe external encoders across jobs.
  std::shared_ptr<std::mutex> encoder_lock_ = std::make_shared<std::mutex>();
};

}  // namespace mer
