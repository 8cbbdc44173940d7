#include "mer/orchestrator.hpp"

#include <cstdio>

#include <json.hpp>

#include "mer/error.hpp"
#include "mer/fusion.hpp"

using nlohmann::json;

namespace mer {
namespace {

std::string quoted(const std::string& s) { return json(s).dump(); }

std::string emotion_map(const EmotionVector& v) {
  std::string out = "{";
  for (std::size_t e = 0; e < kNumEmotions; ++e) {
    if (e > 0) out += ',';
    out += quoted(std::string(kEmotionNames[e])) + ':' + format_number(v[e]);
  }
  return out + '}';
}

std::string emotion_list(const std::vector<std::size_t>& ids) {
  std::string out = "[";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += ',';
    out += quoted(std::string(kEmotionNames[ids[i]]));
  }
  return out + ']';
}

std::unique_ptr<FaceCropBackend> make_face(const PipelineConfig& cfg) {
  if (cfg.backends.face == "center") return std::make_unique<CenterCropBackend>();
  if (cfg.backends.face == "external") {
    return std::make_unique<ExternalFaceCropBackend>(cfg.backends.face_command);
  }
  throw Error(ErrorKind::InvalidConfig, "unknown face backend " + cfg.backends.face);
}

SttMode stt_mode(const PipelineConfig& cfg) {
  if (cfg.backends.stt == "sidecar") return SttMode::Sidecar;
  if (cfg.backends.stt == "external") return SttMode::External;
  if (cfg.backends.stt == "none") return SttMode::None;
  throw Error(ErrorKind::InvalidConfig, "unknown stt backend " + cfg.backends.stt);
}

}  // namespace

std::unique_ptr<VadBackend> make_vad_backend(const PipelineConfig& cfg) {
  if (cfg.backends.vad == "energy") return std::make_unique<EnergyVad>(cfg.vad);
  if (cfg.backends.vad == "external") return std::make_unique<ExternalVad>(cfg.backends.vad_command);
  throw Error(ErrorKind::InvalidConfig, "unknown vad backend " + cfg.backends.vad);
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  // Tiny negatives print as "0.000000".
  if (std::string_view(buf) == "-0.000000") return "0.000000";
  return buf;
}

std::string status_name(VideoStatus status) {
  return status == VideoStatus::Ok ? "ok" : "no_speech";
}

EmotionVector average_probs(const std::vector<UtteranceResult>& results) {
  EmotionVector avg{};
  if (results.empty()) return avg;
  for (const auto& r : results)
    for (std::size_t e = 0; e < kNumEmotions; ++e) avg[e] += r.probs[e];
  for (double& v : avg) v /= static_cast<double>(results.size());
  return avg;
}

std::string utterance_event(const UtteranceResult& r, const Thresholds& t) {
  std::string out = "{\"type\":\"utterance\",\"index\":" + std::to_string(r.index);
  out += ",\"start_s\":" + format_number(r.span.start_s);
  out += ",\"end_s\":" + format_number(r.span.end_s);
  out += ",\"transcript\":" + quoted(r.transcript);
  out += ",\"probs\":" + emotion_map(r.probs);
  out += ",\"active\":" + emotion_list(r.active);
  out += ",\"thresholds\":" + emotion_map(t);
  out += ",\"input_summary\":{\"n_real_frames\":" + std::to_string(r.input_summary.n_real_frames) +
         ",\"audio_real_s\":" + format_number(r.input_summary.audio_real_s) +
         ",\"n_real_tokens\":" + std::to_string(r.input_summary.n_real_tokens) + "}";
  if (!r.diagnostics.empty()) out += ",\"diagnostics\":" + json(r.diagnostics).dump();
  return out + "}";
}

std::string utterance_error_event(std::size_t index, const std::string& error) {
  return "{\"type\":\"utterance_error\",\"index\":" + std::to_string(index) +
         ",\"error\":" + quoted(error) + "}";
}

std::string final_event(const VideoResult& result) {
  return "{\"type\":\"final\",\"status\":\"" + status_name(result.status) +
         "\",\"avg_probs\":" + emotion_map(result.avg_probs) +
         ",\"active\":" + emotion_list(result.avg_active) + "}";
}

Pipeline::Pipeline(ModelWeights model, Vocab vocab, Thresholds thresholds, PipelineConfig cfg)
    : model_(std::move(model)),
      vocab_(std::move(vocab)),
      thresholds_(thresholds),
      cfg_(std::move(cfg)) {
  const auto& fc = model_.fusion_cfg;
  const auto& ec = model_.encoder_cfg;
  if (fc.d_visual != ec.d_visual || fc.d_acoustic != ec.d_acoustic ||
      fc.d_textual != ec.d_textual) {
    throw Error(ErrorKind::ManifestMismatch, "encoder and fusion dims disagree");
  }
  if (cfg_.backends.encoder == "reference") {
    if (!model_.encoders) {
      throw Error(ErrorKind::ManifestMismatch, "archive has no reference encoder tensors");
    }
    if (model_.encoders->txt_emb.rows() < vocab_.size()) {
      throw Error(ErrorKind::ManifestMismatch,
                  "txt.emb has " + std::to_string(model_.encoders->txt_emb.rows()) +
                      " rows but the vocab has " + std::to_string(vocab_.size()) + " tokens");
    }
  } else if (cfg_.backends.encoder != "external") {
    throw Error(ErrorKind::InvalidConfig, "unknown encoder backend " + cfg_.backends.encoder);
  }
  cfg_.vad.validate();
  stt_mode(cfg_);
}

std::shared_ptr<const Pipeline> Pipeline::load(const PipelineConfig& cfg) {
  return std::make_shared<const Pipeline>(load_weights(cfg.model), Vocab::load(cfg.vocab),
                                          load_thresholds(cfg.thresholds), cfg);
}

UtteranceResult Pipeline::process_utterance(const PipelineConfig& cfg, const MediaBundle& bundle,
                                            const UtteranceSpan& span, std::size_t index,
                                            FaceCropBackend& face, SttBackend* stt,
                                            EncoderBackend& encoders,
                                            const RunControl& control) const {
  UtteranceResult r;
  r.index = index;
  r.span = span;

  UtteranceClip clip = build_clip(bundle, span, face, stt_mode(cfg), stt, vocab_);
  if (control.on_clip) control.on_clip(index, clip);

  EncodedUtterance enc;
  if (encoders.concurrent_safe()) {
    enc = encoders.encode(clip);
  } else {
    std::lock_guard lock(*encoder_lock_);
    enc = encoders.encode(clip);
  }
  const Prediction pred =
      forward(enc.visual, enc.acoustic, enc.textual, model_.fusion, model_.fusion_cfg);

  r.transcript = clip.text;
  r.probs = pred.probs;
  r.active = apply_thresholds(r.probs, thresholds_);
  r.input_summary = {clip.visual.n_real,
                     static_cast<double>(clip.audio.n_real) / bundle.audio.sample_rate_hz,
                     clip.tokens.n_real};
  r.diagnostics = std::move(clip.diagnostics);
  return r;
}

VideoResult Pipeline::run(const MediaBundle& bundle, const EventSink& sink,
                          const RunControl& control) const {
  return run_with(cfg_, bundle, sink, control);
}

VideoResult Pipeline::run_with(const PipelineConfig& cfg, const MediaBundle& bundle,
                               const EventSink& sink, const RunControl& control) const {
  cfg.vad.validate();
  auto vad = make_vad_backend(cfg);
  auto face = make_face(cfg);
  std::unique_ptr<SttBackend> stt;
  if (cfg.backends.stt == "external") {
    stt = std::make_unique<ExternalSttBackend>(cfg.backends.stt_command);
  }
  std::unique_ptr<EncoderBackend> encoders;
  if (cfg.backends.encoder == "reference") {
    if (!model_.encoders) {
      throw Error(ErrorKind::ManifestMismatch, "archive has no reference encoder tensors");
    }
    encoders = std::make_unique<ReferenceEncoders>(*model_.encoders, model_.encoder_cfg);
  } else {
    encoders = std::make_unique<ExternalEncoders>(cfg.backends.encoder_command,
                                                  cfg.backends.encoder_graph, model_.encoder_cfg,
                                                  cfg.backends.encoder_concurrent_safe);
  }

  std::vector<UtteranceSpan> spans;
  if (!bundle.audio.samples.empty()) spans = segment(bundle.audio, *vad);

  VideoResult result;
  result.status = spans.empty() ? VideoStatus::NoSpeech : VideoStatus::Ok;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (control.cancel != nullptr && control.cancel->load()) {
      throw Error(ErrorKind::Canceled, "canceled before utterance " + std::to_string(i));
    }
    try {
      UtteranceResult r =
          process_utterance(cfg, bundle, spans[i], i, *face, stt.get(), *encoders, control);
      sink(utterance_event(r, thresholds_));
      result.utterances.push_back(std::move(r));
    } catch (const Error& e) {
      const std::string msg = "utterance " + std::to_string(i) + ": " + e.what();
      sink(utterance_error_event(i, msg));
      result.failures.push_back({i, msg});
    }
    if (control.after_utterance) control.after_utterance(i);
  }

  result.avg_probs = average_probs(result.utterances);
  if (result.status == VideoStatus::Ok) {
    result.avg_active = apply_thresholds(result.avg_probs, thresholds_);
  }
  sink(final_event(result));
  return result;
}

}  // namespace mer
