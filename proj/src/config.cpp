#include "mer/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "mer/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

#ifndef MER_DEFAULT_DATA_DIR
#define MER_DEFAULT_DATA_DIR "data"
#endif

namespace mer {
namespace {

void reject_unknown(const json& doc, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : doc.items()) {
    if (!known.contains(key)) {
      throw Error(ErrorKind::InvalidConfig, "unknown key '" + key + "' in " + where);
    }
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

void apply_vad(VadConfig& vad, const json& doc) {
  reject_unknown(doc, {"frame_ms", "hop_ms", "floor_percentile", "onset_db_above_floor",
                       "min_speech_ms", "min_silence_ms", "pad_ms"},
                 "vad");
  vad.frame_ms = doc.value("frame_ms", vad.frame_ms);
  vad.hop_ms = doc.value("hop_ms", vad.hop_ms);
  vad.floor_percentile = doc.value("floor_percentile", vad.floor_percentile);
  vad.onset_db_above_floor = doc.value("onset_db_above_floor", vad.onset_db_above_floor);
  vad.min_speech_ms = doc.value("min_speech_ms", vad.min_speech_ms);
  vad.min_silence_ms = doc.value("min_silence_ms", vad.min_silence_ms);
  vad.pad_ms = doc.value("pad_ms", vad.pad_ms);
  vad.validate();
}

void apply_backends(BackendConfig& b, const json& doc) {
  reject_unknown(doc, {"vad", "vad_command", "face", "face_command", "stt", "stt_command",
                       "encoder", "encoder_command", "encoder_graph", "encoder_concurrent_safe"},
                 "backends");
  b.vad = doc.value("vad", b.vad);
  b.vad_command = doc.value("vad_command", b.vad_command);
  b.face = doc.value("face", b.face);
  b.face_command = doc.value("face_command", b.face_command);
  b.stt = doc.value("stt", b.stt);
  b.stt_command = doc.value("stt_command", b.stt_command);
  b.encoder = doc.value("encoder", b.encoder);
  b.encoder_command = doc.value("encoder_command", b.encoder_command);
  b.encoder_graph = doc.value("encoder_graph", b.encoder_graph);
  b.encoder_concurrent_safe = doc.value("encoder_concurrent_safe", b.encoder_concurrent_safe);
}

template <typename T>
T parse_number(const char* name, const char* text) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != std::string(text).size() || v < 0) throw std::invalid_argument(name);
    return static_cast<T>(v);
  } catch (const std::exception&) {
    throw Error(ErrorKind::InvalidConfig, std::string(name) + " must be a non-negative integer");
  }
}

}  // namespace

fs::path default_data_dir() { return fs::path(MER_DEFAULT_DATA_DIR); }

AppConfig default_config() {
  AppConfig cfg;
  const fs::path model_dir = default_data_dir() / "reference_model";
  cfg.pipeline.model = model_dir;
  cfg.pipeline.vocab = model_dir / "vocab.json";
  cfg.pipeline.thresholds = model_dir / "thresholds.json";
  return cfg;
}

void apply_json(AppConfig& cfg, const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw Error(ErrorKind::InvalidConfig, "config must be a JSON object");
  try {
    reject_unknown(doc, {"model", "vocab", "thresholds", "sample_rate_hz", "vad", "backends",
                         "decoder_command", "service"},
                   "config");
    if (doc.contains("model")) cfg.pipeline.model = resolve(base_dir, doc["model"].get<std::string>());
    if (doc.contains("vocab")) cfg.pipeline.vocab = resolve(base_dir, doc["vocab"].get<std::string>());
    if (doc.contains("thresholds")) {
      cfg.pipeline.thresholds = resolve(base_dir, doc["thresholds"].get<std::string>());
    }
    cfg.pipeline.sample_rate_hz = doc.value("sample_rate_hz", cfg.pipeline.sample_rate_hz);
    if (cfg.pipeline.sample_rate_hz == 0) {
      throw Error(ErrorKind::InvalidConfig, "sample_rate_hz must be positive");
    }
    if (doc.contains("vad")) apply_vad(cfg.pipeline.vad, doc["vad"]);
    if (doc.contains("backends")) apply_backends(cfg.pipeline.backends, doc["backends"]);
    cfg.decoder_command = doc.value("decoder_command", cfg.decoder_command);
    if (doc.contains("service")) {
      const json& s = doc["service"];
      reject_unknown(s, {"host", "port", "jobs_dir", "max_upload_bytes", "max_parallel_jobs",
                         "utterance_delay_ms", "static_dir"},
                     "service");
      auto& svc = cfg.service;
      svc.host = s.value("host", svc.host);
      svc.port = s.value("port", svc.port);
      if (s.contains("jobs_dir")) svc.jobs_dir = resolve(base_dir, s["jobs_dir"].get<std::string>());
      if (s.contains("static_dir")) {
        svc.static_dir = resolve(base_dir, s["static_dir"].get<std::string>());
      }
      svc.max_upload_bytes = s.value("max_upload_bytes", svc.max_upload_bytes);
      svc.max_parallel_jobs = s.value("max_parallel_jobs", svc.max_parallel_jobs);
      svc.utterance_delay_ms = s.value("utterance_delay_ms", svc.utterance_delay_ms);
      if (svc.max_parallel_jobs == 0) {
        throw Error(ErrorKind::InvalidConfig, "max_parallel_jobs must be positive");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, e.what());
  }
}

void apply_job_overrides(PipelineConfig& cfg, const json& doc) {
  if (!doc.is_object()) throw Error(ErrorKind::InvalidConfig, "overrides must be a JSON object");
  try {
    reject_unknown(doc, {"vad", "stt"}, "job overrides");
    if (doc.contains("vad")) apply_vad(cfg.vad, doc["vad"]);
    if (doc.contains("stt")) {
      const auto mode = doc["stt"].get<std::string>();
      if (mode != "sidecar" && mode != "none") {
        throw Error(ErrorKind::InvalidConfig, "job overrides may only select stt sidecar|none");
      }
      cfg.backends.stt = mode;
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, e.what());
  }
}

void apply_env(AppConfig& cfg) {
  if (const char* v = std::getenv("MER_MODEL")) cfg.pipeline.model = v;
  if (const char* v = std::getenv("MER_VOCAB")) cfg.pipeline.vocab = v;
  if (const char* v = std::getenv("MER_THRESHOLDS")) cfg.pipeline.thresholds = v;
  if (const char* v = std::getenv("MER_DECODER_COMMAND")) cfg.decoder_command = v;
  if (const char* v = std::getenv("MER_HOST")) cfg.service.host = v;
  if (const char* v = std::getenv("MER_PORT")) cfg.service.port = parse_number<int>("MER_PORT", v);
  if (const char* v = std::getenv("MER_JOBS_DIR")) cfg.service.jobs_dir = v;
  if (const char* v = std::getenv("MER_MAX_UPLOAD_BYTES")) {
    cfg.service.max_upload_bytes = parse_number<std::uint64_t>("MER_MAX_UPLOAD_BYTES", v);
  }
  if (const char* v = std::getenv("MER_MAX_PARALLEL_JOBS")) {
    cfg.service.max_parallel_jobs = parse_number<std::size_t>("MER_MAX_PARALLEL_JOBS", v);
    if (cfg.service.max_parallel_jobs == 0) {
      throw Error(ErrorKind::InvalidConfig, "MER_MAX_PARALLEL_JOBS must be positive");
    }
  }
}

AppConfig load_config(const fs::path& file) {
  AppConfig cfg = default_config();
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorKind::InvalidConfig, "cannot read config " + file.string());
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::InvalidConfig, file.string() + ": " + e.what());
    }
    apply_json(cfg, doc, file.parent_path());
  }
  apply_env(cfg);
  return cfg;
}

}  // namespace mer
