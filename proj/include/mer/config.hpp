#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "mer/orchestrator.hpp"

namespace mer {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path jobs_dir = "jobs";
  std::uint64_t max_upload_bytes = 512ULL * 1024 * 1024;
  std::size_t max_parallel_jobs = 2;
  // Test hook: sleep after each utterance to make processing observable.
  std::size_t utterance_delay_ms = 0;
  std::filesystem::path static_dir;  // optional web UI build to serve at /
};

struct AppConfig {
  PipelineConfig pipeline;
  std::string decoder_command;
  ServiceConfig service;
};

// Directory holding the shipped reference model, vocab and thresholds.
std::filesystem::path default_data_dir();

// Defaults point at the shipped reference model.
AppConfig default_config();

// Overlays a JSON document onto cfg. Relative paths resolve against base_dir.
// Unknown keys are rejected with Error(InvalidConfig).
void apply_json(AppConfig& cfg, const nlohmann::json& doc,
                const std::filesystem::path& base_dir);

// Per-job overrides accepted by the service: "vad" and "backends.stt" only.
void apply_job_overrides(PipelineConfig& cfg, const nlohmann::json& doc);

// Applies MER_* environment variables (MER_MODEL, MER_VOCAB, MER_THRESHOLDS,
// MER_DECODER_COMMAND, MER_HOST, MER_PORT, MER_JOBS_DIR, MER_MAX_UPLOAD_BYTES,
// MER_MAX_PARALLEL_JOBS).
void apply_env(AppConfig& cfg);

// defaults <- file (if non-empty path) <- environment.
AppConfig load_config(const std::filesystem::path& file);

}  // namespace mer
