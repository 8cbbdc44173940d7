#include "mer/vad.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include <json.hpp>

#include "mer/error.hpp"
#include "mer/subprocess.hpp"
#include "mer/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mer {
namespace {

std::size_t ms_to_samples(double ms, std::uint32_t rate) {
  return static_cast<std::size_t>(std::llround(ms * rate / 1000.0));
}

}  // namespace

void VadConfig::validate() const {
  if (!(hop_ms > 0.0) || !(frame_ms >= hop_ms)) {
    throw Error(ErrorKind::InvalidConfig, "vad: require frame_ms >= hop_ms > 0");
  }
  if (floor_percentile < 0.0 || floor_percentile > 100.0) {
    throw Error(ErrorKind::InvalidConfig, "vad: floor_percentile outside [0, 100]");
  }
  if (min_speech_ms < 0.0 || min_silence_ms < 0.0 || pad_ms < 0.0) {
    throw Error(ErrorKind::InvalidConfig, "vad: durations must be non-negative");
  }
}

std::vector<double> frame_energies(const AudioTrack& track, const VadConfig& cfg) {
  if (track.samples.empty()) throw Error(ErrorKind::EmptyAudio, "no samples");
  cfg.validate();
  const std::size_t frame = std::max<std::size_t>(1, ms_to_samples(cfg.frame_ms, track.sample_rate_hz));
  const std::size_t hop = std::max<std::size_t>(1, ms_to_samples(cfg.hop_ms, track.sample_rate_hz));
  const std::size_t n = track.samples.size();
  if (n < frame) return {};

  const std::size_t count = (n - frame) / hop + 1;
  std::vector<double> db(count);
  for (std::size_t f = 0; f < count; ++f) {
    double acc = 0.0;
    for (std::size_t i = f * hop; i < f * hop + frame; ++i) {
      const double s = track.samples[i];
      acc += s * s;
    }
    const double rms = std::sqrt(acc / static_cast<double>(frame));
    db[f] = 20.0 * std::log10(rms + 1e-10);
  }
  return db;
}

double percentile(std::vector<double> values, double pct) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double rank = pct / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (values[hi] - values[lo]) * (rank - static_cast<double>(lo));
}

std::vector<UtteranceSpan> normalize_spans(std::vector<UtteranceSpan> spans,
                                           double duration_s) {
  for (auto& s : spans) {
    s.start_s = std::clamp(s.start_s, 0.0, duration_s);
    s.end_s = std::clamp(s.end_s, 0.0, duration_s);
  }
  std::erase_if(spans, [](const UtteranceSpan& s) { return !(s.end_s > s.start_s); });
  std::sort(spans.begin(), spans.end(),
            [](const auto& a, const auto& b) { return a.start_s < b.start_s; });
  std::vector<UtteranceSpan> out;
  for (const auto& s : spans) {
    if (!out.empty() && s.start_s <= out.back().end_s) {
      out.back().end_s = std::max(out.back().end_s, s.end_s);
    } else {
      out.push_back(s);
    }
  }
  return out;
}

std::vector<UtteranceSpan> detect_spans(const std::vector<double>& energies,
                                        const VadConfig& cfg, double duration_s) {
  cfg.validate();
  if (energies.empty()) return {};
  const double threshold =
      percentile(energies, cfg.floor_percentile) + cfg.onset_db_above_floor;
  const double hop_s = cfg.hop_ms / 1000.0;
  const double frame_s = cfg.frame_ms / 1000.0;

  std::vector<UtteranceSpan> runs;
  std::size_t i = 0;
  while (i < energies.size()) {
    if (!(energies[i] > threshold)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < energies.size() && energies[j + 1] > threshold) ++j;
    runs.push_back({static_cast<double>(i) * hop_s,
                    std::min(static_cast<double>(j) * hop_s + frame_s, duration_s)});
    i = j + 1;
  }

  // Tolerance absorbs hop-multiple rounding (e.g. 25 frames * 0.01 s).
  constexpr double kEps = 1e-9;
  std::erase_if(runs, [&](const UtteranceSpan& r) {
    return r.length_s() * 1000.0 + kEps < cfg.min_speech_ms;
  });

  std::vector<UtteranceSpan> merged;
  for (const auto& r : runs) {
    if (!merged.empty() &&
        (r.start_s - merged.back().end_s) * 1000.0 + kEps < cfg.min_silence_ms) {
      merged.back().end_s = r.end_s;
    } else {
      merged.push_back(r);
    }
  }

  const double pad_s = cfg.pad_ms / 1000.0;
  for (auto& s : merged) {
    s.start_s -= pad_s;
    s.end_s += pad_s;
  }
  return normalize_spans(std::move(merged), duration_s);
}

EnergyVad::EnergyVad(VadConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::vector<UtteranceSpan> EnergyVad::detect(const AudioTrack& track) {
  return detect_spans(frame_energies(track, cfg_), cfg_, track.duration_s());
}

ExternalVad::ExternalVad(std::string command_template)
    : command_(std::move(command_template)) {}

std::vector<UtteranceSpan> ExternalVad::detect(const AudioTrack& track) {
  std::random_device rd;
  const fs::path tmp = fs::temp_directory_path() /
                       ("mer-vad-" + std::to_string(rd()) + "-" + std::to_string(rd()) + ".wav");
  write_wav(tmp, track.samples, track.sample_rate_hz, WavEncoding::Float32);
  ProcessResult res;
  try {
    res = run_process(expand_command(command_, {{"audio", tmp.string()}}));
  } catch (const Error& e) {
    fs::remove(tmp);
    throw Error(ErrorKind::BackendFailure, std::string("vad: ") + e.what());
  }
  fs::remove(tmp);
  if (res.exit_code != 0) {
    throw Error(ErrorKind::BackendFailure,
                "vad exited with status " + std::to_string(res.exit_code) + ": " + res.err);
  }
  std::vector<UtteranceSpan> spans;
  try {
    const json doc = json::parse(res.out);
    for (const auto& s : doc.at("spans")) {
      spans.push_back({s.at("start_s").get<double>(), s.at("end_s").get<double>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::BackendFailure, std::string("vad: bad response: ") + e.what());
  }
  return spans;
}

std::vector<UtteranceSpan> segment(const AudioTrack& track, VadBackend& backend) {
  std::vector<UtteranceSpan> spans;
  try {
    spans = backend.detect(track);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::EmptyAudio || e.kind() == ErrorKind::BackendFailure) throw;
    throw Error(ErrorKind::BackendFailure, e.what());
  }
  return normalize_spans(std::move(spans), track.duration_s());
}

std::string spans_to_json(const std::vector<UtteranceSpan>& spans) {
  std::string out = "[";
  char buf[96];
  for (std::size_t i = 0; i < spans.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%s{\"start_s\":%.6f,\"end_s\":%.6f}", i ? "," : "",
                  spans[i].start_s, spans[i].end_s);
    out += buf;
  }
  return out + "]";
}

}  // namespace mer
