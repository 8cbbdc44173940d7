#include "mer/media.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "mer/error.hpp"
#include "mer/subprocess.hpp"
#include "mer/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mer {
namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedHeader, path.string() + ": " + e.what());
  }
}

std::vector<double> read_timestamps(const fs::path& path) {
  const json doc = read_json_file(path);
  if (!doc.is_object() || !doc.contains("timestamps_s") ||
      !doc["timestamps_s"].is_array()) {
    throw Error(ErrorKind::MalformedHeader, path.string() + ": expected timestamps_s array");
  }
  std::vector<double> ts;
  for (const auto& v : doc["timestamps_s"]) {
    if (!v.is_number()) {
      throw Error(ErrorKind::MalformedHeader, path.string() + ": non-numeric timestamp");
    }
    ts.push_back(v.get<double>());
  }
  for (std::size_t i = 1; i < ts.size(); ++i) {
    if (!(ts[i] > ts[i - 1])) {
      throw Error(ErrorKind::NonMonotonicTimestamps,
                  path.string() + ": timestamp " + std::to_string(i) +
                      " does not increase");
    }
  }
  return ts;
}

TimedTranscript read_transcript(const fs::path& path) {
  const json doc = read_json_file(path);
  if (!doc.is_object() || !doc.contains("words") || !doc["words"].is_array()) {
    throw Error(ErrorKind::MalformedHeader, path.string() + ": expected words array");
  }
  TimedTranscript words;
  try {
    for (const auto& w : doc["words"]) {
      words.push_back({w.at("w").get<std::string>(), w.at("start_s").get<double>(),
                       w.at("end_s").get<double>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedHeader, path.string() + ": " + e.what());
  }
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto& w = words[i];
    if (w.start_s < 0.0 || w.end_s < w.start_s ||
        (i > 0 && w.start_s < words[i - 1].start_s)) {
      throw Error(ErrorKind::NonMonotonicTimestamps,
                  path.string() + ": word " + std::to_string(i) + " span is invalid");
    }
  }
  return words;
}

}  // namespace

std::string frame_file_name(std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof(name), "%06zu.png", index);
  return name;
}

AudioTrack resample(const AudioTrack& track, std::uint32_t target_hz) {
  if (target_hz == 0) throw Error(ErrorKind::InvalidInput, "target rate must be positive");
  if (track.sample_rate_hz == target_hz || track.samples.empty()) {
    return {track.samples, target_hz};
  }
  const double ratio = static_cast<double>(track.sample_rate_hz) / target_hz;
  const auto n_out = static_cast<std::size_t>(std::llround(
      static_cast<double>(track.samples.size()) * target_hz / track.sample_rate_hz));
  const std::size_t last = track.samples.size() - 1;

  AudioTrack out{std::vector<float>(n_out), target_hz};
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    const auto lo = std::min(static_cast<std::size_t>(pos), last);
    const std::size_t hi = std::min(lo + 1, last);
    const double frac = pos - static_cast<double>(lo);
    const double a = track.samples[lo];
    const double b = track.samples[hi];
    // Exact for constant signals: a + 0 * frac.
    out.samples[i] = static_cast<float>(a + (b - a) * std::min(frac, 1.0));
  }
  return out;
}

MediaBundle load_bundle(const fs::path& dir, std::uint32_t target_hz) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::MissingFile, dir.string());
  const fs::path audio_path = dir / "audio.wav";
  const fs::path ts_path = dir / "frames.json";
  if (!fs::exists(audio_path)) throw Error(ErrorKind::MissingFile, audio_path.string());
  if (!fs::exists(ts_path)) throw Error(ErrorKind::MissingFile, ts_path.string());

  MediaBundle bundle;
  bundle.source_id = dir.filename().string();
  if (bundle.source_id.empty()) bundle.source_id = dir.parent_path().filename().string();

  WavData wav = read_wav(audio_path);
  bundle.audio = resample(AudioTrack{std::move(wav.samples), wav.sample_rate_hz}, target_hz);

  bundle.frames.timestamps_s = read_timestamps(ts_path);
  bundle.frames.frames.reserve(bundle.frames.timestamps_s.size());
  for (std::size_t i = 0; i < bundle.frames.timestamps_s.size(); ++i) {
    const fs::path frame_path = dir / "frames" / frame_file_name(i);
    if (!fs::exists(frame_path)) throw Error(ErrorKind::MissingFile, frame_path.string());
    Image img = read_png(frame_path);
    if (!bundle.frames.frames.empty() &&
        (img.height != bundle.frames.frames.front().height ||
         img.width != bundle.frames.frames.front().width)) {
      throw Error(ErrorKind::MalformedHeader,
                  frame_path.string() + ": frame dimensions differ from frame 0");
    }
    bundle.frames.frames.push_back(std::move(img));
  }

  const fs::path transcript_path = dir / "transcript.json";
  if (fs::exists(transcript_path)) bundle.transcript = read_transcript(transcript_path);
  return bundle;
}

void write_bundle(const fs::path& dir, const MediaBundle& bundle) {
  fs::create_directories(dir / "frames");
  write_wav(dir / "audio.wav", bundle.audio.samples, bundle.audio.sample_rate_hz);

  json ts = json::array();
  for (double t : bundle.frames.timestamps_s) ts.push_back(t);
  std::ofstream(dir / "frames.json") << json{{"timestamps_s", ts}}.dump() << '\n';

  for (std::size_t i = 0; i < bundle.frames.frames.size(); ++i) {
    write_png(dir / "frames" / frame_file_name(i), bundle.frames.frames[i]);
  }

  if (bundle.transcript) {
    json words = json::array();
    for (const auto& w : *bundle.transcript) {
      words.push_back({{"w", w.word}, {"start_s", w.start_s}, {"end_s", w.end_s}});
    }
    std::ofstream(dir / "transcript.json") << json{{"words", words}}.dump() << '\n';
  }
}

MediaBundle decode_video(const fs::path& input, const std::string& decoder_command,
                         const fs::path& outdir, std::uint32_t target_hz) {
  if (decoder_command.find("{input}") == std::string::npos ||
      decoder_command.find("{outdir}") == std::string::npos) {
    throw Error(ErrorKind::InvalidConfig,
                "decoder command needs {input} and {outdir} placeholders");
  }
  fs::create_directories(outdir);
  const auto argv = expand_command(decoder_command,
                                   {{"input", input.string()}, {"outdir", outdir.string()}});
  const ProcessResult res = run_process(argv);
  if (res.exit_code != 0) {
    if (res.exit_code == 127) {
      // sh-style wrappers report a missing program this way.
      throw Error(ErrorKind::DecoderNotFound, argv[0] + ": " + res.err);
    }
    throw DecoderFailedError(res.exit_code, res.err);
  }
  return load_bundle(outdir, target_hz);
}

}  // namespace mer
