#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mer/image.hpp"

namespace mer {

inline constexpr std::uint32_t kDefaultSampleRate = 16000;

struct AudioTrack {
  std::vector<float> samples;
  std::uint32_t sample_rate_hz = kDefaultSampleRate;

  double duration_s() const {
    return sample_rate_hz == 0 ? 0.0
                               : static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

struct FrameSequence {
  std::vector<Image> frames;
  std::vector<double> timestamps_s;
};

struct TimedWord {
  std::string word;
  double start_s = 0.0;
  double end_s = 0.0;
};

using TimedTranscript = std::vector<TimedWord>;

struct MediaBundle {
  std::string source_id;
  AudioTrack audio;
  FrameSequence frames;
  std::optional<TimedTranscript> transcript;
};

// Linear-interpolation resampler. Output length is round(n * target / source);
// equal rates return the input unchanged.
AudioTrack resample(const AudioTrack& track, std::uint32_t target_hz);

// Loads a bundle directory:
//   audio.wav          PCM16 or float32, channel 0 kept
//   frames.json        {"timestamps_s": [...]} strictly increasing
//   frames/%06d.png    one per timestamp
//   transcript.json    optional {"words": [{"w", "start_s", "end_s"}]}
// Audio is resampled to `target_hz`.
MediaBundle load_bundle(const std::filesystem::path& dir,
                        std::uint32_t target_hz = kDefaultSampleRate);

// Writes a bundle directory in the layout above (audio as PCM16).
void write_bundle(const std::filesystem::path& dir, const MediaBundle& bundle);

// Runs an external decoder to materialize a bundle directory, then loads it.
// The template must contain `{input}` and `{outdir}`.
MediaBundle decode_video(const std::filesystem::path& input,
                         const std::string& decoder_command,
                         const std::filesystem::path& outdir,
                         std::uint32_t target_hz = kDefaultSampleRate);

std::string frame_file_name(std::size_t index);

}  // namespace mer
