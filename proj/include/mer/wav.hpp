#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mer {

struct WavData {
  std::uint32_t sample_rate_hz = 0;
  std::uint16_t channels = 0;
  // Channel 0 only, scaled to [-1, 1].
  std::vector<float> samples;
};

enum class WavEncoding { Pcm16, Float32 };

// Reads RIFF/WAVE with PCM 16-bit or IEEE float 32-bit payload (plain or
// WAVE_FORMAT_EXTENSIBLE). Multi-channel input keeps channel 0.
WavData read_wav(const std::filesystem::path& path);
WavData parse_wav(const std::string& bytes, const std::string& origin);

// Mono writer. Pcm16 rounds to the nearest LSB and clips to [-1, 1].
void write_wav(const std::filesystem::path& path, const std::vector<float>& samples,
               std::uint32_t sample_rate_hz, WavEncoding encoding = WavEncoding::Pcm16);
std::string encode_wav(const std::vector<float>& samples, std::uint32_t sample_rate_hz,
                       WavEncoding encoding = WavEncoding::Pcm16);

}  // namespace mer
