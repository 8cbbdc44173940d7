#include "mer/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mer/error.hpp"

namespace mer {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

}  // namespace

WavData parse_wav(const std::string& bytes, const std::string& origin) {
  auto bad = [&](const std::string& why) {
    return Error(ErrorKind::MalformedHeader, origin + ": " + why);
  };
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12 || std::memcmp(data, "RIFF", 4) != 0 ||
      std::memcmp(data + 8, "WAVE", 4) != 0) {
    throw bad("not a RIFF/WAVE file");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* payload = nullptr;
  std::size_t payload_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = data + pos;
    const std::uint32_t len = le32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16 || len > avail) throw bad("truncated fmt chunk");
      format = le16(data + body);
      channels = le16(data + body + 2);
      rate = le32(data + body + 4);
      bits = le16(data + body + 14);
      if (format == kFormatExtensible) {
        if (len < 26) throw bad("truncated extensible fmt chunk");
        format = le16(data + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      payload = data + body;
      // Streaming writers leave the length as 0 or 0xFFFFFFFF.
      if (len == 0 || len == 0xFFFFFFFFU) {
        payload_len = avail;
      } else if (len > avail) {
        throw bad("truncated data chunk (" + std::to_string(len) + " bytes declared, " +
                  std::to_string(avail) + " present)");
      } else {
        payload_len = len;
      }
      break;
    }
    pos = body + len + (len & 1U);
  }

  if (!have_fmt) throw bad("missing fmt chunk");
  if (payload == nullptr) throw bad("missing data chunk");
  if (channels == 0 || rate == 0) throw bad("zero channels or sample rate");

  WavData out;
  out.sample_rate_hz = rate;
  out.channels = channels;
  if (format == kFormatPcm && bits == 16) {
    const std::size_t frame = 2U * channels;
    const std::size_t n = payload_len / frame;
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto v = static_cast<std::int16_t>(le16(payload + i * frame));
      out.samples[i] = static_cast<float>(v) / 32768.0f;
    }
  } else if (format == kFormatFloat && bits == 32) {
    const std::size_t frame = 4U * channels;
    const std::size_t n = payload_len / frame;
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      out.samples[i] = std::bit_cast<float>(le32(payload + i * frame));
    }
  } else {
    throw bad("unsupported encoding (format " + std::to_string(format) + ", " +
              std::to_string(bits) + " bits)");
  }
  for (float s : out.samples) {
    if (!std::isfinite(s)) throw bad("non-finite sample");
  }
  return out;
}

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_wav(ss.str(), path.string());
}

std::string encode_wav(const std::vector<float>& samples, std::uint32_t sample_rate_hz,
                       WavEncoding encoding) {
  const std::uint16_t bits = encoding == WavEncoding::Pcm16 ? 16 : 32;
  const std::uint16_t format = encoding == WavEncoding::Pcm16 ? kFormatPcm : kFormatFloat;
  const std::uint32_t data_len = static_cast<std::uint32_t>(samples.size() * (bits / 8));

  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  put32(out, 36 + data_len);
  out += "WAVEfmt ";
  put32(out, 16);
  put16(out, format);
  put16(out, 1);
  put32(out, sample_rate_hz);
  put32(out, sample_rate_hz * (bits / 8));
  put16(out, bits / 8);
  put16(out, bits);
  out += "data";
  put32(out, data_len);
  for (float s : samples) {
    if (encoding == WavEncoding::Pcm16) {
      const float c = std::clamp(s, -1.0f, 1.0f);
      const long q = std::lround(static_cast<double>(c) * 32768.0);
      put16(out, static_cast<std::uint16_t>(
                     static_cast<std::int16_t>(std::clamp(q, -32768L, 32767L))));
    } else {
      put32(out, std::bit_cast<std::uint32_t>(s));
    }
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const std::vector<float>& samples,
               std::uint32_t sample_rate_hz, WavEncoding encoding) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::InvalidInput, "cannot write " + path.string());
  const std::string bytes = encode_wav(samples, sample_rate_hz, encoding);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace mer
