#include <doctest.h>

#include <cmath>
#include <cstring>

#include "mer/error.hpp"
#include "mer/image.hpp"
#include "mer/wav.hpp"
#include "test_util.hpp"

using namespace mer;

TEST_CASE("PCM16 round trip is within one LSB") {
  std::vector<float> samples;
  for (int i = 0; i < 1000; ++i) samples.push_back(static_cast<float>(std::sin(i * 0.01) * 0.9));
  samples.push_back(1.0f);
  samples.push_back(-1.0f);
  const WavData back = parse_wav(encode_wav(samples, 16000, WavEncoding::Pcm16), "mem");
  CHECK(back.sample_rate_hz == 16000);
  CHECK(back.channels == 1);
  REQUIRE(back.samples.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(std::abs(back.samples[i] - samples[i]) <= 1.0f / 32768.0f);
  }
}

TEST_CASE("float32 round trip is exact") {
  const std::vector<float> samples = {0.1f, -0.25f, 0.333f, 1e-6f};
  const WavData back = parse_wav(encode_wav(samples, 22050, WavEncoding::Float32), "mem");
  CHECK(back.sample_rate_hz == 22050);
  CHECK(back.samples == samples);
}

TEST_CASE("stereo keeps channel 0") {
  // Hand-built 2-channel PCM16 file: frames (L, R) = (1000, -1000), (2000, -2000).
  std::string wav = "RIFF";
  auto u32 = [&](std::uint32_t v) { wav.append(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](std::uint16_t v) { wav.append(reinterpret_cast<const char*>(&v), 2); };
  u32(36 + 8);
  wav += "WAVEfmt ";
  u32(16);
  u16(1);
  u16(2);
  u32(8000);
  u32(8000 * 4);
  u16(4);
  u16(16);
  wav += "data";
  u32(8);
  for (std::int16_t v : {1000, -1000, 2000, -2000}) u16(static_cast<std::uint16_t>(v));
  const WavData back = parse_wav(wav, "stereo");
  CHECK(back.channels == 2);
  REQUIRE(back.samples.size() == 2);
  CHECK(back.samples[0] == doctest::Approx(1000.0 / 32768.0));
  CHECK(back.samples[1] == doctest::Approx(2000.0 / 32768.0));
}

TEST_CASE("malformed and missing WAV files") {
  CHECK_THROWS_WITH_AS(parse_wav("RIFX....", "bad.wav"), doctest::Contains("bad.wav"), Error);
  std::string truncated = encode_wav({0.5f, 0.5f}, 16000, WavEncoding::Pcm16);
  truncated.resize(truncated.size() - 3);
  CHECK_THROWS_AS(parse_wav(truncated, "t.wav"), Error);
  try {
    read_wav("/nonexistent/audio.wav");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingFile);
  }
}

TEST_CASE("PNG round trip") {
  test::TempDir dir;
  Image img(7, 5);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 7);
  write_png(dir / "a.png", img);
  CHECK(read_png(dir / "a.png") == img);

  test::write_file(dir / "junk.png", "not a png");
  try {
    read_png(dir / "junk.png");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MalformedHeader);
  }
}
