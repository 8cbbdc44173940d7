#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mer/error.hpp"
#include "mer/extraction.hpp"
#include "mer/rng.hpp"
#include "test_util.hpp"

using namespace mer;

namespace {

Image noise_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  Image img(h, w);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

// Tent-filter bilinear with half-pixel centers, sample positions clamped
// into the box.
double bilinear_oracle(const Image& img, const FaceBox& box, std::size_t oy, std::size_t ox,
                       std::size_t c, std::size_t out) {
  const double bw = static_cast<double>(box.x1 - box.x0);
  const double bh = static_cast<double>(box.y1 - box.y0);
  const double fx = std::clamp((ox + 0.5) * bw / out - 0.5, 0.0, bw - 1.0);
  const double fy = std::clamp((oy + 0.5) * bh / out - 0.5, 0.0, bh - 1.0);
  double acc = 0.0;
  for (std::size_t y = 0; y < box.y1 - box.y0; ++y) {
    for (std::size_t x = 0; x < box.x1 - box.x0; ++x) {
      const double w = std::max(0.0, 1.0 - std::abs(fx - x)) * std::max(0.0, 1.0 - std::abs(fy - y));
      if (w > 0.0) acc += w * img.at(box.y0 + y, box.x0 + x, c);
    }
  }
  return acc;
}

class FixedBox final : public FaceCropBackend {
 public:
  explicit FixedBox(FaceBox b) : box_(b) {}
  FaceBox locate(const Image&) override { return box_; }
  std::string name() const override { return "fixed"; }

 private:
  FaceBox box_;
};

class Throwing final : public FaceCropBackend {
 public:
  FaceBox locate(const Image&) override { throw Error(ErrorKind::BackendFailure, "nope"); }
  std::string name() const override { return "throwing"; }
};

AudioTrack ramp(std::size_t n) {
  AudioTrack t;
  for (std::size_t i = 0; i < n; ++i) t.samples.push_back(static_cast<float>(i % 1000) / 1000.0f);
  return t;
}

Vocab small_vocab() { return Vocab({"<pad>", "<unk>", "i", "am", "happy"}); }

}  // namespace

TEST_CASE("slice_audio pads and truncates at the tail") {
  const AudioTrack t = ramp(16000 * 14);
  SUBCASE("4 s span") {
    const AcousticInput a = slice_audio(t, {1.0, 5.0});
    CHECK(a.samples.size() == kAudioSamples);
    CHECK(a.n_real == 64000);
    for (std::size_t i = 0; i < 64000; ++i) REQUIRE(a.samples[i] == t.samples[16000 + i]);
    for (std::size_t i = 64000; i < kAudioSamples; ++i) REQUIRE(a.samples[i] == 0.0f);
  }
  SUBCASE("12 s span keeps the first 10 s") {
    const AcousticInput a = slice_audio(t, {0.5, 12.5});
    CHECK(a.n_real == kAudioSamples);
    for (std::size_t i = 0; i < kAudioSamples; ++i) REQUIRE(a.samples[i] == t.samples[8000 + i]);
  }
  SUBCASE("exactly 10 s") {
    const AcousticInput a = slice_audio(t, {2.0, 12.0});
    CHECK(a.n_real == kAudioSamples);
    CHECK(std::equal(a.samples.begin(), a.samples.end(), t.samples.begin() + 32000));
  }
  SUBCASE("out of range") {
    CHECK_THROWS_AS(slice_audio(t, {13.0, 15.0}), Error);
    CHECK_THROWS_AS(slice_audio(t, {2.0, 1.0}), Error);
  }
}

TEST_CASE("sample_indices") {
  CHECK(sample_indices(30) == std::vector<std::size_t>{0, 7, 15, 22, 29});
  CHECK(sample_indices(5) == std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK(sample_indices(3) == std::vector<std::size_t>{0, 1, 2});
  CHECK(sample_indices(0).empty());
  for (std::size_t T = 1; T < 200; ++T) {
    const auto idx = sample_indices(T);
    CHECK(std::is_sorted(idx.begin(), idx.end()));
    CHECK(idx.back() <= T - 1);
  }
}

TEST_CASE("sample_frames picks in-span frames inclusively") {
  FrameSequence f;
  for (int i = 0; i < 100; ++i) {
    f.frames.push_back(Image(2, 2, static_cast<std::uint8_t>(i)));
    f.timestamps_s.push_back(i / 10.0);
  }
  const auto picked = sample_frames(f, {1.0, 3.9});  // frames 10..39 -> T = 30
  REQUIRE(picked.size() == 5);
  const std::vector<int> want = {10, 17, 25, 32, 39};
  for (std::size_t i = 0; i < 5; ++i) CHECK(picked[i]->pixels[0] == want[i]);
  CHECK(sample_frames(f, {1.0, 1.2}).size() == 3);
  CHECK(sample_frames(f, {20.0, 30.0}).empty());
}

TEST_CASE("crop_face") {
  CenterCropBackend center;
  SUBCASE("160x160 is pure normalization") {
    const Image img = noise_image(160, 160, 1);
    const FaceTensor t = crop_face(img, center);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      REQUIRE(t[i] == static_cast<float>((img.pixels[i] - 127.5) / 128.0));
    }
  }
  SUBCASE("wide image uses the centered square") {
    const Image img = noise_image(100, 160, 2);
    CHECK(center.locate(img).x0 == 30);
    CHECK(center.locate(img).x1 == 130);
    const FaceBox box = center.locate(img);
    const auto raw = crop_resize(img, box, 160, 160);
    Rng rng(3);
    for (int k = 0; k < 200; ++k) {
      const std::size_t oy = rng.below(160), ox = rng.below(160), c = rng.below(3);
      REQUIRE(std::abs(raw[(oy * 160 + ox) * 3 + c] - bilinear_oracle(img, box, oy, ox, c, 160)) <
              1e-4);
    }
  }
  SUBCASE("backend box is honored") {
    const Image img = noise_image(120, 90, 4);
    const FaceBox box{10, 10, 50, 50};
    FixedBox backend(box);
    const FaceTensor t = crop_face(img, backend);
    for (std::size_t oy = 0; oy < 160; oy += 13) {
      for (std::size_t ox = 0; ox < 160; ox += 7) {
        for (std::size_t c = 0; c < 3; ++c) {
          const double want = (bilinear_oracle(img, box, oy, ox, c, 160) - 127.5) / 128.0;
          REQUIRE(std::abs(t[(oy * 160 + ox) * 3 + c] - want) < 1e-4);
        }
      }
    }
  }
  SUBCASE("failures fall back to the center crop") {
    const Image img = noise_image(100, 160, 5);
    Throwing bad;
    FixedBox outside({0, 0, 200, 50});
    std::vector<std::string> diag;
    const FaceTensor expected = crop_face(img, center);
    CHECK(crop_face(img, bad, &diag) == expected);
    CHECK(crop_face(img, outside, &diag) == expected);
    CHECK(diag.size() == 2);
  }
  SUBCASE("external backend") {
    const Image img = noise_image(100, 100, 6);
    ExternalFaceCropBackend ext(test::fake_command("face {image}"));
    const FaceBox box = ext.locate(img);
    CHECK(box.x0 == 20);
    CHECK(box.x1 == 80);
    std::vector<std::string> diag;
    ExternalFaceCropBackend bad(test::fake_command("face-bad {image}"));
    crop_face(img, bad, &diag);
    CHECK(diag.size() == 1);
  }
}

TEST_CASE("build_visual pads with zero images") {
  FrameSequence f;
  for (int i = 0; i < 3; ++i) {
    f.frames.push_back(noise_image(40, 40, i));
    f.timestamps_s.push_back(i * 0.5);
  }
  CenterCropBackend center;
  const VisualInput v = build_visual(f, {0.0, 2.0}, center, nullptr);
  CHECK(v.n_real == 3);
  for (const auto& img : v.images) CHECK(img.size() == kFaceValues);
  CHECK(std::all_of(v.images[3].begin(), v.images[3].end(), [](float x) { return x == 0.0f; }));
  CHECK(std::all_of(v.images[4].begin(), v.images[4].end(), [](float x) { return x == 0.0f; }));
  for (float x : v.images[0]) REQUIRE(std::abs(x) <= 0.9961f);
}

TEST_CASE("transcribe") {
  const AudioTrack t = ramp(16000 * 4);
  const TimedTranscript words = {{"i", 1.1, 1.3}, {"am", 1.4, 1.6}, {"happy", 1.7, 2.0}};
  CHECK(transcribe(t, {1.0, 2.5}, SttMode::Sidecar, nullptr, words) == "i am happy");
  CHECK(transcribe(t, {2.2, 3.0}, SttMode::Sidecar, nullptr, words) == "");
  CHECK(transcribe(t, {1.0, 2.5}, SttMode::Sidecar, nullptr, TimedTranscript{{"ok", 2.4, 2.8}}) ==
        "");
  CHECK(transcribe(t, {1.0, 2.5}, SttMode::Sidecar, nullptr, std::nullopt) == "");
  CHECK(transcribe(t, {1.0, 2.5}, SttMode::None, nullptr, words) == "");

  ExternalSttBackend ok(test::fake_command("stt {audio}"));
  CHECK(transcribe(t, {1.0, 2.5}, SttMode::External, &ok, std::nullopt) ==
        "heard something Happy!");
  ExternalSttBackend bad(test::fake_command("fail {audio}"));
  std::vector<std::string> diag;
  CHECK(transcribe(t, {1.0, 2.5}, SttMode::External, &bad, std::nullopt, &diag) == "");
  CHECK(diag.size() == 1);
}

TEST_CASE("tokenize") {
  const Vocab v = small_vocab();
  SUBCASE("known words") {
    const TextInput t = tokenize("I am happy", v);
    CHECK(t.token_ids[0] == 2);
    CHECK(t.token_ids[1] == 3);
    CHECK(t.token_ids[2] == 4);
    CHECK(t.n_real == 3);
    CHECK(std::all_of(t.token_ids.begin() + 3, t.token_ids.end(), [](auto id) { return id == 0; }));
  }
  SUBCASE("unknown") {
    const TextInput t = tokenize("xyzzy", v);
    CHECK(t.token_ids[0] == kUnkId);
    CHECK(t.token_ids[1] == kPadId);
  }
  SUBCASE("punctuation and case") {
    CHECK(tokenize("  HAPPY!!  (i) ... am,", v).token_ids[0] == 4);
    CHECK(tokenize("  HAPPY!!  (i) ... am,", v).n_real == 3);
  }
  SUBCASE("truncation to 100") {
    std::string text;
    for (int i = 0; i < 150; ++i) text += (i < 100 ? "am " : "happy ");
    const TextInput t = tokenize(text, v);
    CHECK(t.n_real == 100);
    CHECK(std::all_of(t.token_ids.begin(), t.token_ids.end(), [](auto id) { return id == 3; }));
  }
  SUBCASE("idempotent on known-token output") {
    const TextInput a = tokenize("i, AM happy... i", v);
    std::string joined;
    for (std::size_t i = 0; i < a.n_real; ++i) joined += v.tokens()[a.token_ids[i]] + " ";
    CHECK(tokenize(joined, v).token_ids == a.token_ids);
  }
}

TEST_CASE("Vocab") {
  CHECK_THROWS_AS(Vocab({"<pad>", "<unk>", "a", "a"}), Error);
  CHECK_THROWS_AS(Vocab({"a"}), Error);
  test::TempDir dir;
  small_vocab().save(dir / "v.json");
  const Vocab back = Vocab::load(dir / "v.json");
  CHECK(back.tokens() == small_vocab().tokens());
  CHECK(back.id("happy") == 4);
  CHECK(back.id("nothing") == kUnkId);
}

TEST_CASE("face_to_image inverts normalization") {
  const Image img = noise_image(160, 160, 9);
  CenterCropBackend center;
  CHECK(face_to_image(crop_face(img, center)) == img);
}
