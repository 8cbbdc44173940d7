#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mer/media.hpp"
#include "mer/vad.hpp"

namespace mer {

inline constexpr std::size_t kNumFaces = 5;
inline constexpr std::size_t kFaceSize = 160;
inline constexpr std::size_t kFaceValues = kFaceSize * kFaceSize * 3;
inline constexpr std::size_t kAudioSamples = 160000;
inline constexpr std::size_t kNumTokens = 100;

inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kUnkId = 1;

// One face crop, 160x160x3 interleaved, normalized as (pixel - 127.5) / 128.
using FaceTensor = std::vector<float>;

inline std::array<FaceTensor, kNumFaces> zero_faces() {
  std::array<FaceTensor, kNumFaces> faces;
  faces.fill(FaceTensor(kFaceValues, 0.0f));
  return faces;
}

struct VisualInput {
  std::array<FaceTensor, kNumFaces> images = zero_faces();
  std::size_t n_real = 0;
};

struct AcousticInput {
  std::vector<float> samples = std::vector<float>(kAudioSamples, 0.0f);
  std::size_t n_real = 0;
};

struct TextInput {
  std::array<std::int32_t, kNumTokens> token_ids{};
  std::size_t n_real = 0;
};

class Vocab {
 public:
  Vocab() = default;
  // tokens[0] and tokens[1] are the reserved pad/unk entries; the rest map to
  // their index.
  explicit Vocab(std::vector<std::string> tokens);

  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::int32_t id(const std::string& token) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> ids_;
};

struct UtteranceClip {
  UtteranceSpan span;
  AcousticInput audio;
  VisualInput visual;
  std::string text;
  TextInput tokens;
  std::vector<std::string> diagnostics;
};

// Half-open pixel box [x0, x1) x [y0, y1).
struct FaceBox {
  std::size_t x0 = 0;
  std::size_t y0 = 0;
  std::size_t x1 = 0;
  std::size_t y1 = 0;
};

class FaceCropBackend {
 public:
  virtual ~FaceCropBackend() = default;
  virtual FaceBox locate(const Image& image) = 0;
  virtual std::string name() const = 0;
};

// Centered maximal square.
class CenterCropBackend final : public FaceCropBackend {
 public:
  FaceBox locate(const Image& image) override;
  std::string name() const override { return "center"; }
};

// Subprocess adapter. `{image}` is replaced by a PNG path; stdout must be
// {"box": [x0, y0, x1, y1]}.
class ExternalFaceCropBackend final : public FaceCropBackend {
 public:
  explicit ExternalFaceCropBackend(std::string command_template);
  FaceBox locate(const Image& image) override;
  std::string name() const override { return "external"; }

 private:
  std::string command_;
};

class SttBackend {
 public:
  virtual ~SttBackend() = default;
  virtual std::string transcribe(const AudioTrack& track, const UtteranceSpan& span) = 0;
};

// Subprocess adapter. `{audio}` is replaced by a WAV path holding the span's
// samples; stdout must be {"text": "..."}.
class ExternalSttBackend final : public SttBackend {
 public:
  explicit ExternalSttBackend(std::string command_template);
  std::string transcribe(const AudioTrack& track, const UtteranceSpan& span) override;

 private:
  std::string command_;
};

enum class SttMode { None, Sidecar, External };

AcousticInput slice_audio(const AudioTrack& track, const UtteranceSpan& span);

// Indices into the in-span frame list chosen for a span holding `in_span`
// frames: uniform round-half-up spacing, or all of them when fewer than n.
std::vector<std::size_t> sample_indices(std::size_t in_span, std::size_t n = kNumFaces);

// Up to n in-span frames; the caller zero-pads the remainder.
std::vector<const Image*> sample_frames(const FrameSequence& frames,
                                        const UtteranceSpan& span,
                                        std::size_t n = kNumFaces);

// Bilinear resize of box content to out_h x out_w, half-pixel centers,
// edge clamped. Output is raw pixel values (not normalized), interleaved RGB.
std::vector<float> crop_resize(const Image& image, const FaceBox& box, std::size_t out_h,
                               std::size_t out_w);

// Crops with the backend's box (falling back to the center crop when the
// backend fails or returns an invalid box, noted in `diagnostics`), resizes to
// 160x160 and normalizes.
FaceTensor crop_face(const Image& image, FaceCropBackend& backend,
                     std::vector<std::string>* diagnostics = nullptr);

VisualInput build_visual(const FrameSequence& frames, const UtteranceSpan& span,
                         FaceCropBackend& backend, std::vector<std::string>* diagnostics);

// Sidecar: words whose midpoint lies in [start, end]. External: backend text.
// Backend failures return "" and append a diagnostic.
std::string transcribe(const AudioTrack& track, const UtteranceSpan& span, SttMode mode,
                       SttBackend* backend, const std::optional<TimedTranscript>& transcript,
                       std::vector<std::string>* diagnostics = nullptr);

// Lowercase, whitespace split, ASCII punctuation stripped, vocab lookup,
// truncate/pad to 100.
TextInput tokenize(const std::string& text, const Vocab& vocab);

// Everything the encoders need for one span: audio slice, sampled faces,
// transcript and token ids.
UtteranceClip build_clip(const MediaBundle& bundle, const UtteranceSpan& span,
                         FaceCropBackend& face, SttMode stt_mode, SttBackend* stt,
                         const Vocab& vocab);

// Normalized face tensor back to 8-bit RGB (for the UI artifacts).
Image face_to_image(const FaceTensor& face);

}  // namespace mer
