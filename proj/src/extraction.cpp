#include "mer/extraction.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "mer/error.hpp"
#include "mer/subprocess.hpp"
#include "mer/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mer {
namespace {

fs::path temp_path(const std::string& stem, const std::string& ext) {
  std::random_device rd;
  return fs::temp_directory_path() /
         (stem + "-" + std::to_string(rd()) + "-" + std::to_string(rd()) + ext);
}

bool valid_box(const FaceBox& b, const Image& img) {
  return b.x0 < b.x1 && b.y0 < b.y1 && b.x1 <= img.width && b.y1 <= img.height;
}

FaceTensor normalize(const std::vector<float>& raw) {
  FaceTensor out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - 127.5f) / 128.0f;
  return out;
}

}  // namespace

// --- Vocab ---------------------------------------------------------------

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 2) {
    throw Error(ErrorKind::InvalidConfig, "vocab needs the <pad> and <unk> entries");
  }
  for (std::size_t i = 2; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<std::int32_t>(i)).second) {
      throw Error(ErrorKind::InvalidConfig, "vocab: duplicate token '" + tokens_[i] + "'");
    }
  }
}

Vocab Vocab::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  try {
    const json doc = json::parse(in);
    return Vocab(doc.at("tokens").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  }
}

void Vocab::save(const fs::path& path) const {
  std::ofstream(path) << json{{"tokens", tokens_}}.dump() << '\n';
}

std::int32_t Vocab::id(const std::string& token) const {
  const auto it = ids_.find(token);
  return it == ids_.end() ? kUnkId : it->second;
}

// --- Audio -----------------------------------------------------------------

AcousticInput slice_audio(const AudioTrack& track, const UtteranceSpan& span) {
  const double duration = track.duration_s();
  if (span.start_s < 0.0 || span.end_s < span.start_s || span.end_s > duration + 1e-9) {
    throw Error(ErrorKind::SpanOutOfRange,
                "span [" + std::to_string(span.start_s) + ", " + std::to_string(span.end_s) +
                    "] outside audio of " + std::to_string(duration) + " s");
  }
  const std::size_t n = track.samples.size();
  const auto begin = std::min(
      n, static_cast<std::size_t>(std::floor(span.start_s * track.sample_rate_hz)));
  const auto end =
      std::min(n, static_cast<std::size_t>(std::floor(span.end_s * track.sample_rate_hz)));
  AcousticInput out;
  out.n_real = std::min(end - begin, kAudioSamples);
  std::copy_n(track.samples.begin() + static_cast<std::ptrdiff_t>(begin), out.n_real,
              out.samples.begin());
  return out;
}

// --- Frames ----------------------------------------------------------------

std::vector<std::size_t> sample_indices(std::size_t in_span, std::size_t n) {
  std::vector<std::size_t> idx;
  if (in_span == 0 || n == 0) return idx;
  if (in_span < n || n == 1) {
    const std::size_t take = std::min(in_span, n);
    for (std::size_t i = 0; i < take; ++i) idx.push_back(i);
    return idx;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double pos = static_cast<double>(i) * static_cast<double>(in_span - 1) /
                       static_cast<double>(n - 1);
    idx.push_back(static_cast<std::size_t>(std::floor(pos + 0.5)));
  }
  return idx;
}

std::vector<const Image*> sample_frames(const FrameSequence& frames,
                                        const UtteranceSpan& span, std::size_t n) {
  std::vector<const Image*> in_span;
  for (std::size_t i = 0; i < frames.frames.size(); ++i) {
    const double t = frames.timestamps_s[i];
    if (t >= span.start_s && t <= span.end_s) in_span.push_back(&frames.frames[i]);
  }
  std::vector<const Image*> picked;
  for (std::size_t i : sample_indices(in_span.size(), n)) picked.push_back(in_span[i]);
  return picked;
}

// --- Faces -----------------------------------------------------------------

FaceBox CenterCropBackend::locate(const Image& image) {
  const std::size_t side = std::min(image.width, image.height);
  const std::size_t x0 = (image.width - side) / 2;
  const std::size_t y0 = (image.height - side) / 2;
  return {x0, y0, x0 + side, y0 + side};
}

ExternalFaceCropBackend::ExternalFaceCropBackend(std::string command_template)
    : command_(std::move(command_template)) {}

FaceBox ExternalFaceCropBackend::locate(const Image& image) {
  const fs::path tmp = temp_path("mer-face", ".png");
  write_png(tmp, image);
  ProcessResult res;
  try {
    res = run_process(expand_command(command_, {{"image", tmp.string()}}));
  } catch (const Error& e) {
    fs::remove(tmp);
    throw Error(ErrorKind::BackendFailure, std::string("face: ") + e.what());
  }
  fs::remove(tmp);
  if (res.exit_code != 0) {
    throw Error(ErrorKind::BackendFailure,
                "face backend exited with status " + std::to_string(res.exit_code));
  }
  try {
    const auto box = json::parse(res.out).at("box").get<std::vector<long long>>();
    if (box.size() != 4 || std::any_of(box.begin(), box.end(), [](long long v) { return v < 0; })) {
      throw Error(ErrorKind::BackendFailure, "face backend returned a malformed box");
    }
    return {static_cast<std::size_t>(box[0]), static_cast<std::size_t>(box[1]),
            static_cast<std::size_t>(box[2]), static_cast<std::size_t>(box[3])};
  } catch (const json::exception& e) {
    throw Error(ErrorKind::BackendFailure, std::string("face: bad response: ") + e.what());
  }
}

std::vector<float> crop_resize(const Image& image, const FaceBox& box, std::size_t out_h,
                               std::size_t out_w) {
  if (!valid_box(box, image) || out_h == 0 || out_w == 0) {
    throw Error(ErrorKind::ShapeMismatch, "crop box outside image");
  }
  const std::size_t bw = box.x1 - box.x0;
  const std::size_t bh = box.y1 - box.y0;
  const double sx = static_cast<double>(bw) / static_cast<double>(out_w);
  const double sy = static_cast<double>(bh) / static_cast<double>(out_h);

  std::vector<float> out(out_h * out_w * 3);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const double fy = std::clamp((static_cast<double>(oy) + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(bh - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, bh - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const double fx = std::clamp((static_cast<double>(ox) + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(bw - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, bw - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double p00 = image.at(box.y0 + y0, box.x0 + x0, c);
        const double p01 = image.at(box.y0 + y0, box.x0 + x1, c);
        const double p10 = image.at(box.y0 + y1, box.x0 + x0, c);
        const double p11 = image.at(box.y0 + y1, box.x0 + x1, c);
        const double top = p00 + (p01 - p00) * wx;
        const double bottom = p10 + (p11 - p10) * wx;
        out[(oy * out_w + ox) * 3 + c] = static_cast<float>(top + (bottom - top) * wy);
      }
    }
  }
  return out;
}

FaceTensor crop_face(const Image& image, FaceCropBackend& backend,
                     std::vector<std::string>* diagnostics) {
  if (image.width == 0 || image.height == 0) {
    throw Error(ErrorKind::ShapeMismatch, "empty image");
  }
  FaceBox box;
  try {
    box = backend.locate(image);
    if (!valid_box(box, image)) {
      throw Error(ErrorKind::BackendFailure, "face box outside image");
    }
  } catch (const Error& e) {
    if (diagnostics != nullptr) {
      diagnostics->push_back(std::string("face crop fell back to center: ") + e.what());
    }
    box = CenterCropBackend{}.locate(image);
  }
  return normalize(crop_resize(image, box, kFaceSize, kFaceSize));
}

VisualInput build_visual(const FrameSequence& frames, const UtteranceSpan& span,
                         FaceCropBackend& backend, std::vector<std::string>* diagnostics) {
  VisualInput v;
  const auto picked = sample_frames(frames, span, kNumFaces);
  v.n_real = picked.size();
  for (std::size_t i = 0; i < kNumFaces; ++i) {
    v.images[i] = i < picked.size() ? crop_face(*picked[i], backend, diagnostics)
                                    : FaceTensor(kFaceValues, 0.0f);
  }
  return v;
}

Image face_to_image(const FaceTensor& face) {
  Image img(kFaceSize, kFaceSize);
  for (std::size_t i = 0; i < face.size() && i < img.pixels.size(); ++i) {
    const double v = std::lround(static_cast<double>(face[i]) * 128.0 + 127.5);
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  return img;
}

// --- Text ------------------------------------------------------------------

ExternalSttBackend::ExternalSttBackend(std::string command_template)
    : command_(std::move(command_template)) {}

std::string ExternalSttBackend::transcribe(const AudioTrack& track,
                                           const UtteranceSpan& span) {
  const std::size_t n = track.samples.size();
  const auto begin = std::min(n, static_cast<std::size_t>(span.start_s * track.sample_rate_hz));
  const auto end = std::min(n, static_cast<std::size_t>(span.end_s * track.sample_rate_hz));
  const std::vector<float> slice(track.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                                 track.samples.begin() + static_cast<std::ptrdiff_t>(end));
  const fs::path tmp = temp_path("mer-stt", ".wav");
  write_wav(tmp, slice, track.sample_rate_hz, WavEncoding::Float32);
  ProcessResult res;
  try {
    res = run_process(expand_command(command_, {{"audio", tmp.string()}}));
  } catch (const Error& e) {
    fs::remove(tmp);
    throw Error(ErrorKind::BackendFailure, std::string("stt: ") + e.what());
  }
  fs::remove(tmp);
  if (res.exit_code != 0) {
    throw Error(ErrorKind::BackendFailure,
                "stt exited with status " + std::to_string(res.exit_code));
  }
  try {
    return json::parse(res.out).at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::BackendFailure, std::string("stt: bad response: ") + e.what());
  }
}

std::string transcribe(const AudioTrack& track, const UtteranceSpan& span, SttMode mode,
                       SttBackend* backend, const std::optional<TimedTranscript>& transcript,
                       std::vector<std::string>* diagnostics) {
  if (mode == SttMode::Sidecar) {
    if (!transcript) return {};
    std::string text;
    for (const auto& w : *transcript) {
      const double mid = (w.start_s + w.end_s) / 2.0;
      if (mid < span.start_s || mid > span.end_s) continue;
      if (!text.empty()) text.push_back(' ');
      text += w.word;
    }
    return text;
  }
  if (mode == SttMode::External && backend != nullptr) {
    try {
      return backend->transcribe(track, span);
    } catch (const Error& e) {
      if (diagnostics != nullptr) diagnostics->push_back(std::string("stt failed: ") + e.what());
      return {};
    }
  }
  return {};
}

TextInput tokenize(const std::string& text, const Vocab& vocab) {
  TextInput out;
  std::istringstream words(text);
  std::string word;
  while (out.n_real < kNumTokens && words >> word) {
    std::transform(word.begin(), word.end(), word.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    const auto is_punct = [](unsigned char c) { return c < 128 && std::ispunct(c); };
    std::size_t b = 0, e = word.size();
    while (b < e && is_punct(static_cast<unsigned char>(word[b]))) ++b;
    while (e > b && is_punct(static_cast<unsigned char>(word[e - 1]))) --e;
    if (b == e) continue;
    out.token_ids[out.n_real++] = vocab.id(word.substr(b, e - b));
  }
  return out;
}

UtteranceClip build_clip(const MediaBundle& bundle, const UtteranceSpan& span,
                         FaceCropBackend& face, SttMode stt_mode, SttBackend* stt,
                         const Vocab& vocab) {
  UtteranceClip clip;
  clip.span = span;
  clip.audio = slice_audio(bundle.audio, span);
  clip.visual = build_visual(bundle.frames, span, face, &clip.diagnostics);
  clip.text = transcribe(bundle.audio, span, stt_mode, stt, bundle.transcript, &clip.diagnostics);
  clip.tokens = tokenize(clip.text, vocab);
  return clip;
}

}  // namespace mer
