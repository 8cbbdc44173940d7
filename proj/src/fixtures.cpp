#include "mer/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mer/error.hpp"
#include "mer/rng.hpp"

namespace fs = std::filesystem;

namespace mer {
namespace {

// Word list of the shipped vocab (ids start at 2).
const std::vector<std::string> kWords = {
    "i",     "am",     "happy", "this",   "is",    "so",    "sad",    "and",   "scary",
    "what",  "a",      "great", "day",    "you",   "are",   "not",    "fair",  "wow",
    "that",  "was",    "gross", "angry",  "me",    "we",    "did",    "it",    "really",
    "feel",  "good",   "bad",   "afraid", "of",    "the",   "dark",   "love",  "hate",
    "yes",   "no",     "maybe", "very",   "much",  "thank", "sorry",  "oh",    "my",
    "god",   "please", "stop",  "never",  "again", "always", "fine",  "okay",  "well"};

void draw_face(Image& img, double t, std::uint64_t seed) {
  const double h = static_cast<double>(img.height);
  const double w = static_cast<double>(img.width);
  const double cx = w / 2.0 + 6.0 * std::sin(t * 1.3 + static_cast<double>(seed % 7));
  const double cy = h / 2.0 + 4.0 * std::cos(t * 0.9);
  const double rx = w * 0.22;
  const double ry = h * 0.36;
  const double mouth = 0.5 + 0.5 * std::sin(t * 3.0);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const double fx = static_cast<double>(x);
      const double fy = static_cast<double>(y);
      // Background gradient.
      double r = 40.0 + 60.0 * fx / w;
      double g = 50.0 + 40.0 * fy / h;
      double b = 90.0 + 30.0 * std::sin(t + fx / 25.0);
      const double dx = (fx - cx) / rx;
      const double dy = (fy - cy) / ry;
      if (dx * dx + dy * dy <= 1.0) {
        r = 215.0 - 20.0 * dy;
        g = 170.0 - 15.0 * dy;
        b = 140.0;
        const double ex = std::abs(fx - cx) - rx * 0.4;
        const double ey = fy - (cy - ry * 0.25);
        if (ex * ex + ey * ey < 16.0) r = g = b = 30.0;
        const double my = fy - (cy + ry * 0.45);
        if (std::abs(fx - cx) < rx * 0.45 && std::abs(my) < 2.0 + 5.0 * mouth) {
          r = 150.0;
          g = 40.0;
          b = 50.0;
        }
      }
      img.at(y, x, 0) = static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
      img.at(y, x, 1) = static_cast<std::uint8_t>(std::clamp(g, 0.0, 255.0));
      img.at(y, x, 2) = static_cast<std::uint8_t>(std::clamp(b, 0.0, 255.0));
    }
  }
}

void fill_uniform(std::vector<double>& values, double bound, Rng& rng) {
  for (double& v : values) v = static_cast<float>(rng.uniform(-bound, bound));
}

}  // namespace

std::vector<std::string> fixture_kinds() { return {"silence", "one-utt", "two-utt", "many-utt"}; }

SyntheticScene fixture_scene(const std::string& kind) {
  SyntheticScene s;
  if (kind == "silence") {
    s.noise_amplitude = 0.0;
  } else if (kind == "one-utt") {
    s.bursts = {{1.0, 2.5, 440.0, 0.3}};
    s.words = {{"i", 1.1, 1.3}, {"am", 1.4, 1.6}, {"happy", 1.7, 2.0}};
  } else if (kind == "two-utt") {
    s.duration_s = 6.0;
    s.bursts = {{1.0, 2.2, 440.0, 0.3}, {3.4, 5.0, 220.0, 0.5}};
    s.words = {{"i", 1.1, 1.3},      {"am", 1.4, 1.6},     {"happy", 1.7, 2.0},
               {"this", 3.5, 3.7},   {"is", 3.75, 3.9},    {"so", 3.95, 4.1},
               {"sad", 4.15, 4.4},   {"and", 4.45, 4.55},  {"scary", 4.6, 4.9}};
  } else if (kind == "many-utt") {
    s.duration_s = 12.0;
    const std::vector<std::string> words = {"wow", "okay", "no", "yes", "really", "stop"};
    for (std::size_t i = 0; i < 6; ++i) {
      const double start = 0.8 + 1.8 * static_cast<double>(i);
      s.bursts.push_back({start, start + 0.9, 200.0 + 60.0 * static_cast<double>(i), 0.3});
      s.words.push_back({words[i], start + 0.2, start + 0.6});
    }
  } else {
    throw Error(ErrorKind::InvalidInput, "unknown fixture kind '" + kind + "'");
  }
  return s;
}

MediaBundle render_scene(const SyntheticScene& scene, std::uint64_t seed,
                         const std::string& source_id) {
  Rng rng(seed);
  MediaBundle b;
  b.source_id = source_id;
  const auto n = static_cast<std::size_t>(std::llround(scene.duration_s * kDefaultSampleRate));
  b.audio.sample_rate_hz = kDefaultSampleRate;
  b.audio.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kDefaultSampleRate;
    double v = scene.noise_amplitude > 0.0 ? rng.uniform(-scene.noise_amplitude, scene.noise_amplitude)
                                           : 0.0;
    for (const auto& burst : scene.bursts) {
      if (t >= burst.start_s && t < burst.end_s) {
        v += burst.amplitude * std::sin(2.0 * std::numbers::pi * burst.freq_hz * t);
      }
    }
    b.audio.samples[i] = static_cast<float>(v);
  }

  const auto n_frames = static_cast<std::size_t>(std::llround(scene.duration_s * scene.fps));
  for (std::size_t i = 0; i < n_frames; ++i) {
    const double t = static_cast<double>(i) / scene.fps;
    Image img(scene.frame_height, scene.frame_width);
    draw_face(img, t, seed);
    b.frames.frames.push_back(std::move(img));
    b.frames.timestamps_s.push_back(t);
  }
  if (!scene.words.empty()) b.transcript = scene.words;
  return b;
}

void generate_fixture(const std::string& kind, std::uint64_t seed, const fs::path& out_dir) {
  const MediaBundle bundle = render_scene(fixture_scene(kind), seed, kind);
  if (fs::exists(out_dir)) fs::remove_all(out_dir);
  write_bundle(out_dir, bundle);
}

ReferenceModel make_reference_model(std::uint64_t seed) {
  ReferenceModel m;
  std::vector<std::string> tokens = {"<pad>", "<unk>"};
  tokens.insert(tokens.end(), kWords.begin(), kWords.end());
  m.vocab = Vocab(tokens);

  EncoderConfig ec;
  FusionConfig fc;
  m.weights.encoder_cfg = ec;
  m.weights.fusion_cfg = fc;

  Rng rng(seed);
  EncoderWeights enc{Matrix(ec.d_visual, kPooledValues), Matrix(ec.d_acoustic, ec.acoustic_window),
                     Matrix(m.vocab.size(), ec.d_textual)};
  fill_uniform(enc.vis_proj.data(), std::sqrt(3.0 / kPooledValues) * 2.0, rng);
  fill_uniform(enc.aco_proj.data(), std::sqrt(3.0 / static_cast<double>(ec.acoustic_window)) * 4.0,
               rng);
  fill_uniform(enc.txt_emb.data(), 1.0, rng);
  for (double& v : enc.txt_emb.row(0)) v = 0.0;  // pad embeds to zero
  m.weights.encoders = std::move(enc);

  FusionWeights fw = FusionWeights::random(fc, rng.next());
  // Widen the head's output range.
  for (double& v : fw.lin2_w.data()) v = static_cast<float>(v * 6.0);
  for (double& v : fw.lin1_w.data()) v = static_cast<float>(v * 2.0);
  for (auto* layer : {&fw.conv_vis, &fw.conv_aco, &fw.conv_txt}) {
    for (double& v : layer->w.data()) v = static_cast<float>(v * 3.0);
  }
  m.weights.fusion = std::move(fw);
  m.thresholds = {0.45, 0.5, 0.4, 0.55, 0.5, 0.35};
  return m;
}

void write_reference_model(const ReferenceModel& model, const fs::path& dir) {
  save_weights(model.weights, dir);
  model.vocab.save(dir / "vocab.json");
  save_thresholds(dir / "thresholds.json", model.thresholds);
}

Dataset make_separable_dataset(std::size_t n, const SyntheticDims& dims, std::uint64_t seed) {
  Rng rng(seed);
  const auto directions = [&](std::size_t d) {
    Matrix u(kNumEmotions, d);
    for (double& v : u.data()) v = rng.normal();
    return u;
  };
  const Matrix uv = directions(dims.d_visual);
  const Matrix ua = directions(dims.d_acoustic);
  const Matrix ut = directions(dims.d_textual);

  const auto make_seq = [&](std::size_t steps, const Matrix& u, const EmotionVector& labels) {
    Matrix x(steps, u.cols());
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t d = 0; d < u.cols(); ++d) {
        double v = 0.3 * rng.normal();
        for (std::size_t e = 0; e < kNumEmotions; ++e) v += (2.0 * labels[e] - 1.0) * u(e, d) * 0.5;
        x(t, d) = v;
      }
    }
    return x;
  };

  Dataset data;
  data.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    TrainingSample s;
    for (double& y : s.labels) y = rng.uniform() < 0.4 ? 1.0 : 0.0;
    s.visual = make_seq(dims.t_visual, uv, s.labels);
    s.acoustic = make_seq(dims.t_acoustic, ua, s.labels);
    s.textual = make_seq(dims.t_textual, ut, s.labels);
    data.push_back(std::move(s));
  }
  return data;
}

}  // namespace mer
