#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mer/calibration.hpp"
#include "mer/extraction.hpp"
#include "mer/media.hpp"
#include "mer/model_archive.hpp"
#include "mer/trainer.hpp"

namespace mer {

// A synthetic tone burst standing in for speech.
struct ToneBurst {
  double start_s = 0.0;
  double end_s = 0.0;
  double freq_hz = 440.0;
  double amplitude = 0.3;
};

struct SyntheticScene {
  double duration_s = 4.0;
  double fps = 10.0;
  std::size_t frame_height = 120;
  std::size_t frame_width = 160;
  double noise_amplitude = 0.001;
  std::vector<ToneBurst> bursts;
  TimedTranscript words;
};

// Kinds accepted by gen-fixture: silence, one-utt, two-utt, many-utt.
std::vector<std::string> fixture_kinds();
SyntheticScene fixture_scene(const std::string& kind);

// Renders audio (16 kHz), frames and transcript for a scene.
MediaBundle render_scene(const SyntheticScene& scene, std::uint64_t seed,
                         const std::string& source_id);

// Writes a deterministic bundle directory; same kind + seed => same bytes.
void generate_fixture(const std::string& kind, std::uint64_t seed,
                      const std::filesystem::path& out_dir);

struct ReferenceModel {
  ModelWeights weights;
  Vocab vocab;
  Thresholds thresholds{};
};

// Reference-sized model (512/768/768 dims, C=128, H=256) with seeded weights,
// a small word vocab and fixed thresholds.
ReferenceModel make_reference_model(std::uint64_t seed);
void write_reference_model(const ReferenceModel& model, const std::filesystem::path& dir);

struct SyntheticDims {
  std::size_t d_visual = 8;
  std::size_t d_acoustic = 8;
  std::size_t d_textual = 8;
  std::size_t t_visual = 5;
  std::size_t t_acoustic = 6;
  std::size_t t_textual = 4;
};

// Labels are drawn first; every embedding row is noise plus a sum of fixed
// per-emotion directions signed by the labels.
Dataset make_separable_dataset(std::size_t n, const SyntheticDims& dims, std::uint64_t seed);

}  // namespace mer
