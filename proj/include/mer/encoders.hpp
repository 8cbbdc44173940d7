#pragma once

#include <cstddef>
#include <string>

#include "mer/extraction.hpp"
#include "mer/tensor.hpp"

namespace mer {

struct EncoderConfig {
  std::size_t d_visual = 512;
  std::size_t d_acoustic = 768;
  std::size_t d_textual = 768;
  std::size_t acoustic_window = 400;
  std::size_t acoustic_hop = 320;

  void validate() const;
  // floor((160000 - window) / hop) + 1
  std::size_t acoustic_steps() const;
};

inline constexpr std::size_t kPoolSide = 8;
inline constexpr std::size_t kPooledValues = kPoolSide * kPoolSide * 3;  // 192

// Reference encoder parameters as stored in the model archive.
struct EncoderWeights {
  Matrix vis_proj;  // d_visual x 192     ("vis.proj")
  Matrix aco_proj;  // d_acoustic x 400   ("aco.proj")
  Matrix txt_emb;   // vocab x d_textual  ("txt.emb")
};

// Each face -> 8x8x3 average pool -> linear map. One row per face.
EmbeddingSeq encode_visual(const VisualInput& input, const EncoderWeights& w,
                           const EncoderConfig& cfg);
// 400-sample windows every 320 samples, each linearly projected.
EmbeddingSeq encode_acoustic(const AcousticInput& input, const EncoderWeights& w,
                             const EncoderConfig& cfg);
// Embedding table lookup per token id.
EmbeddingSeq encode_textual(const TextInput& input, const EncoderWeights& w,
                            const EncoderConfig& cfg);

struct EncodedUtterance {
  EmbeddingSeq visual;
  EmbeddingSeq acoustic;
  EmbeddingSeq textual;
};

class EncoderBackend {
 public:
  virtual ~EncoderBackend() = default;
  virtual EmbeddingSeq visual(const VisualInput& input) = 0;
  virtual EmbeddingSeq acoustic(const AcousticInput& input) = 0;
  virtual EmbeddingSeq textual(const TextInput& input) = 0;
  virtual bool concurrent_safe() const = 0;

  EncodedUtterance encode(const UtteranceClip& clip) {
    return {visual(clip.visual), acoustic(clip.audio), textual(clip.tokens)};
  }
};

class ReferenceEncoders final : public EncoderBackend {
 public:
  ReferenceEncoders(const EncoderWeights& weights, EncoderConfig cfg)
      : weights_(weights), cfg_(cfg) {}

  EmbeddingSeq visual(const VisualInput& input) override {
    return encode_visual(input, weights_, cfg_);
  }
  EmbeddingSeq acoustic(const AcousticInput& input) override {
    return encode_acoustic(input, weights_, cfg_);
  }
  EmbeddingSeq textual(const TextInput& input) override {
    return encode_textual(input, weights_, cfg_);
  }
  bool concurrent_safe() const override { return true; }

 private:
  const EncoderWeights& weights_;
  EncoderConfig cfg_;
};

// Adapter for an external graph runtime, run as a subprocess per call.
// The command template receives `{graph}` and `{modality}` (visual, acoustic
// or textual). stdin carries the flattened input as little-endian f32 (token
// ids as f32 too); stdout must return u32 rows, u32 cols, then rows*cols
// little-endian f32 values. Output width is checked against the config.
class ExternalEncoders final : public EncoderBackend {
 public:
  ExternalEncoders(std::string command_template, std::string graph_path, EncoderConfig cfg,
                   bool concurrent_safe);

  EmbeddingSeq visual(const VisualInput& input) override;
  EmbeddingSeq acoustic(const AcousticInput& input) override;
  EmbeddingSeq textual(const TextInput& input) override;
  bool concurrent_safe() const override { return concurrent_safe_; }

 private:
  EmbeddingSeq call(const std::string& modality, const std::string& payload,
                    std::size_t expected_dim);

  std::string command_;
  std::string graph_;
  EncoderConfig cfg_;
  bool concurrent_safe_;
};

}  // namespace mer
