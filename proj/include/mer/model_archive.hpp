#pragma once

#include <filesystem>
#include <optional>

#include "mer/encoders.hpp"
#include "mer/fusion.hpp"

namespace mer {

// Everything a model archive directory holds:
//   config.json    {"fusion": {...}, "encoder": {...}, "emotions": [...]}
//   manifest.json  {"magic": "MERW1", "tensors": [{name, dtype: "f32", shape,
//                   offset, byte_len}, ...]}
//   weights.bin    little-endian f32, row-major, at the manifest offsets
// Encoder tensors (vis.proj, aco.proj, txt.emb) are optional as a group.
struct ModelWeights {
  EncoderConfig encoder_cfg;
  FusionConfig fusion_cfg;
  std::optional<EncoderWeights> encoders;
  FusionWeights fusion;
};

inline constexpr const char* kArchiveMagic = "MERW1";

void save_weights(const ModelWeights& model, const std::filesystem::path& dir);

// Errors: MissingFile, BadMagic, ManifestMismatch (unknown/missing tensor,
// shape or dtype disagreeing with config), TruncatedBlob (byte_len disagreeing
// with shape, or data past the end of weights.bin).
ModelWeights load_weights(const std::filesystem::path& dir);

}  // namespace mer
