#include "mer/encoders.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "mer/error.hpp"
#include "mer/kernels.hpp"
#include "mer/subprocess.hpp"

namespace mer {
namespace {

void expect_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw Error(ErrorKind::ShapeMismatch,
                std::string(name) + " is " + std::to_string(m.rows()) + "x" +
                    std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                    std::to_string(cols));
  }
}

void append_f32(std::string& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

std::uint32_t read_u32(const std::string& s, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[at + i])) << (8 * i);
  }
  return v;
}

}  // namespace

void EncoderConfig::validate() const {
  if (d_visual == 0 || d_acoustic == 0 || d_textual == 0) {
    throw Error(ErrorKind::InvalidConfig, "encoder dims must be positive");
  }
  if (acoustic_hop == 0 || acoustic_window < acoustic_hop ||
      acoustic_window > kAudioSamples) {
    throw Error(ErrorKind::InvalidConfig, "encoder: require 160000 >= window >= hop > 0");
  }
}

std::size_t EncoderConfig::acoustic_steps() const {
  return (kAudioSamples - acoustic_window) / acoustic_hop + 1;
}

EmbeddingSeq encode_visual(const VisualInput& input, const EncoderWeights& w,
                           const EncoderConfig& cfg) {
  expect_shape(w.vis_proj, cfg.d_visual, kPooledValues, "vis.proj");
  Matrix pooled(kNumFaces, kPooledValues);
  for (std::size_t i = 0; i < kNumFaces; ++i) {
    if (input.images[i].size() != kFaceValues) {
      throw Error(ErrorKind::ShapeMismatch, "face tensor " + std::to_string(i) +
                                                " has " + std::to_string(input.images[i].size()) +
                                                " values");
    }
    kernels::avg_pool(input.images[i], kFaceSize, kFaceSize, 3, kPoolSide, kPoolSide,
                      pooled.row(i));
  }
  return kernels::project_rows(pooled, w.vis_proj);
}

EmbeddingSeq encode_acoustic(const AcousticInput& input, const EncoderWeights& w,
                             const EncoderConfig& cfg) {
  expect_shape(w.aco_proj, cfg.d_acoustic, cfg.acoustic_window, "aco.proj");
  if (input.samples.size() != kAudioSamples) {
    throw Error(ErrorKind::ShapeMismatch, "acoustic input must hold 160000 samples");
  }
  const std::size_t steps = cfg.acoustic_steps();
  Matrix frames(steps, cfg.acoustic_window);
  for (std::size_t t = 0; t < steps; ++t) {
    auto row = frames.row(t);
    const float* src = input.samples.data() + t * cfg.acoustic_hop;
    for (std::size_t i = 0; i < cfg.acoustic_window; ++i) row[i] = src[i];
  }
  return kernels::project_rows(frames, w.aco_proj);
}

EmbeddingSeq encode_textual(const TextInput& input, const EncoderWeights& w,
                            const EncoderConfig& cfg) {
  if (w.txt_emb.cols() != cfg.d_textual) {
    throw Error(ErrorKind::ShapeMismatch, "txt.emb width " + std::to_string(w.txt_emb.cols()) +
                                              " != d_textual " + std::to_string(cfg.d_textual));
  }
  Matrix out(kNumTokens, cfg.d_textual);
  for (std::size_t i = 0; i < kNumTokens; ++i) {
    const auto id = input.token_ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= w.txt_emb.rows()) {
      throw Error(ErrorKind::IdOutOfRange, "token id " + std::to_string(id) +
                                               " not below vocab size " +
                                               std::to_string(w.txt_emb.rows()));
    }
    const auto src = w.txt_emb.row(static_cast<std::size_t>(id));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

ExternalEncoders::ExternalEncoders(std::string command_template, std::string graph_path,
                                   EncoderConfig cfg, bool concurrent_safe)
    : command_(std::move(command_template)),
      graph_(std::move(graph_path)),
      cfg_(cfg),
      concurrent_safe_(concurrent_safe) {}

EmbeddingSeq ExternalEncoders::call(const std::string& modality, const std::string& payload,
                                    std::size_t expected_dim) {
  ProcessResult res;
  try {
    res = run_process(expand_command(command_, {{"graph", graph_}, {"modality", modality}}),
                      payload);
  } catch (const Error& e) {
    throw Error(ErrorKind::BackendFailure, std::string("encoder: ") + e.what());
  }
  if (res.exit_code != 0) {
    throw Error(ErrorKind::BackendFailure,
                "encoder exited with status " + std::to_string(res.exit_code) + ": " + res.err);
  }
  if (res.out.size() < 8) throw Error(ErrorKind::BackendFailure, "encoder: short response");
  const std::uint32_t rows = read_u32(res.out, 0);
  const std::uint32_t cols = read_u32(res.out, 4);
  if (res.out.size() != 8 + 4ULL * rows * cols) {
    throw Error(ErrorKind::BackendFailure, "encoder: response length mismatch");
  }
  if (cols != expected_dim || rows == 0) {
    throw Error(ErrorKind::ShapeMismatch, "encoder " + modality + " returned " +
                                              std::to_string(rows) + "x" + std::to_string(cols));
  }
  Matrix out(rows, cols);
  for (std::size_t i = 0; i < out.data().size(); ++i) {
    const float v = std::bit_cast<float>(read_u32(res.out, 8 + 4 * i));
    if (!std::isfinite(v)) throw Error(ErrorKind::BackendFailure, "encoder: non-finite output");
    out.data()[i] = v;
  }
  return out;
}

EmbeddingSeq ExternalEncoders::visual(const VisualInput& input) {
  std::string payload;
  payload.reserve(kNumFaces * kFaceValues * 4);
  for (const auto& img : input.images)
    for (float v : img) append_f32(payload, v);
  return call("visual", payload, cfg_.d_visual);
}

EmbeddingSeq ExternalEncoders::acoustic(const AcousticInput& input) {
  std::string payload;
  payload.reserve(input.samples.size() * 4);
  for (float v : input.samples) append_f32(payload, v);
  return call("acoustic", payload, cfg_.d_acoustic);
}

EmbeddingSeq ExternalEncoders::textual(const TextInput& input) {
  std::string payload;
  for (auto id : input.token_ids) append_f32(payload, static_cast<float>(id));
  return call("textual", payload, cfg_.d_textual);
}

}  // namespace mer
