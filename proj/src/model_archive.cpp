#include "mer/model_archive.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mer/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mer {
namespace {

struct TensorRef {
  std::vector<std::size_t> shape;
  std::span<double> values;
};

std::size_t element_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

json fusion_to_json(const FusionConfig& c) {
  return {{"d_visual", c.d_visual}, {"d_acoustic", c.d_acoustic},
          {"d_textual", c.d_textual}, {"conv_channels", c.conv_channels},
          {"kernel", c.kernel},      {"hidden", c.hidden},
          {"n_emotions", c.n_emotions}};
}

json encoder_to_json(const EncoderConfig& c) {
  return {{"d_visual", c.d_visual},
          {"d_acoustic", c.d_acoustic},
          {"d_textual", c.d_textual},
          {"acoustic_window", c.acoustic_window},
          {"acoustic_hop", c.acoustic_hop}};
}

json read_json(const fs::path& path, ErrorKind parse_kind) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(parse_kind, path.string() + ": " + e.what());
  }
}

std::map<std::string, TensorRef> tensor_table(ModelWeights& m, std::size_t vocab_rows) {
  std::map<std::string, TensorRef> table;
  if (m.encoders) {
    auto& e = *m.encoders;
    table["vis.proj"] = {{m.encoder_cfg.d_visual, kPooledValues}, e.vis_proj.data()};
    table["aco.proj"] = {{m.encoder_cfg.d_acoustic, m.encoder_cfg.acoustic_window},
                         e.aco_proj.data()};
    table["txt.emb"] = {{vocab_rows, m.encoder_cfg.d_textual}, e.txt_emb.data()};
  }
  for_each_tensor(m.fusion, m.fusion_cfg,
                  [&](const std::string& name, const std::vector<std::size_t>& shape,
                      std::span<double> values) { table[name] = {shape, values}; });
  return table;
}

}  // namespace

void save_weights(const ModelWeights& model, const fs::path& dir) {
  fs::create_directories(dir);
  ModelWeights copy = model;
  copy.fusion.check(copy.fusion_cfg);
  const std::size_t vocab_rows = copy.encoders ? copy.encoders->txt_emb.rows() : 0;

  // Fixed write order: encoders first, then fusion tensors.
  std::vector<std::pair<std::string, TensorRef>> ordered;
  auto table = tensor_table(copy, vocab_rows);
  for (const char* name : {"vis.proj", "aco.proj", "txt.emb"}) {
    if (auto it = table.find(name); it != table.end()) ordered.emplace_back(*it);
  }
  for_each_tensor(copy.fusion, copy.fusion_cfg,
                  [&](const std::string& name, const std::vector<std::size_t>&,
                      std::span<double>) { ordered.emplace_back(name, table.at(name)); });

  std::string blob;
  json entries = json::array();
  for (const auto& [name, ref] : ordered) {
    if (ref.values.size() != element_count(ref.shape)) {
      throw Error(ErrorKind::ShapeMismatch, name + " element count does not match shape");
    }
    const std::size_t offset = blob.size();
    for (double v : ref.values) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) blob.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
    }
    entries.push_back({{"name", name},
                       {"dtype", "f32"},
                       {"shape", ref.shape},
                       {"offset", offset},
                       {"byte_len", blob.size() - offset}});
  }

  std::ofstream(dir / "manifest.json")
      << json{{"magic", kArchiveMagic}, {"tensors", entries}}.dump(1) << '\n';
  std::ofstream bin(dir / "weights.bin", std::ios::binary | std::ios::trunc);
  bin.write(blob.data(), static_cast<std::streamsize>(blob.size()));

  json emotions = json::array();
  for (auto e : kEmotionNames) emotions.push_back(std::string(e));
  std::ofstream(dir / "config.json")
      << json{{"fusion", fusion_to_json(model.fusion_cfg)},
              {"encoder", encoder_to_json(model.encoder_cfg)},
              {"emotions", emotions}}
             .dump(1)
      << '\n';
}

ModelWeights load_weights(const fs::path& dir) {
  const json manifest = read_json(dir / "manifest.json", ErrorKind::BadMagic);
  if (!manifest.is_object() || manifest.value("magic", std::string{}) != kArchiveMagic) {
    throw Error(ErrorKind::BadMagic, (dir / "manifest.json").string() + ": expected magic " +
                                         kArchiveMagic);
  }
  const json config = read_json(dir / "config.json", ErrorKind::ManifestMismatch);

  ModelWeights m;
  try {
    const auto& f = config.at("fusion");
    m.fusion_cfg = {f.at("d_visual").get<std::size_t>(),    f.at("d_acoustic").get<std::size_t>(),
                    f.at("d_textual").get<std::size_t>(),   f.at("conv_channels").get<std::size_t>(),
                    f.at("kernel").get<std::size_t>(),      f.at("hidden").get<std::size_t>(),
                    f.at("n_emotions").get<std::size_t>()};
    const auto& e = config.at("encoder");
    m.encoder_cfg = {e.at("d_visual").get<std::size_t>(), e.at("d_acoustic").get<std::size_t>(),
                     e.at("d_textual").get<std::size_t>(),
                     e.at("acoustic_window").get<std::size_t>(),
                     e.at("acoustic_hop").get<std::size_t>()};
    const auto emotions = config.at("emotions").get<std::vector<std::string>>();
    if (emotions.size() != kNumEmotions ||
        !std::equal(emotions.begin(), emotions.end(), kEmotionNames.begin())) {
      throw Error(ErrorKind::ManifestMismatch, "config.json: emotion order differs");
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::ManifestMismatch, (dir / "config.json").string() + ": " + ex.what());
  }
  try {
    m.fusion_cfg.validate();
    m.encoder_cfg.validate();
  } catch (const Error& ex) {
    throw Error(ErrorKind::ManifestMismatch, ex.what());
  }

  std::ifstream bin_in(dir / "weights.bin", std::ios::binary);
  if (!bin_in) throw Error(ErrorKind::MissingFile, (dir / "weights.bin").string());
  std::ostringstream ss;
  ss << bin_in.rdbuf();
  const std::string blob = ss.str();

  struct Entry {
    std::vector<std::size_t> shape;
    std::size_t offset;
    std::size_t byte_len;
  };
  std::map<std::string, Entry> entries;
  try {
    for (const auto& t : manifest.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      if (t.at("dtype").get<std::string>() != "f32") {
        throw Error(ErrorKind::ManifestMismatch, name + ": dtype must be f32");
      }
      Entry e{t.at("shape").get<std::vector<std::size_t>>(), t.at("offset").get<std::size_t>(),
              t.at("byte_len").get<std::size_t>()};
      if (e.byte_len != element_count(e.shape) * 4) {
        throw Error(ErrorKind::TruncatedBlob, name + ": byte_len " + std::to_string(e.byte_len) +
                                                  " does not match shape");
      }
      if (e.offset > blob.size() || e.byte_len > blob.size() - e.offset) {
        throw Error(ErrorKind::TruncatedBlob, name + ": extends past end of weights.bin");
      }
      if (!entries.emplace(name, std::move(e)).second) {
        throw Error(ErrorKind::ManifestMismatch, "duplicate tensor " + name);
      }
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::ManifestMismatch, (dir / "manifest.json").string() + ": " + ex.what());
  }

  const bool has_encoders = entries.contains("vis.proj") || entries.contains("aco.proj") ||
                            entries.contains("txt.emb");
  std::size_t vocab_rows = 0;
  if (has_encoders) {
    for (const char* name : {"vis.proj", "aco.proj", "txt.emb"}) {
      if (!entries.contains(name)) {
        throw Error(ErrorKind::ManifestMismatch, std::string("missing tensor ") + name);
      }
    }
    const auto& emb_shape = entries.at("txt.emb").shape;
    if (emb_shape.size() != 2) throw Error(ErrorKind::ManifestMismatch, "txt.emb must be 2-D");
    vocab_rows = emb_shape[0];
    m.encoders = EncoderWeights{Matrix(m.encoder_cfg.d_visual, kPooledValues),
                                Matrix(m.encoder_cfg.d_acoustic, m.encoder_cfg.acoustic_window),
                                Matrix(vocab_rows, m.encoder_cfg.d_textual)};
  }
  m.fusion = FusionWeights::zeros(m.fusion_cfg);

  auto table = tensor_table(m, vocab_rows);
  for (const auto& [name, e] : entries) {
    const auto it = table.find(name);
    if (it == table.end()) throw Error(ErrorKind::ManifestMismatch, "unknown tensor " + name);
    if (e.shape != it->second.shape) {
      throw Error(ErrorKind::ManifestMismatch, name + ": shape disagrees with config.json");
    }
    auto values = it->second.values;
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(
                    static_cast<unsigned char>(blob[e.offset + 4 * i + static_cast<std::size_t>(b)]))
                << (8 * b);
      }
      const float v = std::bit_cast<float>(bits);
      if (!std::isfinite(v)) throw Error(ErrorKind::ManifestMismatch, name + ": non-finite value");
      values[i] = v;
    }
  }
  for (const auto& [name, ref] : table) {
    if (!entries.contains(name)) throw Error(ErrorKind::ManifestMismatch, "missing tensor " + name);
  }
  return m;
}

}  // namespace mer
