#include <doctest.h>

#include <cmath>
#include <json.hpp>

#include "mer/error.hpp"
#include "mer/model_archive.hpp"
#include "mer/rng.hpp"
#include "test_util.hpp"

using namespace mer;
using nlohmann::json;
using test::TempDir;

namespace {

ModelWeights small_model(bool with_encoders, std::uint64_t seed) {
  ModelWeights m;
  m.encoder_cfg.d_visual = 4;
  m.encoder_cfg.d_acoustic = 3;
  m.encoder_cfg.d_textual = 5;
  m.fusion_cfg.d_visual = 4;
  m.fusion_cfg.d_acoustic = 3;
  m.fusion_cfg.d_textual = 5;
  m.fusion_cfg.conv_channels = 2;
  m.fusion_cfg.hidden = 3;
  m.fusion = FusionWeights::random(m.fusion_cfg, seed);
  // f32 storage: keep values exactly representable.
  for_each_tensor(m.fusion, m.fusion_cfg, [](const std::string&, const std::vector<std::size_t>&,
                                             std::span<double> v) {
    for (double& x : v) x = static_cast<float>(x + 0.125);
  });
  if (with_encoders) {
    Rng rng(seed);
    EncoderWeights e{Matrix(4, kPooledValues), Matrix(3, 400), Matrix(10, 5)};
    for (Matrix* mat : {&e.vis_proj, &e.aco_proj, &e.txt_emb})
      for (double& x : mat->data()) x = static_cast<float>(rng.uniform(-1, 1));
    m.encoders = e;
  }
  return m;
}

void rewrite_manifest(const std::filesystem::path& dir, const std::function<void(json&)>& edit) {
  json doc = json::parse(test::read_file(dir / "manifest.json"));
  edit(doc);
  test::write_file(dir / "manifest.json", doc.dump());
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::Canceled;
}

}  // namespace

TEST_CASE("round trip") {
  TempDir dir;
  for (bool enc : {true, false}) {
    const ModelWeights m = small_model(enc, 3);
    save_weights(m, dir.path());
    const ModelWeights back = load_weights(dir.path());
    CHECK(back.fusion == m.fusion);
    CHECK(back.fusion_cfg == m.fusion_cfg);
    CHECK(back.encoders.has_value() == enc);
    if (enc) {
      CHECK(back.encoders->vis_proj == m.encoders->vis_proj);
      CHECK(back.encoders->txt_emb == m.encoders->txt_emb);
    }
  }
}

TEST_CASE("manifest contents") {
  TempDir dir;
  save_weights(small_model(true, 1), dir.path());
  const json doc = json::parse(test::read_file(dir / "manifest.json"));
  CHECK(doc["magic"] == "MERW1");
  std::size_t total = 0;
  for (const auto& t : doc["tensors"]) {
    CHECK(t["dtype"] == "f32");
    std::size_t n = 1;
    for (auto s : t["shape"]) n *= s.get<std::size_t>();
    CHECK(t["byte_len"].get<std::size_t>() == 4 * n);
    total += 4 * n;
  }
  CHECK(std::filesystem::file_size(dir / "weights.bin") == total);
}

TEST_CASE("load errors") {
  TempDir dir;
  SUBCASE("missing directory") {
    CHECK(kind_of([&] { load_weights(dir / "nope"); }) == ErrorKind::MissingFile);
  }
  save_weights(small_model(true, 2), dir.path());
  SUBCASE("bad magic") {
    rewrite_manifest(dir.path(), [](json& d) { d["magic"] = "MERW0"; });
    CHECK(kind_of([&] { load_weights(dir.path()); }) == ErrorKind::BadMagic);
  }
  SUBCASE("wrong shape") {
    rewrite_manifest(dir.path(), [](json& d) {
      for (auto& t : d["tensors"])
        if (t["name"] == "fus.lin2.b") t["shape"] = {7};
    });
    CHECK(kind_of([&] { load_weights(dir.path()); }) != ErrorKind::Canceled);
  }
  SUBCASE("unknown tensor") {
    rewrite_manifest(dir.path(), [](json& d) {
      json extra = d["tensors"][0];
      extra["name"] = "fus.extra.w";
      d["tensors"].push_back(extra);
    });
    CHECK(kind_of([&] { load_weights(dir.path()); }) == ErrorKind::ManifestMismatch);
  }
  SUBCASE("missing tensor") {
    rewrite_manifest(dir.path(), [](json& d) {
      json& ts = d["tensors"];
      for (std::size_t i = 0; i < ts.size(); ++i)
        if (ts[i]["name"] == "fus.lin1.w") ts.erase(i);
    });
    CHECK(kind_of([&] { load_weights(dir.path()); }) == ErrorKind::ManifestMismatch);
  }
  SUBCASE("truncated blob") {
    const auto size = std::filesystem::file_size(dir / "weights.bin");
    std::filesystem::resize_file(dir / "weights.bin", size - 4);
    CHECK(kind_of([&] { load_weights(dir.path()); }) == ErrorKind::TruncatedBlob);
  }
  SUBCASE("byte_len disagrees with shape") {
    rewrite_manifest(dir.path(), [](json& d) { d["tensors"][0]["byte_len"] = 8; });
    CHECK(kind_of([&] { load_weights(dir.path()); }) == ErrorKind::TruncatedBlob);
  }
}

TEST_CASE("shipped reference model loads") {
  const ModelWeights m = load_weights(test::reference_model_dir());
  CHECK(m.fusion_cfg.d_visual == 512);
  CHECK(m.fusion_cfg.d_acoustic == 768);
  CHECK(m.fusion_cfg.conv_channels == 128);
  CHECK(m.fusion_cfg.hidden == 256);
  REQUIRE(m.encoders.has_value());
  CHECK(m.encoders->vis_proj.cols() == 192);
  CHECK(m.encoders->aco_proj.cols() == 400);
}
