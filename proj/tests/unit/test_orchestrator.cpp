#include <doctest.h>

#include <atomic>
#include <json.hpp>

#include "mer/error.hpp"
#include "mer/fixtures.hpp"
#include "mer/orchestrator.hpp"
#include "test_util.hpp"

using namespace mer;
using nlohmann::json;

namespace {

PipelineConfig reference_cfg() {
  PipelineConfig cfg;
  cfg.model = test::reference_model_dir();
  cfg.vocab = test::reference_model_dir() / "vocab.json";
  cfg.thresholds = test::reference_model_dir() / "thresholds.json";
  return cfg;
}

const Pipeline& shared_pipeline() {
  static const std::shared_ptr<const Pipeline> p = Pipeline::load(reference_cfg());
  return *p;
}

MediaBundle fixture(const std::string& kind) {
  return render_scene(fixture_scene(kind), 0, kind);
}

struct Run {
  VideoResult result;
  std::vector<std::string> lines;
};

Run run(const Pipeline& p, const PipelineConfig& cfg, const MediaBundle& b,
        const RunControl& control = {}) {
  Run r;
  r.result = p.run_with(cfg, b, [&](const std::string& l) { r.lines.push_back(l); }, control);
  return r;
}

}  // namespace

TEST_CASE("two utterances stream in order then final") {
  const Run r = run(shared_pipeline(), reference_cfg(), fixture("two-utt"));
  REQUIRE(r.lines.size() == 3);
  for (std::size_t i = 0; i < 2; ++i) {
    const json ev = json::parse(r.lines[i]);
    CHECK(ev["type"] == "utterance");
    CHECK(ev["index"] == i);
    CHECK(ev["probs"].size() == 6);
    CHECK(ev["input_summary"]["n_real_frames"].get<int>() > 0);
  }
  CHECK(json::parse(r.lines[0])["transcript"] == "i am happy");
  const json fin = json::parse(r.lines[2]);
  CHECK(fin["type"] == "final");
  CHECK(fin["status"] == "ok");
  for (std::size_t e = 0; e < 6; ++e) {
    const double mean = (r.result.utterances[0].probs[e] + r.result.utterances[1].probs[e]) / 2.0;
    CHECK(std::abs(r.result.avg_probs[e] - mean) <= 1e-9);
  }
}

TEST_CASE("single utterance final equals the utterance") {
  const Run r = run(shared_pipeline(), reference_cfg(), fixture("one-utt"));
  REQUIRE(r.result.utterances.size() == 1);
  CHECK(r.result.avg_probs == r.result.utterances[0].probs);
  const json u = json::parse(r.lines[0]);
  const json f = json::parse(r.lines[1]);
  CHECK(u["probs"] == f["avg_probs"]);
  CHECK(u["active"] == f["active"]);
}

TEST_CASE("silence reports no speech") {
  const Run r = run(shared_pipeline(), reference_cfg(), fixture("silence"));
  REQUIRE(r.lines.size() == 1);
  CHECK(r.result.status == VideoStatus::NoSpeech);
  const json f = json::parse(r.lines[0]);
  CHECK(f["status"] == "no_speech");
  CHECK(f["active"].empty());
  for (const auto& [k, v] : f["avg_probs"].items()) CHECK(v.get<double>() == 0.0);
}

TEST_CASE("runs are deterministic") {
  const MediaBundle b = fixture("many-utt");
  const Run a = run(shared_pipeline(), reference_cfg(), b);
  const Run c = run(shared_pipeline(), reference_cfg(), b);
  CHECK(a.lines == c.lines);
  CHECK(a.result.utterances.size() == 6);
}

TEST_CASE("external vad spans are normalized") {
  PipelineConfig cfg = reference_cfg();
  cfg.backends.vad = "external";
  cfg.backends.vad_command = test::fake_command("vad {audio}");
  const Run r = run(shared_pipeline(), cfg, fixture("one-utt"));
  REQUIRE(r.result.utterances.size() == 1);
  CHECK(r.result.utterances[0].span.start_s == 0.5);
  CHECK(r.result.utterances[0].span.end_s == 1.5);
}

TEST_CASE("failing utterance is reported and the run continues") {
  PipelineConfig cfg = reference_cfg();
  cfg.backends.encoder = "external";
  cfg.backends.encoder_command = test::fake_command("fail {modality}");
  const Run r = run(shared_pipeline(), cfg, fixture("two-utt"));
  REQUIRE(r.lines.size() == 3);
  CHECK(json::parse(r.lines[0])["type"] == "utterance_error");
  CHECK(json::parse(r.lines[1])["type"] == "utterance_error");
  CHECK(r.result.failures.size() == 2);
  CHECK(json::parse(r.lines[2])["type"] == "final");
}

TEST_CASE("stt none gives empty transcript") {
  PipelineConfig cfg = reference_cfg();
  cfg.backends.stt = "none";
  const Run r = run(shared_pipeline(), cfg, fixture("one-utt"));
  CHECK(r.result.utterances[0].transcript.empty());
  CHECK(r.result.utterances[0].input_summary.n_real_tokens == 0);
}

TEST_CASE("run control hooks") {
  std::atomic<bool> cancel{false};
  std::vector<std::size_t> clips;
  RunControl control;
  control.cancel = &cancel;
  control.on_clip = [&](std::size_t i, const UtteranceClip& clip) {
    clips.push_back(i);
    CHECK(clip.audio.samples.size() == kAudioSamples);
  };
  control.after_utterance = [&](std::size_t) { cancel = true; };
  CHECK_THROWS_AS(run(shared_pipeline(), reference_cfg(), fixture("two-utt"), control), Error);
  CHECK(clips == std::vector<std::size_t>{0});
}

TEST_CASE("event helpers") {
  CHECK(format_number(0.5) == "0.500000");
  CHECK(format_number(-1e-9) == "0.000000");
  CHECK(average_probs({}) == EmotionVector{});
  CHECK(utterance_error_event(3, "x") == R"({"type":"utterance_error","index":3,"error":"x"})");
}

TEST_CASE("pipeline construction checks") {
  PipelineConfig cfg = reference_cfg();
  cfg.backends.encoder = "quantum";
  CHECK_THROWS_AS(Pipeline::load(cfg), Error);
  cfg = reference_cfg();
  cfg.model = "/nonexistent/model";
  CHECK_THROWS_AS(Pipeline::load(cfg), Error);
}
