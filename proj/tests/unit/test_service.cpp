#include <doctest.h>

#include <httplib.h>

#include <json.hpp>
#include <thread>

#include "mer/bundle_archive.hpp"
#include "mer/error.hpp"
#include "mer/fixtures.hpp"
#include "mer/service.hpp"
#include "test_util.hpp"

using namespace mer;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {

PipelineConfig reference_cfg() {
  PipelineConfig cfg;
  cfg.model = test::reference_model_dir();
  cfg.vocab = test::reference_model_dir() / "vocab.json";
  cfg.thresholds = test::reference_model_dir() / "thresholds.json";
  return cfg;
}

std::shared_ptr<const Pipeline> pipeline() {
  static const std::shared_ptr<const Pipeline> p = Pipeline::load(reference_cfg());
  return p;
}

std::string fixture_archive(const std::string& kind) {
  test::TempDir dir;
  generate_fixture(kind, 0, dir / "b");
  return pack_directory(dir / "b");
}

JobManager::Submission bundle_submission(const std::string& kind) {
  JobManager::Submission s;
  s.bundle_archive = fixture_archive(kind);
  return s;
}

std::vector<std::string> all_events(JobManager& jobs, const std::string& id) {
  std::vector<std::string> lines;
  for (;;) {
    auto chunk = jobs.wait_events(id, lines.size(), 1000ms);
    lines.insert(lines.end(), chunk.lines.begin(), chunk.lines.end());
    if (chunk.complete) return lines;
  }
}

ErrorKind submit_error(JobManager& jobs, const JobManager::Submission& s) {
  try {
    jobs.submit(s);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("submission accepted");
  return ErrorKind::Canceled;
}

}  // namespace

TEST_CASE("job lifecycle through JobManager") {
  test::TempDir dir;
  ServiceConfig svc;
  svc.jobs_dir = dir / "jobs";
  JobManager jobs(svc, "", pipeline());

  const std::string id = jobs.submit(bundle_submission("two-utt"));
  CHECK(id.size() == 22);
  CHECK(jobs.wait_terminal(id, 30s) == JobState::Done);

  const auto lines = all_events(jobs, id);
  REQUIRE(lines.size() == 3);
  CHECK(json::parse(lines[2])["type"] == "final");
  CHECK(test::read_file(svc.jobs_dir / id / "events.ndjson") ==
        lines[0] + "\n" + lines[1] + "\n" + lines[2] + "\n");

  const json desc = *jobs.describe(id);
  CHECK(desc["state"] == "done");
  CHECK(desc["result"]["utterances"].size() == 2);

  const auto png = jobs.artifact(id, 1, "faces/4.png");
  REQUIRE(png.has_value());
  CHECK(std::filesystem::file_size(*png) > 0);
  CHECK(jobs.artifact(id, 0, "audio.wav").has_value());
  CHECK_FALSE(jobs.artifact(id, 7, "audio.wav").has_value());

  CHECK(jobs.clear(id) == JobManager::Lookup::Found);
  CHECK(jobs.lookup(id) == JobManager::Lookup::Cleared);
  CHECK_FALSE(std::filesystem::exists(svc.jobs_dir / id));
  CHECK(jobs.lookup("AAAAAAAAAAAAAAAAAAAAAA") == JobManager::Lookup::Unknown);
}

TEST_CASE("submission validation") {
  test::TempDir dir;
  ServiceConfig svc;
  svc.jobs_dir = dir / "jobs";
  JobManager jobs(svc, "", pipeline());

  CHECK(submit_error(jobs, {}) == ErrorKind::InvalidInput);
  JobManager::Submission both = bundle_submission("one-utt");
  both.media_bytes = "x";
  CHECK(submit_error(jobs, both) == ErrorKind::InvalidInput);
  JobManager::Submission media;
  media.media_bytes = "not a video";
  CHECK(submit_error(jobs, media) == ErrorKind::DecoderNotFound);
  JobManager::Submission bad_cfg = bundle_submission("one-utt");
  bad_cfg.overrides = json{{"model", "x"}};
  CHECK(submit_error(jobs, bad_cfg) == ErrorKind::InvalidConfig);
  JobManager::Submission garbage;
  garbage.bundle_archive = "garbage";
  CHECK(submit_error(jobs, garbage) != ErrorKind::Canceled);
}

TEST_CASE("overrides apply per job") {
  test::TempDir dir;
  ServiceConfig svc;
  svc.jobs_dir = dir / "jobs";
  JobManager jobs(svc, "", pipeline());
  JobManager::Submission s = bundle_submission("one-utt");
  s.overrides = json{{"stt", "none"}};
  const std::string id = jobs.submit(s);
  REQUIRE(jobs.wait_terminal(id, 30s) == JobState::Done);
  CHECK(json::parse(all_events(jobs, id)[0])["transcript"] == "");
}

TEST_CASE("media upload goes through the decoder") {
  test::TempDir dir;
  generate_fixture("one-utt", 0, dir / "b");
  ServiceConfig svc;
  svc.jobs_dir = dir / "jobs";
  JobManager jobs(svc, test::fake_command("decoder {input} {outdir}"), pipeline());
  JobManager::Submission s;
  s.media_bytes = (dir / "b").string() + "\n";
  s.media_name = "clip.mp4";
  const std::string id = jobs.submit(s);
  CHECK(jobs.wait_terminal(id, 30s) == JobState::Done);

  JobManager::Submission bad;
  bad.media_bytes = "/no/such/dir\n";
  const std::string bad_id = jobs.submit(bad);
  CHECK(jobs.wait_terminal(bad_id, 30s) == JobState::Failed);
  const auto lines = all_events(jobs, bad_id);
  REQUIRE(lines.size() == 1);
  CHECK(json::parse(lines[0])["type"] == "failed");
}

TEST_CASE("restart marks in-flight jobs failed") {
  test::TempDir dir;
  ServiceConfig svc;
  svc.jobs_dir = dir / "jobs";
  svc.utterance_delay_ms = 2000;
  svc.max_parallel_jobs = 1;
  std::string running, queued, done;
  {
    ServiceConfig fast = svc;
    fast.utterance_delay_ms = 0;
    JobManager jobs(fast, "", pipeline());
    done = jobs.submit(bundle_submission("one-utt"));
    REQUIRE(jobs.wait_terminal(done, 30s) == JobState::Done);
  }
  {
    JobManager jobs(svc, "", pipeline());
    running = jobs.submit(bundle_submission("two-utt"));
    queued = jobs.submit(bundle_submission("one-utt"));
    jobs.wait_events(running, 0, 30s);
    jobs.shutdown();
  }
  JobManager jobs(svc, "", pipeline());
  CHECK((*jobs.describe(running))["state"] == "failed");
  CHECK((*jobs.describe(queued))["state"] == "failed");
  CHECK((*jobs.describe(done))["state"] == "done");
  const auto lines = all_events(jobs, running);
  CHECK(json::parse(lines.back())["type"] == "failed");
}

TEST_CASE("HTTP endpoints") {
  test::TempDir dir;
  AppConfig cfg;
  cfg.pipeline = reference_cfg();
  cfg.service.port = 0;
  cfg.service.jobs_dir = dir / "jobs";
  Service service(cfg, pipeline());
  const int port = service.bind();
  std::thread server([&] { service.run(); });

  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(30, 0);

  const auto health = client.Get("/api/health");
  REQUIRE(health);
  CHECK(health->status == 200);

  const httplib::MultipartFormDataItems items = {
      {"bundle", fixture_archive("one-utt"), "bundle.merb", "application/octet-stream"},
      {"config", R"({"vad":{"pad_ms":50}})", "", "application/json"}};
  const auto post = client.Post("/api/jobs", items);
  REQUIRE(post);
  CHECK(post->status == 202);
  const std::string id = json::parse(post->body)["job_id"];

  const auto events = client.Get("/api/jobs/" + id + "/events");
  REQUIRE(events);
  CHECK(events->status == 200);
  const auto lines = test::split_lines(events->body);
  REQUIRE(lines.size() == 2);
  CHECK(json::parse(lines[1])["type"] == "final");

  const auto replay = client.Get("/api/jobs/" + id + "/events");
  REQUIRE(replay);
  CHECK(replay->body == events->body);

  const auto job = client.Get("/api/jobs/" + id);
  REQUIRE(job);
  CHECK(json::parse(job->body)["state"] == "done");

  const auto face = client.Get("/api/jobs/" + id + "/utterances/0/faces/0.png");
  REQUIRE(face);
  CHECK(face->status == 200);
  CHECK(face->get_header_value("Content-Type") == "image/png");
  const auto wav = client.Get("/api/jobs/" + id + "/utterances/0/audio.wav");
  REQUIRE(wav);
  CHECK(wav->body.substr(0, 4) == "RIFF");

  const auto bad = client.Post("/api/jobs", httplib::MultipartFormDataItems{
                                                {"other", "x", "", "text/plain"}});
  REQUIRE(bad);
  CHECK(bad->status == 400);

  const auto del = client.Delete("/api/jobs/" + id);
  REQUIRE(del);
  CHECK(del->status == 204);
  CHECK(client.Get("/api/jobs/" + id)->status == 410);
  CHECK(client.Get("/api/jobs/AAAAAAAAAAAAAAAAAAAAAA")->status == 404);

  service.stop();
  server.join();
}
