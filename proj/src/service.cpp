#include "mer/service.hpp"

#include <httplib.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>

#include "mer/bundle_archive.hpp"
#include "mer/error.hpp"
#include "mer/image.hpp"
#include "mer/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mer {

struct JobManager::Job {
  std::string id;
  fs::path dir;
  std::string created_at;
  std::optional<json> overrides;
  std::optional<MediaBundle> bundle;  // validated upload, consumed by the worker
  std::optional<fs::path> media;      // undecoded upload

  mutable std::mutex m;
  mutable std::condition_variable cv;
  JobState state = JobState::Queued;
  std::vector<std::string> events;
  bool complete = false;  // no further events will be appended
  bool running = false;
  std::optional<json> result;
  std::string error;
  std::atomic<bool> cancel{false};
};

namespace {

std::string now_iso8601() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string failed_event(const std::string& error) {
  return "{\"type\":\"failed\",\"error\":" + json(error).dump() + "}";
}

json emotion_object(const EmotionVector& v) {
  json o = json::object();
  for (std::size_t e = 0; e < kNumEmotions; ++e) o[std::string(kEmotionNames[e])] = v[e];
  return o;
}

json emotion_names(const std::vector<std::size_t>& ids) {
  json a = json::array();
  for (auto id : ids) a.push_back(std::string(kEmotionNames[id]));
  return a;
}

fs::path locate_bundle_root(const fs::path& input) {
  if (fs::exists(input / "audio.wav")) return input;
  std::vector<fs::path> candidates;
  for (const auto& e : fs::directory_iterator(input)) {
    if (e.is_directory() && fs::exists(e.path() / "audio.wav")) candidates.push_back(e.path());
  }
  return candidates.size() == 1 ? candidates.front() : input;
}

std::string safe_file_name(const std::string& name) {
  std::string out;
  for (char c : fs::path(name).filename().string()) {
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_'
                      ? c
                      : '_');
  }
  if (out.empty() || out == "." || out == "..") out = "input.bin";
  return out;
}

}  // namespace

std::string job_state_name(JobState s) {
  switch (s) {
    case JobState::Queued: return "queued";
    case JobState::Processing: return "processing";
    case JobState::Done: return "done";
    case JobState::Failed: return "failed";
    case JobState::Cleared: return "cleared";
  }
  return "unknown";
}

std::optional<JobState> parse_job_state(const std::string& s) {
  for (auto st : {JobState::Queued, JobState::Processing, JobState::Done, JobState::Failed,
                  JobState::Cleared}) {
    if (job_state_name(st) == s) return st;
  }
  return std::nullopt;
}

json video_result_json(const VideoResult& r) {
  json utts = json::array();
  for (const auto& u : r.utterances) {
    utts.push_back({{"index", u.index},
                    {"start_s", u.span.start_s},
                    {"end_s", u.span.end_s},
                    {"transcript", u.transcript},
                    {"probs", emotion_object(u.probs)},
                    {"active", emotion_names(u.active)},
                    {"input_summary",
                     {{"n_real_frames", u.input_summary.n_real_frames},
                      {"audio_real_s", u.input_summary.audio_real_s},
                      {"n_real_tokens", u.input_summary.n_real_tokens}}},
                    {"diagnostics", u.diagnostics}});
  }
  json failures = json::array();
  for (const auto& f : r.failures) failures.push_back({{"index", f.index}, {"error", f.error}});
  return {{"status", status_name(r.status)},
          {"utterances", utts},
          {"failures", failures},
          {"avg_probs", emotion_object(r.avg_probs)},
          {"avg_active", emotion_names(r.avg_active)}};
}

// --- JobManager ---------------------------------------------------------------

JobManager::JobManager(ServiceConfig svc, std::string decoder_command,
                       std::shared_ptr<const Pipeline> pipeline)
    : svc_(std::move(svc)),
      decoder_command_(std::move(decoder_command)),
      pipeline_(std::move(pipeline)) {
  fs::create_directories(svc_.jobs_dir);
  recover();
  for (std::size_t i = 0; i < svc_.max_parallel_jobs; ++i) {
    workers_.emplace_back([this] { worker_loop(); });
  }
}

JobManager::~JobManager() { shutdown(); }

void JobManager::shutdown() {
  {
    std::lock_guard lock(mu_);
    if (stopping_) return;
    stopping_ = true;
    for (auto& [id, job] : jobs_) job->cancel = true;
  }
  queue_cv_.notify_all();
  for (auto& w : workers_) {
    if (w.joinable()) w.join();
  }
}

std::string JobManager::new_id() const {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";
  std::random_device rd;
  std::string id;
  for (int i = 0; i < 22; ++i) id.push_back(kAlphabet[rd() % 64]);
  return id;
}

void JobManager::write_status(const Job& job) const {
  json s = {{"state", job_state_name(job.state)}, {"created_at", job.created_at}};
  if (!job.error.empty()) s["error"] = job.error;
  const fs::path tmp = job.dir / "status.json.tmp";
  std::ofstream(tmp) << s.dump() << '\n';
  fs::rename(tmp, job.dir / "status.json");
}

void JobManager::recover() {
  if (std::ifstream in{svc_.jobs_dir / "cleared.txt"}) {
    std::string id;
    while (std::getline(in, id)) {
      if (!id.empty()) cleared_.insert(id);
    }
  }
  for (const auto& entry : fs::directory_iterator(svc_.jobs_dir)) {
    if (!entry.is_directory()) continue;
    const fs::path dir = entry.path();
    std::ifstream status_in(dir / "status.json");
    if (!status_in) continue;
    json status;
    try {
      status = json::parse(status_in);
    } catch (const json::exception&) {
      continue;
    }
    auto job = std::make_shared<Job>();
    job->id = dir.filename().string();
    job->dir = dir;
    job->created_at = status.value("created_at", std::string{});
    job->error = status.value("error", std::string{});
    job->state = parse_job_state(status.value("state", std::string{})).value_or(JobState::Failed);
    if (job->state == JobState::Cleared) continue;

    if (std::ifstream ev{dir / "events.ndjson"}) {
      std::string line;
      while (std::getline(ev, line)) {
        if (!line.empty()) job->events.push_back(line);
      }
    }
    if (job->state == JobState::Queued || job->state == JobState::Processing) {
      job->state = JobState::Failed;
      job->error = "service restarted while the job was in flight";
      const std::string line = failed_event(job->error);
      job->events.push_back(line);
      std::ofstream(dir / "events.ndjson", std::ios::app) << line << '\n';
      write_status(*job);
    }
    if (job->state == JobState::Done) {
      if (std::ifstream res{dir / "result.json"}) {
        try {
          job->result = json::parse(res);
        } catch (const json::exception&) {
        }
      }
    }
    job->complete = true;
    jobs_[job->id] = job;
  }
}

std::string JobManager::submit(const Submission& s) {
  if (s.bundle_archive.has_value() == s.media_bytes.has_value()) {
    throw Error(ErrorKind::InvalidInput, "upload exactly one of 'bundle' or 'media'");
  }
  if ((s.bundle_archive && s.bundle_archive->empty()) || (s.media_bytes && s.media_bytes->empty())) {
    throw Error(ErrorKind::InvalidInput, "uploaded file is empty");
  }
  if (s.overrides) {
    PipelineConfig probe = pipeline_->config();
    apply_job_overrides(probe, *s.overrides);
  }
  if (s.media_bytes && decoder_command_.empty()) {
    throw Error(ErrorKind::DecoderNotFound, "no decoder command configured for media uploads");
  }

  auto job = std::make_shared<Job>();
  job->id = new_id();
  job->dir = svc_.jobs_dir / job->id;
  job->created_at = now_iso8601();
  job->overrides = s.overrides;
  const fs::path input = job->dir / "input";
  fs::create_directories(input);
  try {
    if (s.bundle_archive) {
      unpack_archive(*s.bundle_archive, input);
      job->bundle = load_bundle(locate_bundle_root(input), pipeline_->config().sample_rate_hz);
    } else {
      job->media = input / safe_file_name(s.media_name);
      std::ofstream out(*job->media, std::ios::binary);
      out.write(s.media_bytes->data(), static_cast<std::streamsize>(s.media_bytes->size()));
    }
  } catch (...) {
    fs::remove_all(job->dir);
    throw;
  }
  std::ofstream(job->dir / "events.ndjson", std::ios::trunc);
  write_status(*job);

  {
    std::lock_guard lock(mu_);
    if (stopping_) {
      fs::remove_all(job->dir);
      throw Error(ErrorKind::InvalidInput, "service is shutting down");
    }
    jobs_[job->id] = job;
    queue_.push_back(job);
  }
  queue_cv_.notify_one();
  return job->id;
}

std::shared_ptr<JobManager::Job> JobManager::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = jobs_.find(id);
  return it == jobs_.end() ? nullptr : it->second;
}

JobManager::Lookup JobManager::lookup(const std::string& id) const {
  std::lock_guard lock(mu_);
  if (cleared_.contains(id)) return Lookup::Cleared;
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) return Lookup::Unknown;
  std::lock_guard job_lock(it->second->m);
  return it->second->state == JobState::Cleared ? Lookup::Cleared : Lookup::Found;
}

std::optional<json> JobManager::describe(const std::string& id) const {
  const auto job = find(id);
  if (!job) return std::nullopt;
  std::lock_guard lock(job->m);
  json out = {{"id", job->id}, {"state", job_state_name(job->state)}, {"created_at", job->created_at}};
  if (job->state == JobState::Done && job->result) out["result"] = *job->result;
  if (!job->error.empty()) out["error"] = job->error;
  return out;
}

void JobManager::append_event(Job& job, const std::string& line) {
  std::lock_guard lock(job.m);
  job.events.push_back(line);
  std::ofstream(job.dir / "events.ndjson", std::ios::app) << line << '\n';
  job.cv.notify_all();
}

void JobManager::worker_loop() {
  for (;;) {
    std::shared_ptr<Job> job;
    {
      std::unique_lock lock(mu_);
      queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      job = queue_.front();
      queue_.pop_front();
    }
    {
      std::lock_guard lock(job->m);
      if (job->cancel || job->state != JobState::Queued) continue;
      job->state = JobState::Processing;
      job->running = true;
      write_status(*job);
    }
    process(job);
    {
      std::lock_guard lock(job->m);
      job->running = false;
      job->bundle.reset();
    }
    job->cv.notify_all();
  }
}

void JobManager::process(const std::shared_ptr<Job>& job) {
  try {
    MediaBundle bundle;
    if (job->bundle) {
      bundle = std::move(*job->bundle);
    } else {
      bundle = decode_video(*job->media, decoder_command_, job->dir / "decoded",
                            pipeline_->config().sample_rate_hz);
    }
    PipelineConfig cfg = pipeline_->config();
    if (job->overrides) apply_job_overrides(cfg, *job->overrides);

    RunControl control;
    control.cancel = &job->cancel;
    control.on_clip = [&](std::size_t index, const UtteranceClip& clip) {
      const fs::path udir = job->dir / "utterances" / std::to_string(index);
      fs::create_directories(udir / "faces");
      for (std::size_t j = 0; j < clip.visual.images.size(); ++j) {
        write_png(udir / "faces" / (std::to_string(j) + ".png"),
                  face_to_image(clip.visual.images[j]));
      }
      const std::vector<float> real(clip.audio.samples.begin(),
                                    clip.audio.samples.begin() +
                                        static_cast<std::ptrdiff_t>(clip.audio.n_real));
      write_wav(udir / "audio.wav", real, bundle.audio.sample_rate_hz);
    };
    if (svc_.utterance_delay_ms > 0) {
      control.after_utterance = [this](std::size_t) {
        std::this_thread::sleep_for(std::chrono::milliseconds(svc_.utterance_delay_ms));
      };
    }

    const VideoResult r =
        pipeline_->run_with(cfg, bundle, [&](const std::string& line) { append_event(*job, line); },
                            control);
    const json result = video_result_json(r);
    std::ofstream(job->dir / "result.json") << result.dump() << '\n';
    std::lock_guard lock(job->m);
    job->result = result;
    job->state = JobState::Done;
    job->complete = true;
    write_status(*job);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Canceled) return;  // clear() or shutdown owns the cleanup
    std::lock_guard lock(job->m);
    if (job->cancel) return;
    const std::string line = failed_event(e.what());
    job->events.push_back(line);
    std::ofstream(job->dir / "events.ndjson", std::ios::app) << line << '\n';
    job->state = JobState::Failed;
    job->error = e.what();
    job->complete = true;
    write_status(*job);
  } catch (const std::exception& e) {
    std::lock_guard lock(job->m);
    const std::string line = failed_event(e.what());
    job->events.push_back(line);
    std::ofstream(job->dir / "events.ndjson", std::ios::app) << line << '\n';
    job->state = JobState::Failed;
    job->error = e.what();
    job->complete = true;
    write_status(*job);
  }
}

JobManager::Lookup JobManager::clear(const std::string& id) {
  std::shared_ptr<Job> job;
  {
    std::lock_guard lock(mu_);
    if (cleared_.contains(id)) return Lookup::Cleared;
    const auto it = jobs_.find(id);
    if (it == jobs_.end()) return Lookup::Unknown;
    job = it->second;
  }
  {
    std::unique_lock lock(job->m);
    if (job->state == JobState::Cleared) return Lookup::Cleared;
    job->cancel = true;
    job->cv.wait(lock, [&] { return !job->running; });
    job->state = JobState::Cleared;
    job->complete = true;
    job->result.reset();
  }
  job->cv.notify_all();
  std::error_code ec;
  fs::remove_all(job->dir, ec);
  {
    std::lock_guard lock(mu_);
    cleared_.insert(id);
    std::erase_if(queue_, [&](const auto& q) { return q == job; });
    std::ofstream(svc_.jobs_dir / "cleared.txt", std::ios::app) << id << '\n';
  }
  return Lookup::Found;
}

JobManager::EventChunk JobManager::wait_events(const std::string& id, std::size_t from,
                                               std::chrono::milliseconds timeout) const {
  const auto job = find(id);
  if (!job) return {{}, true};
  std::unique_lock lock(job->m);
  job->cv.wait_for(lock, timeout, [&] { return job->events.size() > from || job->complete; });
  EventChunk chunk;
  if (job->state == JobState::Cleared) {
    chunk.complete = true;
    return chunk;
  }
  for (std::size_t i = from; i < job->events.size(); ++i) chunk.lines.push_back(job->events[i]);
  chunk.complete = job->complete;
  return chunk;
}

std::optional<JobState> JobManager::wait_terminal(const std::string& id,
                                                  std::chrono::milliseconds timeout) const {
  const auto job = find(id);
  if (!job) return std::nullopt;
  std::unique_lock lock(job->m);
  job->cv.wait_for(lock, timeout, [&] { return job->complete && !job->running; });
  return job->state;
}

std::optional<fs::path> JobManager::artifact(const std::string& id, std::size_t utterance,
                                             const std::string& file) const {
  const auto job = find(id);
  if (!job) return std::nullopt;
  const fs::path p = job->dir / "utterances" / std::to_string(utterance) / file;
  if (!fs::is_regular_file(p)) return std::nullopt;
  return p;
}

// --- HTTP ---------------------------------------------------------------------

namespace {

void send_error(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", message}}.dump(), "application/json");
}

int status_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::InvalidInput:
    case ErrorKind::InvalidConfig:
      return 400;
    case ErrorKind::MissingFile:
    case ErrorKind::MalformedHeader:
    case ErrorKind::NonMonotonicTimestamps:
    case ErrorKind::DecoderNotFound:
    case ErrorKind::DecoderFailed:
    case ErrorKind::EmptyAudio:
      return 422;
    default:
      return 500;
  }
}

bool reply_missing(JobManager& jobs, const std::string& id, httplib::Response& res) {
  switch (jobs.lookup(id)) {
    case JobManager::Lookup::Unknown:
      send_error(res, 404, "unknown job " + id);
      return true;
    case JobManager::Lookup::Cleared:
      send_error(res, 410, "job " + id + " was cleared");
      return true;
    case JobManager::Lookup::Found:
      return false;
  }
  return false;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Service::Service(AppConfig cfg, std::shared_ptr<const Pipeline> pipeline)
    : cfg_(std::move(cfg)),
      jobs_(std::make_unique<JobManager>(cfg_.service, cfg_.decoder_command, std::move(pipeline))),
      server_(std::make_unique<httplib::Server>()) {
  // Streaming subscribers hold a worker each; size the pool accordingly.
  server_->new_task_queue = [] { return new httplib::ThreadPool(64); };
  server_->set_payload_max_length(static_cast<std::size_t>(cfg_.service.max_upload_bytes));
  routes();
}

Service::~Service() {
  stop();
  jobs_->shutdown();
}

int Service::bind() {
  if (cfg_.service.port == 0) return server_->bind_to_any_port(cfg_.service.host);
  return server_->bind_to_port(cfg_.service.host, cfg_.service.port) ? cfg_.service.port : -1;
}

void Service::run() { server_->listen_after_bind(); }

void Service::stop() {
  if (server_->is_running()) server_->stop();
}

void Service::routes() {
  auto& srv = *server_;
  JobManager& jobs = *jobs_;

  srv.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"status":"ok"})", "application/json");
  });

  srv.Post("/api/jobs", [&jobs](const httplib::Request& req, httplib::Response& res) {
    if (!req.is_multipart_form_data()) {
      send_error(res, 400, req.body.empty() ? "empty request body"
                                            : "expected multipart/form-data upload");
      return;
    }
    JobManager::Submission sub;
    if (req.has_file("bundle")) sub.bundle_archive = req.get_file_value("bundle").content;
    if (req.has_file("media")) {
      const auto f = req.get_file_value("media");
      sub.media_bytes = f.content;
      if (!f.filename.empty()) sub.media_name = f.filename;
    }
    if (!sub.bundle_archive && !sub.media_bytes) {
      send_error(res, 400, "multipart field 'bundle' or 'media' is required");
      return;
    }
    if (req.has_file("config")) {
      try {
        sub.overrides = json::parse(req.get_file_value("config").content);
      } catch (const json::exception& e) {
        send_error(res, 400, std::string("config: ") + e.what());
        return;
      }
    }
    try {
      const std::string id = jobs.submit(sub);
      res.status = 202;
      res.set_content(json{{"job_id", id}}.dump(), "application/json");
    } catch (const Error& e) {
      send_error(res, status_for(e), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  });

  srv.Get(R"(/api/jobs/([A-Za-z0-9_-]+))",
          [&jobs](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            if (reply_missing(jobs, id, res)) return;
            const auto desc = jobs.describe(id);
            if (!desc) {
              send_error(res, 404, "unknown job " + id);
              return;
            }
            res.set_content(desc->dump(), "application/json");
          });

  srv.Delete(R"(/api/jobs/([A-Za-z0-9_-]+))",
             [&jobs](const httplib::Request& req, httplib::Response& res) {
               const std::string id = req.matches[1];
               switch (jobs.clear(id)) {
                 case JobManager::Lookup::Found:
                   res.status = 204;
                   break;
                 case JobManager::Lookup::Unknown:
                   send_error(res, 404, "unknown job " + id);
                   break;
                 case JobManager::Lookup::Cleared:
                   send_error(res, 410, "job " + id + " was cleared");
                   break;
               }
             });

  srv.Get(R"(/api/jobs/([A-Za-z0-9_-]+)/events)",
          [&jobs](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            if (reply_missing(jobs, id, res)) return;
            auto next = std::make_shared<std::size_t>(0);
            res.set_chunked_content_provider(
                "application/x-ndjson",
                [&jobs, id, next](std::size_t, httplib::DataSink& sink) {
                  const auto chunk = jobs.wait_events(id, *next, std::chrono::milliseconds(250));
                  for (const auto& line : chunk.lines) {
                    const std::string out = line + "\n";
                    if (!sink.write(out.data(), out.size())) return false;
                    ++*next;
                  }
                  if (chunk.complete) sink.done();
                  return true;
                });
          });

  srv.Get(R"(/api/jobs/([A-Za-z0-9_-]+)/utterances/(\d+)/(faces/\d+\.png|audio\.wav))",
          [&jobs](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            if (reply_missing(jobs, id, res)) return;
            const auto path = jobs.artifact(id, std::stoul(req.matches[2]), req.matches[3]);
            if (!path) {
              send_error(res, 404, "no such artifact");
              return;
            }
            const bool png = path->extension() == ".png";
            res.set_content(read_file(*path), png ? "image/png" : "audio/wav");
          });

  if (!cfg_.service.static_dir.empty() && fs::is_directory(cfg_.service.static_dir)) {
    srv.set_mount_point("/", cfg_.service.static_dir.string());
  }
}

}  // namespace mer
