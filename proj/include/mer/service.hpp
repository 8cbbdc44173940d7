#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mer/config.hpp"
#include "mer/orchestrator.hpp"

namespace httplib {
class Server;
}

namespace mer {

enum class JobState { Queued, Processing, Done, Failed, Cleared };

std::string job_state_name(JobState s);
std::optional<JobState> parse_job_state(const std::string& s);

nlohmann::json video_result_json(const VideoResult& r);

// Owns jobs on disk under jobs_dir/{id}/:
//   input/           uploaded bundle (or media file + decoded/ bundle)
//   events.ndjson    append-only event log
//   status.json      {"state", "created_at", "error"?}
//   result.json      VideoResult once done
//   utterances/{k}/  faces/{j}.png and audio.wav for the UI
// and runs at most max_parallel_jobs orchestrator runs at a time.
class JobManager {
 public:
  JobManager(ServiceConfig svc, std::string decoder_command,
             std::shared_ptr<const Pipeline> pipeline);
  ~JobManager();

  JobManager(const JobManager&) = delete;
  JobManager& operator=(const JobManager&) = delete;

  struct Submission {
    // Exactly one of these is set.
    std::optional<std::string> bundle_archive;
    std::optional<std::string> media_bytes;
    std::string media_name = "input.bin";
    std::optional<nlohmann::json> overrides;
  };

  // Validates and enqueues. Throws Error: InvalidInput / InvalidConfig (400),
  // MalformedHeader, MissingFile, NonMonotonicTimestamps, DecoderNotFound (422).
  std::string submit(const Submission& submission);

  enum class Lookup { Found, Unknown, Cleared };
  Lookup lookup(const std::string& id) const;

  // {"id", "state", "created_at", "result"?, "error"?}
  std::optional<nlohmann::json> describe(const std::string& id) const;

  // Cancels (waiting for the current utterance to finish), deletes the job
  // directory and marks the job cleared.
  Lookup clear(const std::string& id);

  // Blocks until the event log has grown past `from` or the job reached a
  // terminal state; returns new lines and whether the stream is complete.
  struct EventChunk {
    std::vector<std::string> lines;
    bool complete = false;
  };
  EventChunk wait_events(const std::string& id, std::size_t from,
                         std::chrono::milliseconds timeout) const;

  std::optional<std::filesystem::path> artifact(const std::string& id, std::size_t utterance,
                                                const std::string& file) const;

  // Blocks until the job is terminal; returns its final state.
  std::optional<JobState> wait_terminal(const std::string& id,
                                        std::chrono::milliseconds timeout) const;

  void shutdown();

 private:
  struct Job;
  void recover();
  void worker_loop();
  void process(const std::shared_ptr<Job>& job);
  void append_event(Job& job, const std::string& line);
  void write_status(const Job& job) const;
  std::shared_ptr<Job> find(const std::string& id) const;
  std::string new_id() const;

  ServiceConfig svc_;
  std::string decoder_command_;
  std::shared_ptr<const Pipeline> pipeline_;

  mutable std::mutex mu_;
  std::condition_variable queue_cv_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::set<std::string> cleared_;
  std::deque<std::shared_ptr<Job>> queue_;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

// HTTP front end for JobManager.
class Service {
 public:
  Service(AppConfig cfg, std::shared_ptr<const Pipeline> pipeline);
  ~Service();

  // Binds host:port (port 0 picks a free port); returns the bound port.
  int bind();
  // Serves until stop().
  void run();
  void stop();

  JobManager& jobs() { return *jobs_; }

 private:
  void routes();

  AppConfig cfg_;
  std::unique_ptr<JobManager> jobs_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace mer
