// mer: command-line entry points for every pipeline stage.
//
// Exit codes: 0 success, 1 input error, 2 config error, 3 runtime failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <unistd.h>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mer/calibration.hpp"
#include "mer/config.hpp"
#include "mer/error.hpp"
#include "mer/fixtures.hpp"
#include "mer/orchestrator.hpp"
#include "mer/service.hpp"
#include "mer/trainer.hpp"
#include "mer/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

// Error raised while loading configuration or model artifacts: always exit 2
// whatever the underlying kind.
struct ConfigStageError {
  mer::ErrorKind kind;
  std::string message;
};

int exit_code_for(mer::ErrorKind kind) {
  using K = mer::ErrorKind;
  switch (kind) {
    case K::MissingFile:
    case K::MalformedHeader:
    case K::NonMonotonicTimestamps:
    case K::EmptyAudio:
    case K::SpanOutOfRange:
    case K::LengthMismatch:
    case K::InvalidInput:
    case K::EmptySequence:
      return kExitInput;
    case K::InvalidConfig:
    case K::BadMagic:
    case K::ManifestMismatch:
    case K::TruncatedBlob:
      return kExitConfig;
    default:
      return kExitRuntime;
  }
}

template <class F>
auto config_stage(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const mer::Error& e) {
    throw ConfigStageError{e.kind(), e.what()};
  }
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw mer::Error(mer::ErrorKind::MissingFile, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw mer::Error(mer::ErrorKind::InvalidInput, "cannot write " + p.string());
  out << text;
}

// --- CSV (header = emotion names in fixed order) ---------------------------

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::vector<mer::EmotionVector> read_emotion_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) {
    throw mer::Error(mer::ErrorKind::InvalidInput, path.string() + ": empty file");
  }
  const auto header = split_csv_line(line);
  if (header.size() != mer::kNumEmotions) {
    throw mer::Error(mer::ErrorKind::InvalidInput,
                     path.string() + ": expected 6 columns, header has " +
                         std::to_string(header.size()));
  }
  for (std::size_t e = 0; e < mer::kNumEmotions; ++e) {
    if (header[e] != mer::kEmotionNames[e]) {
      throw mer::Error(mer::ErrorKind::InvalidInput,
                       path.string() + ": column " + std::to_string(e) + " is '" + header[e] +
                           "', expected '" + std::string(mer::kEmotionNames[e]) + "'");
    }
  }
  std::vector<mer::EmotionVector> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != mer::kNumEmotions) {
      throw mer::Error(mer::ErrorKind::InvalidInput,
                       path.string() + ":" + std::to_string(line_no) + ": expected 6 columns, got " +
                           std::to_string(cells.size()));
    }
    mer::EmotionVector row{};
    for (std::size_t e = 0; e < mer::kNumEmotions; ++e) {
      std::size_t used = 0;
      try {
        row[e] = std::stod(cells[e], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cells[e].size()) {
        throw mer::Error(mer::ErrorKind::InvalidInput,
                         path.string() + ":" + std::to_string(line_no) + ": bad number '" +
                             cells[e] + "'");
      }
    }
    rows.push_back(row);
  }
  return rows;
}

std::string emotion_csv(const std::vector<mer::EmotionVector>& rows) {
  std::string out;
  for (std::size_t e = 0; e < mer::kNumEmotions; ++e) {
    if (e) out += ',';
    out += mer::kEmotionNames[e];
  }
  out += '\n';
  for (const auto& r : rows) {
    for (std::size_t e = 0; e < mer::kNumEmotions; ++e) {
      if (e) out += ',';
      out += mer::format_number(r[e]);
    }
    out += '\n';
  }
  return out;
}

json metrics_json(const mer::EmotionMetrics& m) {
  return {{"accuracy", m.accuracy}, {"f1_positive", m.f1_positive}, {"f1_weighted", m.f1_weighted}};
}

json report_json(const mer::EvalReport& r) {
  json per = json::object();
  for (std::size_t e = 0; e < mer::kNumEmotions; ++e) {
    per[std::string(mer::kEmotionNames[e])] = metrics_json(r.per_emotion[e]);
  }
  return {{"per_emotion", per}, {"mean", metrics_json(r.mean)}};
}

// --- commands ----------------------------------------------------------------

struct PathOverrides {
  std::string model;
  std::string vocab;
  std::string thresholds;
};

mer::AppConfig load_app_config(const std::string& config_file, const PathOverrides& o) {
  return config_stage([&] {
    mer::AppConfig cfg = mer::load_config(config_file);
    if (!o.model.empty()) cfg.pipeline.model = o.model;
    if (!o.vocab.empty()) cfg.pipeline.vocab = o.vocab;
    if (!o.thresholds.empty()) cfg.pipeline.thresholds = o.thresholds;
    cfg.pipeline.vad.validate();
    return cfg;
  });
}

int cmd_segment(const std::string& input, const std::string& config_file, const std::string& out) {
  const mer::AppConfig cfg = load_app_config(config_file, {});
  auto vad = config_stage([&] { return mer::make_vad_backend(cfg.pipeline); });

  mer::AudioTrack track;
  if (fs::is_directory(input)) {
    track = mer::load_bundle(input, cfg.pipeline.sample_rate_hz).audio;
  } else {
    const mer::WavData wav = mer::read_wav(input);
    track = mer::resample({wav.samples, wav.sample_rate_hz}, cfg.pipeline.sample_rate_hz);
  }
  const auto spans = track.samples.empty() ? std::vector<mer::UtteranceSpan>{}
                                           : mer::segment(track, *vad);
  write_text(out, mer::spans_to_json(spans) + "\n");
  std::cout << spans.size() << " span" << (spans.size() == 1 ? "" : "s") << '\n';
  return kExitOk;
}

int cmd_infer(const std::string& input, const std::string& config_file, const PathOverrides& paths,
              const std::string& out, bool to_stdout) {
  const mer::AppConfig cfg = load_app_config(config_file, paths);
  const auto pipeline = config_stage([&] { return mer::Pipeline::load(cfg.pipeline); });

  mer::MediaBundle bundle;
  if (fs::is_directory(input)) {
    bundle = mer::load_bundle(input, cfg.pipeline.sample_rate_hz);
  } else {
    if (!fs::exists(input)) throw mer::Error(mer::ErrorKind::MissingFile, "no such input " + input);
    if (cfg.decoder_command.empty()) {
      throw mer::Error(mer::ErrorKind::DecoderNotFound,
                       "input is a file and no decoder_command is configured");
    }
    const fs::path tmp = fs::temp_directory_path() /
                         ("mer-decode-" + std::to_string(::getpid()));
    try {
      bundle = mer::decode_video(input, cfg.decoder_command, tmp, cfg.pipeline.sample_rate_hz);
    } catch (...) {
      fs::remove_all(tmp);
      throw;
    }
    fs::remove_all(tmp);
  }

  std::ofstream file;
  if (!out.empty()) {
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    file.open(out, std::ios::binary);
    if (!file) throw mer::Error(mer::ErrorKind::InvalidInput, "cannot write " + out);
  }
  pipeline->run(bundle, [&](const std::string& line) {
    if (file.is_open()) file << line << '\n';
    if (to_stdout) std::cout << line << '\n' << std::flush;
  });
  return kExitOk;
}

int cmd_calibrate(const std::string& probs_csv, const std::string& labels_csv,
                  const std::string& out) {
  const auto probs = read_emotion_csv(probs_csv);
  const auto labels = read_emotion_csv(labels_csv);
  if (probs.size() != labels.size()) {
    throw mer::Error(mer::ErrorKind::LengthMismatch,
                     "probs has " + std::to_string(probs.size()) + " rows, labels has " +
                         std::to_string(labels.size()));
  }
  if (probs.empty()) throw mer::Error(mer::ErrorKind::InvalidInput, "no rows to calibrate on");
  const mer::CalibrationResult r = mer::calibrate(probs, labels);
  mer::save_thresholds(out, r.thresholds);
  json summary = json::object();
  for (std::size_t e = 0; e < mer::kNumEmotions; ++e) {
    summary[std::string(mer::kEmotionNames[e])] = {{"threshold", r.thresholds[e]},
                                                   {"f1", r.best_f1[e]}};
  }
  std::cout << summary.dump() << '\n';
  return kExitOk;
}

int cmd_eval(const std::string& probs_csv, const std::string& labels_csv,
             const std::string& thresholds_file) {
  const auto thresholds = config_stage([&] { return mer::load_thresholds(thresholds_file); });
  const auto probs = read_emotion_csv(probs_csv);
  const auto labels = read_emotion_csv(labels_csv);
  std::cout << report_json(mer::evaluate(probs, labels, thresholds)).dump(2) << '\n';
  return kExitOk;
}

mer::Matrix matrix_from_json(const json& rows, const char* what) {
  if (!rows.is_array() || rows.empty() || !rows.front().is_array()) {
    throw mer::Error(mer::ErrorKind::InvalidInput, std::string(what) + ": expected [[...]] rows");
  }
  mer::Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) {
      throw mer::Error(mer::ErrorKind::InvalidInput, std::string(what) + ": ragged rows");
    }
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c].get<double>();
  }
  return m;
}

mer::Dataset load_dataset(const fs::path& path) {
  mer::Dataset data;
  try {
    const json doc = json::parse(read_text(path));
    for (const auto& s : doc.at("samples")) {
      mer::TrainingSample sample;
      sample.visual = matrix_from_json(s.at("vis"), "vis");
      sample.acoustic = matrix_from_json(s.at("aco"), "aco");
      sample.textual = matrix_from_json(s.at("txt"), "txt");
      const auto& labels = s.at("labels");
      if (labels.size() != mer::kNumEmotions) {
        throw mer::Error(mer::ErrorKind::InvalidInput, "labels must have 6 entries");
      }
      for (std::size_t e = 0; e < mer::kNumEmotions; ++e) sample.labels[e] = labels[e].get<double>();
      data.push_back(std::move(sample));
    }
  } catch (const json::exception& e) {
    throw mer::Error(mer::ErrorKind::InvalidInput, path.string() + ": " + e.what());
  }
  if (data.empty()) throw mer::Error(mer::ErrorKind::InvalidInput, "dataset has no samples");
  return data;
}

struct TrainOptions {
  std::string data;
  std::size_t synthetic = 0;
  std::uint64_t seed = 0;
  double lr = 0.5;
  std::size_t epochs = 200;
  std::size_t channels = 16;
  std::size_t kernel = 3;
  std::size_t hidden = 32;
  std::vector<std::string> group_scales;
  std::string out;
};

int cmd_train_head(const TrainOptions& o) {
  if (o.data.empty() == (o.synthetic == 0)) {
    throw mer::Error(mer::ErrorKind::InvalidInput, "pass exactly one of --data or --synthetic");
  }
  const mer::Dataset data =
      o.data.empty() ? mer::make_separable_dataset(o.synthetic, {}, o.seed) : load_dataset(o.data);

  mer::FusionConfig fc;
  fc.d_visual = data.front().visual.cols();
  fc.d_acoustic = data.front().acoustic.cols();
  fc.d_textual = data.front().textual.cols();
  fc.conv_channels = o.channels;
  fc.kernel = o.kernel;
  fc.hidden = o.hidden;

  mer::TrainHyper hyper;
  hyper.lr = o.lr;
  hyper.epochs = o.epochs;
  config_stage([&] {
    fc.validate();
    for (const auto& kv : o.group_scales) {
      const auto eq = kv.find('=');
      const std::string group = kv.substr(0, eq);
      bool known = false;
      for (const char* g : mer::kTensorGroups) known = known || group == g;
      if (eq == std::string::npos || !known) {
        throw mer::Error(mer::ErrorKind::InvalidConfig,
                         "--group-lr-scale expects GROUP=SCALE with a known group, got '" + kv + "'");
      }
      hyper.group_lr_scale[group] = std::stod(kv.substr(eq + 1));
    }
    return 0;
  });

  const mer::FusionWeights initial = mer::FusionWeights::random(fc, o.seed);
  mer::TrainResult result;
  try {
    result = mer::train_head(data, initial, fc, hyper);
  } catch (const mer::NonFiniteLossError& e) {
    fs::create_directories(o.out);
    write_text(fs::path(o.out) / "loss_trace.json", json(e.trace()).dump() + "\n");
    throw;
  }

  std::vector<mer::EmotionVector> probs;
  std::vector<mer::EmotionVector> labels;
  for (const auto& s : data) {
    probs.push_back(mer::forward(s.visual, s.acoustic, s.textual, result.weights, fc).probs);
    labels.push_back(s.labels);
  }
  const mer::CalibrationResult cal = mer::calibrate(probs, labels);
  const mer::EvalReport report = mer::evaluate(probs, labels, cal.thresholds);

  mer::ModelWeights model;
  model.fusion_cfg = fc;
  model.encoder_cfg.d_visual = fc.d_visual;
  model.encoder_cfg.d_acoustic = fc.d_acoustic;
  model.encoder_cfg.d_textual = fc.d_textual;
  model.fusion = result.weights;
  const fs::path out(o.out);
  mer::save_weights(model, out);
  write_text(out / "loss_trace.json", json(result.loss_trace).dump() + "\n");
  mer::save_thresholds(out / "thresholds.json", cal.thresholds);
  write_text(out / "train_probs.csv", emotion_csv(probs));
  write_text(out / "train_labels.csv", emotion_csv(labels));

  std::cout << json{{"samples", data.size()},
                    {"loss_initial", result.loss_trace.front()},
                    {"loss_final", result.loss_trace.back()},
                    {"train", report_json(report)}}
                   .dump(2)
            << '\n';
  return kExitOk;
}

struct ServeOptions {
  std::string config;
  std::string host;
  int port = -1;
  std::string jobs_dir;
  std::uint64_t max_upload_bytes = 0;
  std::size_t max_parallel_jobs = 0;
  std::string static_dir;
  std::size_t utterance_delay_ms = 0;
  std::string port_file;
};

mer::Service* g_service = nullptr;

extern "C" void on_signal(int) {
  if (g_service) g_service->stop();
}

int cmd_serve(const ServeOptions& o) {
  mer::AppConfig cfg = load_app_config(o.config, {});
  if (!o.host.empty()) cfg.service.host = o.host;
  if (o.port >= 0) cfg.service.port = o.port;
  if (!o.jobs_dir.empty()) cfg.service.jobs_dir = o.jobs_dir;
  if (o.max_upload_bytes > 0) cfg.service.max_upload_bytes = o.max_upload_bytes;
  if (o.max_parallel_jobs > 0) cfg.service.max_parallel_jobs = o.max_parallel_jobs;
  if (!o.static_dir.empty()) cfg.service.static_dir = o.static_dir;
  if (o.utterance_delay_ms > 0) cfg.service.utterance_delay_ms = o.utterance_delay_ms;

  const auto pipeline = config_stage([&] { return mer::Pipeline::load(cfg.pipeline); });
  mer::Service service(cfg, pipeline);
  const int port = service.bind();
  if (port <= 0) {
    throw mer::Error(mer::ErrorKind::InvalidConfig,
                     "cannot bind " + cfg.service.host + ":" + std::to_string(cfg.service.port));
  }
  if (!o.port_file.empty()) write_text(o.port_file, std::to_string(port) + "\n");
  std::cerr << "listening on http://" << cfg.service.host << ':' << port << std::endl;
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  service.run();
  g_service = nullptr;
  return kExitOk;
}

void report_error(bool as_json, int code, std::string_view kind, const std::string& message) {
  if (as_json) {
    std::cerr << json{{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}}.dump()
              << '\n';
  } else {
    std::cerr << "mer: " << message << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Utterance-level multimodal emotion recognition"};
  app.set_version_flag("--version", std::string("mer ") + MER_VERSION);
  app.require_subcommand(1);
  bool json_errors = false;
  app.add_flag("--json", json_errors, "Print errors as JSON on stderr");

  std::string input, config_file, out;
  PathOverrides paths;
  bool to_stdout = false;

  auto* segment = app.add_subcommand("segment", "Detect utterance spans in a bundle or WAV file");
  segment->add_option("--input", input, "Bundle directory or .wav file")->required();
  segment->add_option("--config", config_file, "Config file (JSON)");
  segment->add_option("--out", out, "Output spans JSON")->required();

  auto* infer = app.add_subcommand("infer", "Run the full pipeline and write NDJSON events");
  infer->add_option("--input", input, "Bundle directory (or media file with a decoder)")->required();
  infer->add_option("--config", config_file, "Config file (JSON)");
  infer->add_option("--model", paths.model, "Model archive directory");
  infer->add_option("--vocab", paths.vocab, "Vocabulary JSON");
  infer->add_option("--thresholds", paths.thresholds, "Thresholds JSON");
  infer->add_option("--out", out, "Output NDJSON file");
  infer->add_flag("--stdout", to_stdout, "Mirror events to stdout");

  std::string probs_csv, labels_csv, thresholds_file;
  auto* calibrate = app.add_subcommand("calibrate", "Choose per-emotion thresholds maximizing F1");
  calibrate->add_option("--probs", probs_csv, "Probabilities CSV")->required();
  calibrate->add_option("--labels", labels_csv, "Labels CSV")->required();
  calibrate->add_option("--out", out, "Output thresholds JSON")->required();

  auto* eval = app.add_subcommand("eval", "Print accuracy and F1 metrics as JSON");
  eval->add_option("--probs", probs_csv, "Probabilities CSV")->required();
  eval->add_option("--labels", labels_csv, "Labels CSV")->required();
  eval->add_option("--thresholds", thresholds_file, "Thresholds JSON")->required();

  TrainOptions train;
  auto* train_head = app.add_subcommand("train-head", "Train the fusion head on embedding sequences");
  train_head->add_option("--data", train.data, "Dataset JSON");
  train_head->add_option("--synthetic", train.synthetic, "Use N seeded separable samples");
  train_head->add_option("--seed", train.seed, "Random seed")->capture_default_str();
  train_head->add_option("--lr", train.lr, "Learning rate")->capture_default_str();
  train_head->add_option("--epochs", train.epochs, "Full-batch epochs")->capture_default_str();
  train_head->add_option("--channels", train.channels, "Conv channels")->capture_default_str();
  train_head->add_option("--kernel", train.kernel, "Conv kernel size (odd)")->capture_default_str();
  train_head->add_option("--hidden", train.hidden, "Hidden units")->capture_default_str();
  train_head->add_option("--group-lr-scale", train.group_scales, "GROUP=SCALE, repeatable");
  train_head->add_option("--out", train.out, "Output archive directory")->required();

  ServeOptions serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP job service");
  serve_cmd->add_option("--config", serve.config, "Config file (JSON)");
  serve_cmd->add_option("--host", serve.host, "Bind address");
  serve_cmd->add_option("--port", serve.port, "Port (0 picks a free one)");
  serve_cmd->add_option("--jobs-dir", serve.jobs_dir, "Job storage directory");
  serve_cmd->add_option("--max-upload-bytes", serve.max_upload_bytes, "Upload size limit");
  serve_cmd->add_option("--max-parallel-jobs", serve.max_parallel_jobs, "Concurrent runs");
  serve_cmd->add_option("--static-dir", serve.static_dir, "Web UI build to serve at /");
  serve_cmd->add_option("--port-file", serve.port_file, "Write the bound port here");
  serve_cmd->add_option("--utterance-delay-ms", serve.utterance_delay_ms)->group("");

  std::string kind = "one-utt";
  std::uint64_t seed = 0;
  auto* gen_fixture = app.add_subcommand("gen-fixture", "Write a deterministic synthetic bundle");
  gen_fixture->add_option("--kind", kind, "Fixture kind")
      ->check(CLI::IsMember(mer::fixture_kinds()))
      ->capture_default_str();
  gen_fixture->add_option("--seed", seed, "Random seed")->capture_default_str();
  gen_fixture->add_option("--out", out, "Output bundle directory")->required();

  auto* gen_model = app.add_subcommand("gen-model", "Write the seeded reference model");
  gen_model->add_option("--seed", seed, "Random seed")->capture_default_str();
  gen_model->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    if (json_errors) {
      report_error(true, kExitConfig, "Usage", e.what());
      return kExitConfig;
    }
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*segment) return cmd_segment(input, config_file, out);
    if (*infer) return cmd_infer(input, config_file, paths, out, to_stdout);
    if (*calibrate) return cmd_calibrate(probs_csv, labels_csv, out);
    if (*eval) return cmd_eval(probs_csv, labels_csv, thresholds_file);
    if (*train_head) return cmd_train_head(train);
    if (*serve_cmd) return cmd_serve(serve);
    if (*gen_fixture) {
      mer::generate_fixture(kind, seed, out);
      return kExitOk;
    }
    if (*gen_model) {
      mer::write_reference_model(mer::make_reference_model(seed), out);
      return kExitOk;
    }
  } catch (const ConfigStageError& e) {
    report_error(json_errors, kExitConfig, mer::error_kind_name(e.kind), e.message);
    return kExitConfig;
  } catch (const mer::Error& e) {
    const int code = exit_code_for(e.kind());
    report_error(json_errors, code, mer::error_kind_name(e.kind()), e.what());
    return code;
  } catch (const std::exception& e) {
    report_error(json_errors, kExitRuntime, "Internal", e.what());
    return kExitRuntime;
  }
  return kExitRuntime;
}
