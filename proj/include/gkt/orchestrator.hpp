#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "gkt/domain.hpp"
#include "gkt/eval.hpp"
#include "gkt/guidance.hpp"
#include "gkt/student.hpp"

namespace httplib {
class Server;
}

namespace gkt {

// ---------------------------------------------------------------------------
// Clocks. arrival_time comes from an injected monotonic clock so simulated and
// wall-clock runs share one path.

class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now() const = 0;
};

class SteadyClock final : public Clock {
 public:
  SteadyClock() : origin_(std::chrono::steady_clock::now()) {}
  double now() const override {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - origin_).count();
  }

 private:
  std::chrono::steady_clock::time_point origin_;
};

class ManualClock final : public Clock {
 public:
  double now() const override { return t_; }
  void advance(double s) { t_ += s; }

 private:
  double t_ = 0.0;
};

// ---------------------------------------------------------------------------
// Trace

enum class TraceStage { TeacherGuidance, StudentCompletion, LinkTransfer };

std::string to_string(TraceStage stage);

struct TraceSpan {
  std::string label;
  TraceStage stage = TraceStage::TeacherGuidance;
  double start_s = 0.0;
  double end_s = 0.0;
};

struct TraceTimeline {
  std::vector<TraceSpan> spans;

  /// Spans ordered by start time (ties by stage, then label).
  std::vector<TraceSpan> sorted() const;
  double end_time() const;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Json to_json(const TraceTimeline &timeline);

/// Standalone SVG: one lane per stage, one bar per span, seconds on the x axis.
std::string render_trace_svg(const TraceTimeline &timeline);

/// Writes `json_path` plus an SVG next to it (same stem, .svg). Returns the
/// SVG path. Throws std::invalid_argument on an empty timeline, IoError on
/// write failure.
std::string emit_trace(const TraceTimeline &timeline, const std::string &json_path);

// ---------------------------------------------------------------------------
// Experiment runs

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitDataset = 3,
  kExitBackend = 4,
};

struct ReportPaths {
  std::string report;
  std::string results;
  std::string table;
  std::string trace;
  std::string trace_svg;
  std::string wall_clock;
  std::string error;

  static ReportPaths for_report(const std::string &report_path);
};

struct ExperimentOutcome {
  int exit_code = kExitOk;
  Json report;        // deterministic part
  Json wall_clock;    // measured durations, kept apart from the report
  Json error_record;  // null on success
  ReportPaths paths;
  RunMetrics metrics;
  std::vector<CompletionResult> results;
  BatchPlan plan;
  TraceTimeline trace;
};

struct RunOptions {
  const Clock *clock = nullptr;  // defaults to a SteadyClock
  bool write_files = true;
};

/// plan_batches -> generate_guidance -> link pricing -> run_edge_fleet ->
/// score_run, then writes the report family. Never throws for config,
/// dataset or backend faults; they become exit codes plus an error record.
ExperimentOutcome run_experiment(const ExperimentConfig &config, const RunOptions &options = {});

/// Builds the pipeline trace: teacher batches back to back, link transfers
/// after each batch, student jobs on `parallelism` devices once guidance lands.
TraceTimeline build_trace(const std::vector<CompletionResult> &results, const BatchPlan &plan,
                          const std::vector<double> &batch_latency_s, const std::vector<double> &link_time_s,
                          int parallelism);

std::string few_shot_text(const ExperimentConfig &config);

// ---------------------------------------------------------------------------
// Service

/// HTTP front end for GuidanceService: POST /v1/guidance and GET /healthz.
class GuidanceServer {
 public:
  explicit GuidanceServer(const ExperimentConfig &config);
  GuidanceServer(BackendHandle teacher, std::string few_shot_prompt, int capacity, std::chrono::milliseconds linger,
                 GenerationSettings teacher_settings, std::map<ProjectionMode, std::string> prefixes = {});
  ~GuidanceServer();

  GuidanceServer(const GuidanceServer &) = delete;
  GuidanceServer &operator=(const GuidanceServer &) = delete;

  /// Binds and starts serving on a background thread. port 0 picks a free
  /// port. Returns the bound port; throws IoError (BindFailure) otherwise.
  int start(const std::string &host, int port);
  /// Stops accepting, lets in-flight batches finish, joins.
  void stop();
  bool running() const;

  GuidanceService &service() { return *service_; }

 private:
  void install_routes();

  std::unique_ptr<GuidanceService> service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::atomic<bool> running_{false};
};

/// Validates a /v1/guidance body. Returns the first field-path violation.
struct GuidanceRequestBody {
  std::vector<std::string> questions;
  ProjectionMode mode = ProjectionMode::Cutoff;
  int budget = 0;
};
std::optional<Violation> parse_guidance_body(const std::string &body, GuidanceRequestBody &out);

}  // namespace gkt
