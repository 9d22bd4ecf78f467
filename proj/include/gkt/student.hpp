#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gkt/backend.hpp"
#include "gkt/domain.hpp"

namespace gkt {

struct StudentJob {
  UserRequest request;
  GuidancePrompt guidance;
  std::string few_shot_prompt;
  // Prepended to the question stem when the student should see the teacher's
  // instruction too; empty by default.
  std::string instruction_prefix;
  // When set, the extracted answer is filled in on the result.
  std::optional<TaskKind> task;
};

/// few_shot + [instruction] + "Q: ...\nA:" + guidance text.
std::string build_student_prompt(const StudentJob &job);

/// Completes one response at batch size 1 under the job's own settings.
/// full_response = guidance.text + continuation. Backend errors propagate
/// with request_id attached.
CompletionResult complete_response(const StudentJob &job, const LanguageModel &student);

struct FleetSlot {
  double start_s = 0.0;
  double end_s = 0.0;
  int device = 0;
};

/// Greedy list scheduling of jobs (in order) onto `parallelism` devices; job i
/// may not start before ready_s[i] (empty = all ready at 0).
std::vector<FleetSlot> schedule_fleet(std::span<const double> durations_s, std::span<const double> ready_s,
                                      int parallelism);

struct FleetRun {
  std::vector<CompletionResult> results;  // order-aligned with the jobs
  std::vector<FleetSlot> schedule;
  // Simulated makespan for simulated-time backends, wall time otherwise.
  double aggregate_time_s = 0.0;
  double wall_time_s = 0.0;
  std::size_t failures = 0;
};

/// Runs independent jobs with up to `parallelism` concurrent devices. A failed
/// job becomes a result with `error` set; the fleet keeps going.
FleetRun run_edge_fleet(std::span<const StudentJob> jobs, const LanguageModel &student, int parallelism);

/// Serial reference for run_edge_fleet: same results and schedule, one job at
/// a time on the calling thread.
FleetRun run_edge_fleet_serial(std::span<const StudentJob> jobs, const LanguageModel &student, int parallelism);

}  // namespace gkt
