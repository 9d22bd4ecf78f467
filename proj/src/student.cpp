#include "gkt/student.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <queue>
#include <stdexcept>

#include "gkt/eval.hpp"
#include "gkt/guidance.hpp"

namespace gkt {

std::string build_student_prompt(const StudentJob &job) {
  return job.few_shot_prompt + job.instruction_prefix + question_stem(job.request.question) + job.guidance.text;
}

CompletionResult complete_response(const StudentJob &job, const LanguageModel &student) {
  if (job.request.request_id != job.guidance.request_id)
    throw std::invalid_argument("student job id mismatch: request '" + job.request.request_id + "' vs guidance '" +
                                job.guidance.request_id + "'");
  CompletionResult r;
  r.request_id = job.request.request_id;
  r.guidance = job.guidance;
  r.settings_used = job.request.settings;
  GenerationOutput out;
  try {
    out = student.generate(build_student_prompt(job), job.request.settings);
  } catch (BackendError &e) {
    e.request_id = job.request.request_id;
    throw;
  }
  r.full_response = job.guidance.text + out.text;
  r.student_token_count = out.token_count;
  r.response_token_count = student.tokenizer().count(r.full_response);
  r.student_time = out.latency;
  if (job.task) r.extracted_answer = extract_answer(r.full_response, *job.task);
  return r;
}

std::vector<FleetSlot> schedule_fleet(std::span<const double> durations_s, std::span<const double> ready_s,
                                      int parallelism) {
  if (parallelism < 1) throw std::invalid_argument("parallelism must be >= 1");
  if (!ready_s.empty() && ready_s.size() != durations_s.size())
    throw std::invalid_argument("ready times must align with durations");
  using Free = std::pair<double, int>;  // (free at, device)
  std::priority_queue<Free, std::vector<Free>, std::greater<>> devices;
  for (int d = 0; d < parallelism; ++d) devices.emplace(0.0, d);
  std::vector<FleetSlot> out(durations_s.size());
  for (std::size_t i = 0; i < durations_s.size(); ++i) {
    auto [free_at, device] = devices.top();
    devices.pop();
    const double ready = ready_s.empty() ? 0.0 : ready_s[i];
    const double start = std::max(free_at, ready);
    out[i] = FleetSlot{start, start + durations_s[i], device};
    devices.emplace(out[i].end_s, device);
  }
  return out;
}

namespace {

CompletionResult run_one(const StudentJob &job, const LanguageModel &student) {
  try {
    return complete_response(job, student);
  } catch (const std::exception &e) {
    CompletionResult failed;
    failed.request_id = job.request.request_id;
    failed.guidance = job.guidance;
    failed.full_response = job.guidance.text;
    failed.settings_used = job.request.settings;
    failed.error = e.what();
    return failed;
  }
}

FleetRun finish(std::vector<CompletionResult> results, const LanguageModel &student, int parallelism,
                double wall_s) {
  FleetRun run;
  std::vector<double> durations(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    durations[i] = results[i].student_time;
    run.failures += results[i].ok() ? 0 : 1;
  }
  run.schedule = schedule_fleet(durations, {}, parallelism);
  double makespan = 0.0;
  for (const auto &slot : run.schedule) makespan = std::max(makespan, slot.end_s);
  run.results = std::move(results);
  run.wall_time_s = wall_s;
  run.aggregate_time_s = student.simulated_time() ? makespan : wall_s;
  return run;
}

}  // namespace

FleetRun run_edge_fleet(std::span<const StudentJob> jobs, const LanguageModel &student, int parallelism) {
  if (parallelism < 1) throw std::invalid_argument("parallelism must be >= 1");
  auto t0 = std::chrono::steady_clock::now();
  std::vector<CompletionResult> results(jobs.size());
  const auto n = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(parallelism)
  for (std::ptrdiff_t i = 0; i < n; ++i) results[i] = run_one(jobs[i], student);
  auto wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return finish(std::move(results), student, parallelism, wall);
}

FleetRun run_edge_fleet_serial(std::span<const StudentJob> jobs, const LanguageModel &student, int parallelism) {
  if (parallelism < 1) throw std::invalid_argument("parallelism must be >= 1");
  auto t0 = std::chrono::steady_clock::now();
  std::vector<CompletionResult> results;
  results.reserve(jobs.size());
  for (const auto &job : jobs) results.push_back(run_one(job, student));
  auto wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return finish(std::move(results), student, parallelism, wall);
}

}  // namespace gkt
