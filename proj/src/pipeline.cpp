#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include <fmt/format.h>

#include "gkt/edge_link.hpp"
#include "gkt/orchestrator.hpp"

namespace gkt {

namespace fs = std::filesystem;

ReportPaths ReportPaths::for_report(const std::string &report_path) {
  fs::path p(report_path);
  std::string stem = (p.extension() == ".json" ? p.parent_path() / p.stem() : p).string();
  ReportPaths r;
  r.report = report_path;
  r.results = stem + ".results.jsonl";
  r.table = stem + ".csv";
  r.trace = stem + ".trace.json";
  r.trace_svg = stem + ".trace.svg";
  r.wall_clock = stem + ".wallclock.json";
  r.error = stem + ".error.json";
  return r;
}

std::string few_shot_text(const ExperimentConfig &config) {
  if (!config.few_shot_path) return config.few_shot_prompt;
  try {
    return read_text_file(*config.few_shot_path);
  } catch (const std::runtime_error &e) {
    throw ConfigError(std::string("few_shot_path: ") + e.what());
  }
}

TraceTimeline build_trace(const std::vector<CompletionResult> &results, const BatchPlan &plan,
                          const std::vector<double> &batch_latency_s, const std::vector<double> &link_time_s,
                          int parallelism) {
  TraceTimeline trace;
  std::vector<double> batch_end(plan.batches.size(), 0.0);
  double t = 0.0;
  for (std::size_t b = 0; b < plan.batches.size(); ++b) {
    const double latency = b < batch_latency_s.size() ? batch_latency_s[b] : 0.0;
    trace.spans.push_back({fmt::format("batch {} ({} req)", b, plan.batches[b].size()), TraceStage::TeacherGuidance,
                           t, t + latency});
    t += latency;
    batch_end[b] = t;
  }
  std::vector<double> ready(results.size(), 0.0);
  std::vector<double> durations(results.size(), 0.0);
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (!plan.batches.empty()) {
      const auto b = static_cast<std::size_t>(std::max(0, results[i].guidance.batch_index));
      ready[i] = b < batch_end.size() ? batch_end[b] : 0.0;
    }
    const double link = i < link_time_s.size() ? link_time_s[i] : 0.0;
    if (link > 0) {
      trace.spans.push_back({results[i].request_id, TraceStage::LinkTransfer, ready[i], ready[i] + link});
      ready[i] += link;
    }
    durations[i] = results[i].student_time;
  }
  bool any_student = std::any_of(results.begin(), results.end(),
                                 [](const CompletionResult &r) { return r.student_time > 0 || r.student_token_count > 0; });
  if (any_student) {
    auto slots = schedule_fleet(durations, ready, parallelism);
    for (std::size_t i = 0; i < results.size(); ++i)
      trace.spans.push_back({results[i].request_id, TraceStage::StudentCompletion, slots[i].start_s, slots[i].end_s});
  }
  return trace;
}

namespace {

struct StageFailure {
  int exit_code;
  Json record;
};

Json error_record(const std::string &kind, const std::string &message) {
  return {{"error", {{"kind", kind}, {"message", message}}}};
}

void write_file(const std::string &path, const std::string &content) {
  std::error_code ec;
  auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent, ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("write failed for " + path);
}

std::string csv_field(const std::string &s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

Json backend_summary(const LanguageModel &m) {
  return {{"name", m.name()},
          {"kind", m.kind() == BackendKind::Mock ? "mock" : "remote"},
          {"vocabulary_size", m.vocabulary_size()},
          {"model_id", m.config().model_id}};
}

Json load_report(const std::string &path, const std::string &field) {
  try {
    return Json::parse(read_text_file(path));
  } catch (const std::exception &e) {
    throw ConfigError(field + ": cannot read baseline report: " + e.what());
  }
}

double mean_of(const std::vector<CompletionResult> &results, int CompletionResult::*field) {
  if (results.empty()) return 0.0;
  double sum = 0.0;
  for (const auto &r : results) sum += r.*field;
  return sum / static_cast<double>(results.size());
}

}  // namespace

ExperimentOutcome run_experiment(const ExperimentConfig &config, const RunOptions &options) {
  ExperimentOutcome outcome;
  outcome.paths = ReportPaths::for_report(config.report_path);
  SteadyClock default_clock;
  const Clock &clock = options.clock ? *options.clock : default_clock;
  const double run_start = clock.now();

  auto fail = [&](int code, Json record) {
    outcome.exit_code = code;
    record["exit_code"] = code;
    outcome.error_record = record;
    if (options.write_files) {
      try {
        write_file(outcome.paths.error, record.dump(2) + "\n");
      } catch (const IoError &) {
      }
    }
    return outcome;
  };

  // Configuration.
  auto violations = validate_config(config);
  if (!violations.empty()) {
    Json rec = error_record("ConfigInvalid", "configuration has " + std::to_string(violations.size()) + " violation(s)");
    Json list = Json::array();
    for (const auto &v : violations) list.push_back({{"path", v.path}, {"message", v.message}});
    rec["error"]["violations"] = list;
    return fail(kExitConfig, rec);
  }
  BackendHandle teacher, student;
  std::string few_shot;
  Baselines baselines;
  Json reference_report;
  try {
    teacher = make_backend(config.teacher_backend);
    student = make_backend(config.student_backend);
    few_shot = few_shot_text(config);
    const auto &bl = config.baselines;
    if (bl.student_only_accuracy) baselines.student_only = NamedAccuracy{bl.student_only_name, *bl.student_only_accuracy};
    if (bl.reference_time_s) baselines.reference = NamedTime{bl.reference_name, *bl.reference_time_s};
    if (bl.student_only_report) {
      auto j = load_report(*bl.student_only_report, "baselines.student_only_report");
      baselines.student_only = NamedAccuracy{bl.student_only_name, j.at("metrics").at("accuracy").get<double>()};
    }
    if (bl.reference_report) {
      reference_report = load_report(*bl.reference_report, "baselines.reference_report");
      baselines.reference =
          NamedTime{bl.reference_name, reference_report.at("metrics").at("total_time_raw_s").at("total").get<double>()};
    }
  } catch (const ConfigError &e) {
    return fail(kExitConfig, error_record("ConfigInvalid", e.what()));
  } catch (const Json::exception &e) {
    return fail(kExitConfig, error_record("ConfigInvalid", std::string("baseline report: ") + e.what()));
  }

  // Dataset.
  std::vector<DatasetRecord> records;
  try {
    records = load_dataset(config.dataset_path, config.task);
    std::unordered_set<std::string> ids;
    for (const auto &r : records)
      if (!ids.insert(r.id).second) throw DatasetError("duplicate record id '" + r.id + "'");
  } catch (const DatasetError &e) {
    return fail(kExitDataset, error_record("DatasetUnreadable", e.what()));
  }

  std::vector<UserRequest> requests;
  requests.reserve(records.size());
  for (const auto &rec : records)
    requests.push_back(
        UserRequest{rec.id, rec.question, rec.settings.value_or(config.student_settings_default), clock.now()});

  const GenerationSettings teacher_settings =
      config.teacher_settings.value_or(GenerationSettings{0.8, 0.9, 1024, std::nullopt});
  const int in_flight = teacher->kind() == BackendKind::Remote ? teacher->config().max_in_flight : 1;

  // Stages.
  GuidanceRun guidance;
  FleetRun fleet;
  std::vector<CompletionResult> results;
  double guidance_wall = 0.0;
  std::vector<double> link_times(requests.size(), 0.0);
  std::optional<LinkModel> link;
  if (config.link) link = LinkModel::from_config(*config.link, teacher->vocabulary_size());

  try {
    if (config.run_mode == RunMode::StudentOnly) {
      std::vector<StudentJob> jobs;
      jobs.reserve(requests.size());
      for (const auto &req : requests)
        jobs.push_back(StudentJob{req, GuidancePrompt{req.request_id, "", 0, 0.0, 0}, few_shot, "", config.task});
      fleet = run_edge_fleet(jobs, *student, config.edge_parallelism);
      results = fleet.results;
    } else if (config.run_mode == RunMode::TeacherOnly) {
      // Full teacher answers: the teacher gets the student's output budget.
      ProjectionSpec full = ProjectionSpec::make(ProjectionMode::Cutoff, config.student_settings_default.max_new_tokens);
      auto t0 = clock.now();
      guidance =
          generate_guidance(requests, *teacher, full, few_shot, config.teacher_batch_size, teacher_settings, in_flight);
      guidance_wall = clock.now() - t0;
      results.reserve(requests.size());
      for (std::size_t i = 0; i < requests.size(); ++i) {
        CompletionResult r;
        r.request_id = requests[i].request_id;
        r.guidance = guidance.guidance[i];
        r.full_response = guidance.guidance[i].text;
        r.response_token_count = guidance.guidance[i].teacher_token_count;
        r.settings_used = teacher_settings;
        r.extracted_answer = extract_answer(r.full_response, config.task);
        results.push_back(std::move(r));
      }
    } else {
      auto t0 = clock.now();
      guidance = generate_guidance(requests, *teacher, config.projection, few_shot, config.teacher_batch_size,
                                   teacher_settings, in_flight);
      guidance_wall = clock.now() - t0;
      if (link) {
        for (std::size_t i = 0; i < requests.size(); ++i)
          link_times[i] = guidance_transfer_time(*link, config.link->pricing, guidance.guidance[i].teacher_token_count,
                                                 guidance.guidance[i].text);
      }
      std::vector<StudentJob> jobs;
      jobs.reserve(requests.size());
      const std::string student_instruction = config.student_sees_instruction ? config.projection.instruction_prefix : "";
      for (std::size_t i = 0; i < requests.size(); ++i)
        jobs.push_back(StudentJob{requests[i], guidance.guidance[i], few_shot, student_instruction, config.task});
      fleet = run_edge_fleet(jobs, *student, config.edge_parallelism);
      results = fleet.results;
    }
  } catch (const BackendError &e) {
    Json rec = error_record("BackendFailure", e.what());
    rec["error"]["backend_error"] = to_string(e.kind());
    if (e.batch_index) rec["error"]["batch_index"] = *e.batch_index;
    if (e.request_id) rec["error"]["request_id"] = *e.request_id;
    return fail(kExitBackend, rec);
  }

  // Scoring.
  RunMetrics metrics = score_run(results, records, config.task, baselines);

  Json report;
  report["schema_version"] = 1;
  const bool simulated = teacher->simulated_time() && student->simulated_time();
  report["run"] = {{"mode", to_string(config.run_mode)},
                   {"task", to_string(config.task)},
                   {"teacher", backend_summary(*teacher)},
                   {"student", backend_summary(*student)},
                   {"projection",
                    {{"mode", to_string(config.projection.mode)},
                     {"guidance_token_budget", config.projection.guidance_token_budget},
                     {"instruction_prefix", config.projection.instruction_prefix}}},
                   {"teacher_batch_size", config.teacher_batch_size},
                   {"edge_parallelism", config.edge_parallelism},
                   {"student_max_new_tokens", config.student_settings_default.max_new_tokens},
                   {"n_examples", results.size()},
                   {"timing_regime", simulated ? "simulated" : "measured"}};
  Json sizes = Json::array();
  for (const auto &b : guidance.plan.batches) sizes.push_back(b.size());
  report["batch_plan"] = {{"n_batches", guidance.plan.batches.size()},
                          {"capacity", config.teacher_batch_size},
                          {"batch_sizes", sizes},
                          {"batch_latency_s", guidance.batch_latency_s}};
  report["metrics"] = to_json(metrics);

  std::vector<int> guidance_tokens(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) guidance_tokens[i] = results[i].guidance.teacher_token_count;
  const double mean_guidance =
      results.empty() ? 0.0
                      : std::accumulate(guidance_tokens.begin(), guidance_tokens.end(), 0.0) /
                            static_cast<double>(results.size());
  const double mean_student = mean_of(results, &CompletionResult::student_token_count);
  report["token_stats"] = {{"mean_guidance_tokens", mean_guidance},
                           {"mean_student_tokens", mean_student},
                           {"mean_response_tokens", mean_of(results, &CompletionResult::response_token_count)},
                           {"mean_teacher_output_tokens", mean_guidance}};

  const auto &tt = metrics.total_time_s;
  if (!results.empty() && tt.total > 0)
    report["throughput"] = to_json(throughput(tt.teacher, tt.student, static_cast<long long>(results.size()),
                                              config.teacher_batch_size));
  else
    report["throughput"] = nullptr;

  if (link && config.run_mode == RunMode::Gkt) {
    long long gkt_tokens = 0, student_tokens = 0;
    std::size_t guidance_bytes = 0;
    for (const auto &r : results) {
      gkt_tokens += r.guidance.teacher_token_count;
      student_tokens += r.student_token_count;
      guidance_bytes += r.guidance.text.size();
    }
    auto [gkt, sd] = compare_schemes(gkt_tokens, student_tokens, *link);
    report["link"] = {{"bandwidth_bits_per_s", link->bandwidth_bits_per_s()},
                      {"vocabulary_size", link->vocabulary_size()},
                      {"bits_per_token", link->bits_per_token()},
                      {"overhead_bits", link->overhead_bits()},
                      {"pricing", config.link->pricing == PricingMode::TeacherTokens ? "teacher_tokens" : "utf8_bytes"},
                      {"gkt_tokens", gkt.tokens_transmitted},
                      {"gkt_time_s", gkt.time_s},
                      {"gkt_utf8_bytes", guidance_bytes},
                      {"gkt_time_utf8_pricing_s", link->transmission_time_bytes(guidance_bytes)},
                      {"speculative_tokens", sd.tokens_transmitted},
                      {"speculative_time_s", sd.time_s}};
  } else {
    report["link"] = nullptr;
  }

  report["cost"] = nullptr;
  if (config.run_mode == RunMode::Gkt && reference_report.is_object()) {
    try {
      const double ref_acc = reference_report.at("metrics").at("accuracy").get<double>();
      const double ref_len = reference_report.at("token_stats").at("mean_teacher_output_tokens").get<double>();
      if (ref_acc > 0 && ref_len > 0) {
        auto cost = cost_performance(metrics.accuracy, ref_acc, mean_guidance, ref_len);
        report["cost"] = to_json(cost);
        report["cost"]["reference"] = config.baselines.reference_name;
      }
    } catch (const Json::exception &) {
    }
  }

  // Rouge-L against gold rationales when the dataset carries them.
  {
    auto aligned = join_gold(results, records);
    std::vector<std::string> cands, refs;
    for (std::size_t i = 0; i < results.size(); ++i) {
      if (!aligned[i].gold_rationale) continue;
      cands.push_back(results[i].full_response);
      refs.push_back(*aligned[i].gold_rationale);
    }
    if (!cands.empty()) {
      auto scores = rouge_l_batch_parallel(cands, refs);
      double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
      report["rouge"] = {{"variant", kRougeVariant}, {"n", scores.size()}, {"mean", format_fixed(mean, 4)}};
    } else {
      report["rouge"] = nullptr;
    }
  }

  auto grades = grade_examples_serial(results, join_gold(results, records), config.task);
  auto aligned = join_gold(results, records);
  Json examples = Json::array();
  std::string csv =
      "id,gold,answer,correct,teacher_answer,teacher_correct,guidance_tokens,student_tokens,teacher_time_s,"
      "student_time_s,error\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto &r = results[i];
    const auto &g = grades[i];
    examples.push_back({{"id", r.request_id},
                        {"gold", aligned[i].gold_answer},
                        {"answer", g.answer ? Json(*g.answer) : Json(nullptr)},
                        {"correct", g.correct},
                        {"teacher_answer", g.teacher_answer ? Json(*g.teacher_answer) : Json(nullptr)},
                        {"teacher_correct", g.teacher_correct},
                        {"batch_index", r.guidance.batch_index},
                        {"guidance_tokens", r.guidance.teacher_token_count},
                        {"student_tokens", r.student_token_count},
                        {"teacher_time_s", r.guidance.generation_time},
                        {"student_time_s", r.student_time},
                        {"error", r.error ? Json(*r.error) : Json(nullptr)}});
    csv += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", csv_field(r.request_id), csv_field(aligned[i].gold_answer),
                       csv_field(g.answer.value_or("")), g.correct ? 1 : 0, csv_field(g.teacher_answer.value_or("")),
                       g.teacher_correct ? 1 : 0, r.guidance.teacher_token_count, r.student_token_count,
                       format_fixed(r.guidance.generation_time, 6), format_fixed(r.student_time, 6),
                       csv_field(r.error.value_or("")));
  }
  report["examples"] = examples;

  outcome.trace = build_trace(results, guidance.plan, guidance.batch_latency_s, link_times, config.edge_parallelism);
  report["trace"] = to_json(outcome.trace);

  outcome.wall_clock = {{"run_s", clock.now() - run_start},
                        {"guidance_stage_s", guidance_wall},
                        {"fleet_wall_s", fleet.wall_time_s},
                        {"fleet_aggregate_s", fleet.aggregate_time_s}};

  outcome.report = report;
  outcome.metrics = metrics;
  outcome.plan = guidance.plan;
  outcome.results = results;

  if (options.write_files) {
    try {
      write_file(outcome.paths.report, report.dump(2) + "\n");
      std::string lines;
      for (const auto &r : results) lines += to_json(r).dump() + "\n";
      write_file(outcome.paths.results, lines);
      write_file(outcome.paths.table, csv);
      if (!outcome.trace.spans.empty()) emit_trace(outcome.trace, outcome.paths.trace);
      write_file(outcome.paths.wall_clock, outcome.wall_clock.dump(2) + "\n");
    } catch (const IoError &e) {
      outcome.exit_code = kExitFailure;
      outcome.error_record = error_record("IoError", e.what());
      outcome.error_record["exit_code"] = kExitFailure;
      return outcome;
    }
  }
  outcome.exit_code = kExitOk;
  return outcome;
}

}  // namespace gkt
