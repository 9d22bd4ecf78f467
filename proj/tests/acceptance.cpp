// Acceptance runner: one PASS/FAIL line per criterion. Criterion 10 needs a
// live OpenAI-compatible endpoint and prints SKIP unless GKT_SMOKE_ENDPOINT is set.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <string>

#include <fmt/format.h>
#include <httplib.h>

#include "fixtures.hpp"
#include "gkt/edge_link.hpp"
#include "gkt/eval.hpp"
#include "gkt/guidance.hpp"
#include "gkt/orchestrator.hpp"
#include "stub_server.hpp"
#include "test_support.hpp"

using namespace gkt;
using namespace std::chrono_literals;
namespace gt = gkt::testing;

namespace {

struct Failure {
  std::string reason;
};

void require(bool ok, const std::string &what) {
  if (!ok) throw Failure{what};
}

struct Runner {
  int gating_failures = 0;

  void run(int id, const std::string &title, double max_seconds, const std::function<void()> &body) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string reason;
    try {
      body();
    } catch (const Failure &f) {
      reason = f.reason;
    } catch (const std::exception &e) {
      reason = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (reason.empty() && max_seconds > 0 && secs >= max_seconds)
      reason = fmt::format("took {:.3f} s, limit {:.0f} s", secs, max_seconds);
    if (reason.empty()) {
      fmt::print("PASS criterion {}: {} ({:.3f} s)\n", id, title, secs);
    } else {
      ++gating_failures;
      fmt::print("FAIL criterion {}: {}: {}\n", id, title, reason);
    }
    std::fflush(stdout);
  }
};

std::string fixed(double v, int d) { return format_fixed(v, d); }

// ---------------------------------------------------------------------------

void link_arithmetic() {
  require(bits_per_token(32000) == 15, "bits_per_token(32000) != 15");
  LinkModel link(5000, 32000);
  require(std::abs(transmission_time(40, link) - 0.12) <= 1e-9, "40 tokens != 0.12 s");
  require(std::abs(transmission_time(600, link) - 1.8) <= 1e-9, "600 tokens != 1.8 s");
}

void throughput_fixture() {
  auto t = throughput(506.73, 10364.28, 1319, 24);
  require(fixed(t.per_example_teacher_s, 2) == "0.38", "teacher per-example " + fixed(t.per_example_teacher_s, 4));
  require(fixed(t.per_example_student_s, 2) == "7.86", "student per-example " + fixed(t.per_example_student_s, 4));
  require(fixed(t.per_example_total_s, 2) == "8.24", "total per-example " + fixed(t.per_example_total_s, 4));
  require(t.users_served_per_window == 24, "users per window " + std::to_string(t.users_served_per_window));
  auto r = throughput(14215.12, 0, 1319, 1);
  require(fixed(r.per_example_total_s, 2) == "10.78", "reference per-example " + fixed(r.per_example_total_s, 4));
}

void comparison_columns() {
  std::vector<CompletionResult> results;
  std::vector<DatasetRecord> gold;
  int rows = 0;
  for (const auto &row : gt::comparison_rows()) {
    gt::build_row_fixture(row, results, gold);
    Baselines b{NamedAccuracy{"student-only", row.student_only_pct / 100.0},
                NamedTime{"teacher-only", row.reference_time_s}};
    auto m = score_run(results, gold, TaskKind::Numeric, b);
    require(m.delta_acc_points && fixed(*m.delta_acc_points, 2) == row.expected_delta,
            std::string(row.label) + ": delta-accuracy");
    require(m.speed_up && fixed(*m.speed_up, 2) == row.expected_speed_up, std::string(row.label) + ": speed-up");
    ++rows;
  }
  require(rows >= 6, "fewer than 6 rows");
  RunMetrics m;
  m.accuracy = 0.1918;
  m.total_time_s.total = 10871.01;
  apply_baselines(m, {NamedAccuracy{"student-only", 0.1440}, NamedTime{"teacher-only", 14215.12}});
  require(fixed(*m.speed_up, 2) == "1.31" && fixed(*m.delta_acc_points, 2) == "4.78", "worked example");
}

void cost_fixture() {
  auto c = cost_performance(64.75, 68.16, 40, 76.68);
  require(fixed(100 * c.performance_ratio, 2) == "95.00", "performance " + fixed(100 * c.performance_ratio, 4));
  require(fixed(100 * c.cost_ratio, 0) == "52", "cost " + fixed(100 * c.cost_ratio, 4));
}

std::string synthetic_dataset(int n) {
  std::string out;
  for (int i = 0; i < n; ++i)
    out += Json{{"id", "s" + std::to_string(i)},
                {"question", fmt::format("A shop has {} boxes with {} pens each. How many pens?", i + 2, i % 7 + 3)},
                {"answer", fmt::format("{} * {} = {}. #### {}", i + 2, i % 7 + 3, (i + 2) * (i % 7 + 3),
                                       (i + 2) * (i % 7 + 3))}}
               .dump() +
           "\n";
  return out;
}

void mock_end_to_end() {
  gt::TempDir dir("gkt-accept");
  ExperimentConfig c;
  c.teacher_backend = gt::mock_config(101, "teacher");
  c.teacher_backend.latency_per_token_s = 0.02;
  c.teacher_backend.batch_overhead_s = 0.5;
  c.student_backend = gt::mock_config(202, "student");
  c.student_backend.latency_per_token_s = 0.01;
  c.projection = ProjectionSpec::make(ProjectionMode::Cutoff, 40);
  c.teacher_batch_size = 24;
  c.student_settings_default.max_new_tokens = 300;
  c.dataset_path = dir.write("data.jsonl", synthetic_dataset(100));
  c.report_path = dir.file("a/report.json");
  auto a = run_experiment(c);
  require(a.exit_code == 0, "run failed: " + a.error_record.dump());
  require(a.plan.batches.size() == 5, fmt::format("{} batches", a.plan.batches.size()));
  require(a.results.size() == 100, "result count");
  for (const auto &r : a.results) {
    require(r.guidance.teacher_token_count <= 40, r.request_id + ": guidance over budget");
    require(r.full_response.rfind(r.guidance.text, 0) == 0, r.request_id + ": guidance is not a prefix");
  }
  c.report_path = dir.file("b/report.json");
  auto b = run_experiment(c);
  require(b.exit_code == 0, "second run failed");
  for (auto [x, y] : {std::pair{a.paths.report, b.paths.report}, std::pair{a.paths.results, b.paths.results},
                      std::pair{a.paths.table, b.paths.table}})
    require(gt::slurp(x) == gt::slurp(y), "outputs differ: " + std::filesystem::path(x).filename().string());
}

// Scripted teacher whose answer statement ends between token offsets 25 and 35.
double acc_teacher_at(int budget) {
  std::vector<ScriptedEntry> script;
  std::vector<UserRequest> reqs;
  std::vector<DatasetRecord> gold;
  const char letters[] = "abcde";
  for (int i = 0; i < 30; ++i) {
    const int filler = 20 + i % 11;  // statement is 5 tokens: ends at 25..35
    std::string text;
    for (int k = 0; k < filler; ++k) text += k % 2 ? " then" : " we";
    const char answer = letters[i % 5];
    text += fmt::format(" The answer is ({}).", answer);
    const auto q = fmt::format("Question {} with five options?", i);
    script.push_back({q, text});
    reqs.push_back(UserRequest{"c" + std::to_string(i), q, {}, 0});
    gold.push_back({"c" + std::to_string(i), q, std::string(1, answer), std::nullopt, std::nullopt});
  }
  auto teacher = gt::mock_model(7, 0, 0, script);
  auto run = generate_guidance(reqs, *teacher, ProjectionSpec::make(ProjectionMode::Cutoff, budget), "", 24);
  std::vector<CompletionResult> results;
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    CompletionResult r;
    r.request_id = reqs[i].request_id;
    r.guidance = run.guidance[i];
    r.full_response = r.guidance.text;
    results.push_back(r);
  }
  return score_run(results, gold, TaskKind::MultipleChoice).acc_teacher;
}

void acc_teacher_monotone() {
  const double a10 = acc_teacher_at(10), a20 = acc_teacher_at(20), a40 = acc_teacher_at(40);
  require(a10 == 0.0, "m=10 gives " + fixed(a10, 4));
  require(a20 == 0.0, "m=20 gives " + fixed(a20, 4));
  require(a40 > 0.0, "m=40 gives 0");
}

void extraction_suite() {
  const auto &cases = gt::extraction_cases();
  require(cases.size() >= 30, "fewer than 30 cases");
  int right = 0;
  std::string first_miss;
  for (const auto &c : cases) {
    if (extract_answer(c.text, c.task) == c.expected)
      ++right;
    else if (first_miss.empty())
      first_miss = c.text;
  }
  require(right == static_cast<int>(cases.size()),
          fmt::format("{}/{} correct, first miss '{}'", right, cases.size(), first_miss));
}

void rouge_properties() {
  require(rouge_l("the quick brown fox", "the quick brown fox") == 1.0, "identity");
  require(rouge_l("alpha beta gamma", "delta epsilon zeta") == 0.0, "disjoint");
  require(std::abs(rouge_l("the cat sat", "the cat ran") - 0.6667) <= 1e-4, "three-token example");
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> words(10 + rng() % 20);
    for (auto &w : words) w = "w" + std::to_string(rng() % 50);
    auto ref = words;
    std::vector<std::size_t> order(ref.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    auto join = [](const std::vector<std::string> &v) {
      std::string s;
      for (const auto &w : v) s += w + " ";
      return s;
    };
    double prev = rouge_l(join(words), join(ref));
    for (std::size_t k = 0; k < order.size(); ++k) {
      ref[order[k]] = "x" + std::to_string(k);
      double now = rouge_l(join(words), join(ref));
      require(now <= prev + 1e-12, "degradation increased the score");
      prev = now;
    }
  }
}

void service_contract() {
  GenerationSettings ts;
  ts.max_new_tokens = 512;
  {
    GuidanceServer server(gt::mock_model(9, 0.001, 0.01), "", 24, 60000ms, ts);
    const int port = server.start("127.0.0.1", 0);
    httplib::Client cli("127.0.0.1", port);
    cli.set_read_timeout(30, 0);
    Json qs = Json::array();
    for (int i = 0; i < 24; ++i) qs.push_back(fmt::format("What is {} plus {}?", i, 2 * i));
    auto res = cli.Post("/v1/guidance", Json{{"questions", qs}, {"mode", "cutoff"}, {"budget", 30}}.dump(),
                        "application/json");
    require(res && res->status == 200, "24-question request failed");
    auto j = Json::parse(res->body);
    require(j["guidance"].size() == 24, "guidance count");
    for (const auto &c : j["token_counts"]) require(c.get<int>() <= 30, "token count over budget");
    for (const auto &b : j["batch_indices"]) require(b.get<int>() == 0, "request split across batches");
    require(server.service().batches_dispatched() == 1, "more than one batch dispatched");

    auto bad = cli.Post("/v1/guidance", R"({"questions":["q"],"mode":"cutoff","budget":"many"})", "application/json");
    require(bad && bad->status == 400, "malformed request not rejected");
    require(Json::parse(bad->body)["error"]["path"] == "budget", "field path missing");
    server.stop();
  }
  {
    auto stub = std::make_unique<gt::StubCompletionsServer>(
        [](const Json &, int) { return gt::StubCompletionsServer::Reply{200, Json::object()}; });
    BackendConfig cfg;
    cfg.kind = BackendKind::Remote;
    cfg.family = "llama";
    cfg.endpoint = stub->endpoint();
    cfg.model_id = "m";
    cfg.auth_token = "t";
    cfg.max_attempts = 2;
    cfg.backoff_initial_s = 0.01;
    cfg.timeout_s = 1;
    auto teacher = make_backend(cfg);
    stub.reset();
    GuidanceServer server(teacher, "", 4, 5ms, ts);
    const int port = server.start("127.0.0.1", 0);
    httplib::Client cli("127.0.0.1", port);
    auto res =
        cli.Post("/v1/guidance", R"({"questions":["q"],"mode":"cutoff","budget":5})", "application/json");
    require(res && res->status == 502, "killed backend did not give 502");
    auto health = cli.Get("/healthz");
    require(health && health->status == 200 && server.running(), "service went down");
    server.stop();
  }
}

bool smoke_test(std::string &detail) {
  const char *endpoint = std::getenv("GKT_SMOKE_ENDPOINT");
  const char *teacher_model = std::getenv("GKT_SMOKE_TEACHER_MODEL");
  const char *student_model = std::getenv("GKT_SMOKE_STUDENT_MODEL");
  const char *dataset = std::getenv("GKT_SMOKE_DATASET");
  gt::TempDir dir("gkt-smoke");
  ExperimentConfig c;
  auto remote = [&](const char *name, const char *model) {
    BackendConfig b;
    b.name = name;
    b.kind = BackendKind::Remote;
    b.endpoint = endpoint;
    b.model_id = model ? model : "default";
    b.vocabulary_size = 32000;
    b.max_seq_len = 4096;
    return b;
  };
  c.teacher_backend = remote("teacher", teacher_model);
  c.student_backend = remote("student", student_model ? student_model : teacher_model);
  c.projection = ProjectionSpec::make(ProjectionMode::Cutoff, 40);
  c.teacher_batch_size = 10;
  c.student_settings_default.max_new_tokens = 200;
  c.few_shot_path = std::string(GKT_SOURCE_DIR) + "/data/prompts/gsm8k_8shot.txt";
  c.dataset_path = dataset ? dataset : std::string(GKT_SOURCE_DIR) + "/data/gsm8k_smoke.jsonl";
  c.report_path = dir.file("report.json");
  auto out = run_experiment(c);
  if (out.exit_code != 0) {
    detail = out.error_record.dump();
    return false;
  }
  auto report = Json::parse(gt::slurp(out.paths.report));
  const bool ok = report.contains("metrics") && report["examples"].size() == 10 && out.results.size() == 10;
  detail = fmt::format("accuracy {}", fixed(out.metrics.accuracy, 2));
  return ok;
}

}  // namespace

int main() {
  Runner r;
  r.run(1, "link arithmetic", 1.0, link_arithmetic);
  r.run(2, "throughput fixture", 1.0, throughput_fixture);
  r.run(3, "delta-accuracy and speed-up columns", 0, comparison_columns);
  r.run(4, "cost-performance fixture", 0, cost_fixture);
  r.run(5, "mock end-to-end determinism", 30.0, mock_end_to_end);
  r.run(6, "guidance-only accuracy grows with budget", 0, acc_teacher_monotone);
  r.run(7, "answer extraction suite", 0, extraction_suite);
  r.run(8, "rouge-l properties", 0, rouge_properties);
  r.run(9, "guidance service contract", 0, service_contract);

  if (!std::getenv("GKT_SMOKE_ENDPOINT")) {
    fmt::print("SKIP criterion 10: real-model smoke test (set GKT_SMOKE_ENDPOINT to run)\n");
  } else {
    std::string detail;
    bool ok = false;
    try {
      ok = smoke_test(detail);
    } catch (const std::exception &e) {
      detail = e.what();
    }
    fmt::print("{} criterion 10: real-model smoke test (non-gating): {}\n", ok ? "PASS" : "FAIL", detail);
  }
  return r.gating_failures == 0 ? 0 : 1;
}
