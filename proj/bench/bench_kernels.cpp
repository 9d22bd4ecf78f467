// Serial reference vs OpenMP kernels.

#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "gkt/backend.hpp"
#include "gkt/eval.hpp"
#include "gkt/student.hpp"

using namespace gkt;

namespace {

std::string random_text(std::mt19937 &rng, int words) {
  static const char *vocab[] = {"the", "sum", "of", "apples", "is", "then", "we", "add", "total", "each",
                                "box", "has", "pens", "so", "left", "more", "less", "half", "twice", "cost"};
  std::string s;
  for (int i = 0; i < words; ++i) {
    if (i) s += ' ';
    s += vocab[rng() % 20];
  }
  return s;
}

struct GradingData {
  std::vector<CompletionResult> results;
  std::vector<DatasetRecord> gold;
};

GradingData grading_data(int n) {
  std::mt19937 rng(1);
  GradingData d;
  for (int i = 0; i < n; ++i) {
    CompletionResult r;
    r.request_id = "e" + std::to_string(i);
    r.guidance.text = random_text(rng, 40);
    r.full_response = r.guidance.text + " " + random_text(rng, 200) + " The answer is " + std::to_string(rng() % 100);
    d.results.push_back(r);
    DatasetRecord g;
    g.id = r.request_id;
    g.question = "q";
    g.gold_answer = std::to_string(rng() % 100);
    d.gold.push_back(g);
  }
  return d;
}

void BM_GradeSerial(benchmark::State &state) {
  auto d = grading_data(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(grade_examples_serial(d.results, d.gold, TaskKind::Numeric));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_GradeParallel(benchmark::State &state) {
  auto d = grading_data(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(grade_examples_parallel(d.results, d.gold, TaskKind::Numeric));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

std::pair<std::vector<std::string>, std::vector<std::string>> rouge_data(int n) {
  std::mt19937 rng(2);
  std::vector<std::string> c, r;
  for (int i = 0; i < n; ++i) {
    c.push_back(random_text(rng, 150));
    r.push_back(random_text(rng, 150));
  }
  return {c, r};
}

void BM_RougeSerial(benchmark::State &state) {
  auto [c, r] = rouge_data(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(rouge_l_batch_serial(c, r));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_RougeParallel(benchmark::State &state) {
  auto [c, r] = rouge_data(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(rouge_l_batch_parallel(c, r));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

std::vector<StudentJob> fleet_jobs(int n) {
  std::vector<StudentJob> jobs;
  std::mt19937 rng(3);
  for (int i = 0; i < n; ++i) {
    StudentJob j;
    j.request.request_id = "r" + std::to_string(i);
    j.request.question = random_text(rng, 30) + "?";
    j.request.settings.max_new_tokens = 300;
    j.guidance.request_id = j.request.request_id;
    j.guidance.text = " " + random_text(rng, 40);
    jobs.push_back(j);
  }
  return jobs;
}

MockModel bench_student() {
  BackendConfig c;
  c.name = "student";
  c.family = "llama";
  c.seed = 5;
  c.latency_per_token_s = 0.01;
  return MockModel(c);
}

void BM_FleetSerial(benchmark::State &state) {
  auto jobs = fleet_jobs(static_cast<int>(state.range(0)));
  auto student = bench_student();
  for (auto _ : state) benchmark::DoNotOptimize(run_edge_fleet_serial(jobs, student, 24));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_FleetParallel(benchmark::State &state) {
  auto jobs = fleet_jobs(static_cast<int>(state.range(0)));
  auto student = bench_student();
  for (auto _ : state) benchmark::DoNotOptimize(run_edge_fleet(jobs, student, 24));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_GradeSerial)->Arg(1319)->Arg(8192);
BENCHMARK(BM_GradeParallel)->Arg(1319)->Arg(8192);
BENCHMARK(BM_RougeSerial)->Arg(256)->Arg(1221);
BENCHMARK(BM_RougeParallel)->Arg(256)->Arg(1221);
BENCHMARK(BM_FleetSerial)->Arg(240)->Arg(1319);
BENCHMARK(BM_FleetParallel)->Arg(240)->Arg(1319);

BENCHMARK_MAIN();
