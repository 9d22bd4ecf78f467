// gkt: run, serve, simulate-link and score subcommands.

#include <csignal>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "gkt/edge_link.hpp"
#include "gkt/eval.hpp"
#include "gkt/orchestrator.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

void print_error(const gkt::Json &record) { std::cerr << record.dump() << std::endl; }

int cmd_run(const std::string &config_path, const std::optional<std::string> &mode, const std::optional<int> &budget,
            const std::optional<int> &batch_size, const std::optional<std::string> &baseline,
            const std::optional<std::string> &report, const std::optional<std::string> &student_only_report,
            const std::optional<std::string> &reference_report) {
  gkt::ExperimentConfig config;
  try {
    config = gkt::load_config(config_path);
    if (mode) {
      auto m = gkt::parse_projection_mode(*mode);
      auto keep_budget = config.projection.guidance_token_budget;
      auto placement = config.projection.placement;
      config.projection = gkt::ProjectionSpec::make(m, keep_budget);
      config.projection.placement = placement;
    }
    if (budget) config.projection.guidance_token_budget = *budget;
    if (batch_size) config.teacher_batch_size = *batch_size;
    if (baseline) {
      config.run_mode = gkt::parse_run_mode(*baseline);
      if (!report) {
        std::filesystem::path p(config.report_path);
        config.report_path = (p.parent_path() / (p.stem().string() + "." + *baseline + ".json")).string();
      }
    }
    if (report) config.report_path = *report;
    if (student_only_report) config.baselines.student_only_report = *student_only_report;
    if (reference_report) config.baselines.reference_report = *reference_report;
  } catch (const gkt::ConfigError &e) {
    print_error({{"error", {{"kind", "ConfigInvalid"}, {"message", e.what()}}}, {"exit_code", gkt::kExitConfig}});
    return gkt::kExitConfig;
  }
  auto outcome = gkt::run_experiment(config);
  if (outcome.exit_code != gkt::kExitOk) {
    print_error(outcome.error_record);
    return outcome.exit_code;
  }
  const auto &m = outcome.metrics;
  std::cout << fmt::format("examples   {}\n", m.n_examples);
  std::cout << fmt::format("batches    {}\n", outcome.plan.batches.size());
  std::cout << fmt::format("ACC        {}%\n", gkt::format_fixed(100 * m.accuracy, 2));
  std::cout << fmt::format("ACC_teacher {}%\n", gkt::format_fixed(100 * m.acc_teacher, 2));
  if (m.delta_acc_points)
    std::cout << fmt::format("dACC       {} (vs {})\n", gkt::format_fixed(*m.delta_acc_points, 2), *m.delta_baseline);
  std::cout << fmt::format("time       {} s (teacher {} + student {})\n", gkt::format_fixed(m.total_time_s.total, 2),
                           gkt::format_fixed(m.total_time_s.teacher, 2), gkt::format_fixed(m.total_time_s.student, 2));
  if (m.speed_up)
    std::cout << fmt::format("speed up   {}x (vs {})\n", gkt::format_fixed(*m.speed_up, 2), *m.speed_up_reference);
  std::cout << "report     " << outcome.paths.report << "\n";
  return gkt::kExitOk;
}

int cmd_serve(const std::string &config_path, const std::string &host, int port) {
  gkt::ExperimentConfig config;
  try {
    config = gkt::load_config(config_path);
    auto violations = gkt::validate_config(config);
    // The service needs only the teacher side.
    std::erase_if(violations, [](const gkt::Violation &v) {
      return v.path.rfind("student", 0) == 0 || v.path == "dataset_path" || v.path == "report_path";
    });
    if (!violations.empty()) {
      gkt::Json list = gkt::Json::array();
      for (const auto &v : violations) list.push_back({{"path", v.path}, {"message", v.message}});
      print_error({{"error", {{"kind", "ConfigInvalid"}, {"violations", list}}}, {"exit_code", gkt::kExitConfig}});
      return gkt::kExitConfig;
    }
    gkt::GuidanceServer server(config);
    int bound = server.start(host, port);
    std::cout << "serving /v1/guidance on " << host << ":" << bound << std::endl;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop && server.running()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    std::cout << "stopped" << std::endl;
  } catch (const gkt::ConfigError &e) {
    print_error({{"error", {{"kind", "ConfigInvalid"}, {"message", e.what()}}}, {"exit_code", gkt::kExitConfig}});
    return gkt::kExitConfig;
  } catch (const gkt::IoError &e) {
    print_error({{"error", {{"kind", "BindFailure"}, {"message", e.what()}}}, {"exit_code", gkt::kExitFailure}});
    return gkt::kExitFailure;
  }
  return gkt::kExitOk;
}

int cmd_simulate_link(long long vocab, double bandwidth, long long m, long long student_tokens, bool json) {
  try {
    std::vector<double> sweep;
    for (double f : {0.25, 0.5, 1.0, 2.0, 4.0}) sweep.push_back(bandwidth * f);
    auto rows = gkt::sweep_bandwidths(vocab, sweep, m, student_tokens);
    const int b = gkt::bits_per_token(vocab);
    if (json) {
      gkt::Json out = {{"vocabulary_size", vocab}, {"bits_per_token", b}, {"rows", gkt::Json::array()}};
      for (const auto &r : rows)
        out["rows"].push_back({{"bandwidth_bits_per_s", r.bandwidth_bits_per_s},
                               {"gkt_tokens", r.gkt.tokens_transmitted},
                               {"gkt_time_s", r.gkt.time_s},
                               {"speculative_tokens", r.speculative.tokens_transmitted},
                               {"speculative_time_s", r.speculative.time_s}});
      std::cout << out.dump(2) << std::endl;
      return gkt::kExitOk;
    }
    std::cout << fmt::format("vocabulary {} -> {} bits/token; GKT sends {} tokens, speculative decoding sends {}\n",
                             vocab, b, m, 2 * student_tokens);
    std::cout << fmt::format("{:>16} {:>12} {:>12} {:>8}\n", "bandwidth(b/s)", "gkt(s)", "spec(s)", "ratio");
    for (const auto &r : rows) {
      const double ratio = r.gkt.time_s > 0 ? r.speculative.time_s / r.gkt.time_s : 0.0;
      std::cout << fmt::format("{:>16g} {:>12.4f} {:>12.4f} {:>8.2f}\n", r.bandwidth_bits_per_s, r.gkt.time_s,
                               r.speculative.time_s, ratio);
    }
  } catch (const gkt::DomainError &e) {
    std::cerr << "error: " << e.what() << std::endl;
    return gkt::kExitConfig;
  }
  return gkt::kExitOk;
}

int cmd_score(const std::string &results_path, const std::string &gold_path, const std::string &task_name,
              const std::optional<double> &student_only_acc, const std::optional<double> &reference_time) {
  try {
    auto task = gkt::parse_task_kind(task_name);
    auto results = gkt::load_results(results_path);
    auto gold = gkt::load_dataset(gold_path, task);
    gkt::Baselines baselines;
    if (student_only_acc) baselines.student_only = gkt::NamedAccuracy{"student-only", *student_only_acc};
    if (reference_time) baselines.reference = gkt::NamedTime{"reference", *reference_time};
    auto metrics = gkt::score_run(results, gold, task, baselines);
    std::cout << gkt::to_json(metrics).dump(2) << std::endl;
  } catch (const gkt::ConfigError &e) {
    std::cerr << "error: " << e.what() << std::endl;
    return gkt::kExitConfig;
  } catch (const gkt::DatasetError &e) {
    print_error({{"error", {{"kind", "DatasetUnreadable"}, {"message", e.what()}}}, {"exit_code", gkt::kExitDataset}});
    return gkt::kExitDataset;
  } catch (const gkt::JoinError &e) {
    print_error({{"error", {{"kind", "JoinError"}, {"message", e.what()}}}, {"exit_code", gkt::kExitDataset}});
    return gkt::kExitDataset;
  }
  return gkt::kExitOk;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Teacher-guided student inference pipeline"};
  app.require_subcommand(1);

  auto *run = app.add_subcommand("run", "Run the two-stage pipeline over a dataset");
  std::string run_config;
  std::optional<std::string> run_mode, run_baseline, run_report, run_so_report, run_ref_report;
  std::optional<int> run_budget, run_batch;
  run->add_option("--config", run_config, "Experiment config (JSON)")->required();
  run->add_option("--mode", run_mode, "Guidance projection")->check(CLI::IsMember({"cutoff", "concise", "hint"}));
  run->add_option("--guidance-tokens", run_budget, "Guidance token budget m");
  run->add_option("--batch-size", run_batch, "Teacher batch size");
  run->add_option("--baseline", run_baseline, "Run a single-model baseline instead")
      ->check(CLI::IsMember({"student-only", "teacher-only"}));
  run->add_option("--report", run_report, "Report path (overrides config)");
  run->add_option("--student-only-report", run_so_report, "Student-only report used for the accuracy delta");
  run->add_option("--reference-report", run_ref_report, "Reference report used for speed-up and cost");

  auto *serve = app.add_subcommand("serve", "Serve POST /v1/guidance");
  std::string serve_config, serve_host = "127.0.0.1";
  int serve_port = 8080;
  serve->add_option("--config", serve_config, "Experiment config (JSON)")->required();
  serve->add_option("--port", serve_port, "Port (0 picks one)")->required();
  serve->add_option("--host", serve_host, "Bind address");

  auto *link = app.add_subcommand("simulate-link", "Compare link cost of GKT and speculative decoding");
  long long vocab = 32000, m = 40, student_tokens = 300;
  double bandwidth = 5000;
  bool link_json = false;
  link->add_option("--vocab", vocab, "Vocabulary size N")->required();
  link->add_option("--bandwidth-bps", bandwidth, "Bandwidth in bits per second")->required();
  link->add_option("--guidance-tokens", m, "Guidance tokens m")->required();
  link->add_option("--student-tokens", student_tokens, "Student output tokens L")->required();
  link->add_flag("--json", link_json, "Emit JSON");

  auto *score = app.add_subcommand("score", "Score a results file against gold answers");
  std::string score_results, score_gold, score_task = "numeric";
  std::optional<double> score_student_acc, score_ref_time;
  score->add_option("--results", score_results, "Per-example results (JSONL)")->required();
  score->add_option("--gold", score_gold, "Dataset (JSONL)")->required();
  score->add_option("--task", score_task, "numeric | choice")->check(CLI::IsMember({"numeric", "choice"}));
  score->add_option("--student-only-acc", score_student_acc, "Student-only accuracy (fraction) for dACC");
  score->add_option("--reference-time", score_ref_time, "Reference total time (s) for speed up");

  CLI11_PARSE(app, argc, argv);

  if (*run)
    return cmd_run(run_config, run_mode, run_budget, run_batch, run_baseline, run_report, run_so_report,
                   run_ref_report);
  if (*serve) return cmd_serve(serve_config, serve_host, serve_port);
  if (*link) return cmd_simulate_link(vocab, bandwidth, m, student_tokens, link_json);
  if (*score) return cmd_score(score_results, score_gold, score_task, score_student_acc, score_ref_time);
  return gkt::kExitFailure;
}
