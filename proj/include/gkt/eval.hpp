#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gkt/domain.hpp"
#include "gkt/edge_link.hpp"

namespace gkt {

class JoinError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Answer extraction

/// Numeric: last "the answer is <number>" (case-insensitive, commas and a
/// leading '$' allowed), else the last standalone number. MultipleChoice: the
/// last choice letter a-e attached to the word "answer", e.g. "the answer is
/// (b)" or "(b) is the answer".
std::optional<std::string> extract_answer(std::string_view text, TaskKind task);

/// Like extract_answer but without the last-number fallback: only an explicit
/// answer statement counts. Used to grade truncated guidance on its own.
std::optional<std::string> extract_terminal_answer(std::string_view text, TaskKind task);

bool answers_equal(const std::string &a, const std::string &b, TaskKind task);

// ---------------------------------------------------------------------------
// Run scoring

struct StageTimes {
  double teacher = 0.0;
  double student = 0.0;
  double total = 0.0;
};

struct NamedAccuracy {
  std::string name;
  double accuracy = 0.0;  // fraction
};

struct NamedTime {
  std::string name;
  double total_time_s = 0.0;
};

struct Baselines {
  std::optional<NamedAccuracy> student_only;
  std::optional<NamedTime> reference;
};

struct RunMetrics {
  std::size_t n_examples = 0;
  std::size_t n_correct = 0;
  std::size_t n_teacher_correct = 0;
  std::size_t n_failed = 0;
  double accuracy = 0.0;
  double acc_teacher = 0.0;
  std::optional<double> delta_acc_points;
  std::optional<std::string> delta_baseline;
  StageTimes total_time_s;
  std::optional<double> speed_up;
  std::optional<std::string> speed_up_reference;
};

struct ExampleGrade {
  std::optional<std::string> answer;
  std::optional<std::string> teacher_answer;
  bool correct = false;
  bool teacher_correct = false;
};

/// results[i] is graded against gold[i]; both spans must already be aligned.
std::vector<ExampleGrade> grade_examples_serial(std::span<const CompletionResult> results,
                                                std::span<const DatasetRecord> gold, TaskKind task);
std::vector<ExampleGrade> grade_examples_parallel(std::span<const CompletionResult> results,
                                                  std::span<const DatasetRecord> gold, TaskKind task);

/// Reorders gold to match results by id. Throws JoinError on a missing or
/// duplicated id on either side.
std::vector<DatasetRecord> join_gold(std::span<const CompletionResult> results, std::span<const DatasetRecord> gold);

/// accuracy and ACC_teacher from the grades, stage times summed over results,
/// then ΔACC and Speed Up against the named baselines.
RunMetrics score_run(std::span<const CompletionResult> results, std::span<const DatasetRecord> gold, TaskKind task,
                     const Baselines &baselines = {});

/// Fills the baseline-relative columns of an already-counted run.
void apply_baselines(RunMetrics &metrics, const Baselines &baselines);

// ---------------------------------------------------------------------------
// Throughput and cost

struct ThroughputModel {
  double per_example_teacher_s = 0.0;
  double per_example_student_s = 0.0;
  double per_example_total_s = 0.0;
  int batch_size = 1;
  int users_served_per_window = 1;
};

ThroughputModel throughput(double teacher_total_s, double student_total_s, long long n_examples, int batch_size);

enum class CostMode {
  TeacherOutputTokens,  // guidance / full teacher output
  AllTokens,            // input + output tokens at one rate
  DualRate,             // separate input and output rates
};

std::string to_string(CostMode mode);

struct CostPricing {
  CostMode mode = CostMode::TeacherOutputTokens;
  double input_tokens = 0.0;
  double input_rate = 1.0;
  double output_rate = 1.0;
};

struct CostPerformance {
  double performance_ratio = 0.0;
  double cost_ratio = 0.0;
  CostMode mode = CostMode::TeacherOutputTokens;
};

CostPerformance cost_performance(double acc_framework, double acc_teacher_full, double guidance_tokens,
                                 double full_output_tokens, const CostPricing &pricing = {});

// ---------------------------------------------------------------------------
// Rouge-L

inline constexpr const char *kRougeVariant = "rouge-l-f1";

/// Lower-cased words with ASCII punctuation removed.
std::vector<std::string> rouge_tokens(std::string_view text);
std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

/// F1 of the word-level longest common subsequence. 0 when either side is empty.
double rouge_l(std::string_view candidate, std::string_view reference);

std::vector<double> rouge_l_batch_serial(std::span<const std::string> candidates,
                                         std::span<const std::string> references);
std::vector<double> rouge_l_batch_parallel(std::span<const std::string> candidates,
                                           std::span<const std::string> references);

// ---------------------------------------------------------------------------
// Reporting helpers

/// Half-up (away from zero) rounding for table-facing numbers.
double round_half_up(double value, int decimals);
std::string format_fixed(double value, int decimals);

Json to_json(const RunMetrics &metrics);
Json to_json(const ThroughputModel &model);
Json to_json(const CostPerformance &cost);

}  // namespace gkt
