#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace gkt {

using Json = nlohmann::json;
using RequestId = std::string;

/// Per-user sampling settings. Defaults follow the reference hyperparameters
/// (temperature 0.8, top_p 0.9, sequence length 1024).
struct GenerationSettings {
  double temperature = 0.8;
  double top_p = 0.9;
  int max_new_tokens = 1024;
  std::optional<std::uint64_t> seed;

  bool operator==(const GenerationSettings &) const = default;
};

struct UserRequest {
  RequestId request_id;
  std::string question;
  GenerationSettings settings;
  // Seconds on the orchestrator's injected monotonic clock.
  double arrival_time = 0.0;
};

enum class ProjectionMode { Cutoff, Concise, Hint };

enum class InstructionPlacement { AfterExemplars, BeforeExemplars };

inline constexpr const char *kConcisePrefix = "Provide the answer in a brief manner: ";
inline constexpr const char *kHintPrefix = "Provide a brief hint for the question: ";

std::string canonical_instruction_prefix(ProjectionMode mode);
std::string to_string(ProjectionMode mode);
ProjectionMode parse_projection_mode(const std::string &text);

struct ProjectionSpec {
  ProjectionMode mode = ProjectionMode::Cutoff;
  int guidance_token_budget = 40;
  std::string instruction_prefix;
  InstructionPlacement placement = InstructionPlacement::AfterExemplars;

  static ProjectionSpec make(ProjectionMode mode, int budget);

  bool operator==(const ProjectionSpec &) const = default;
};

struct GuidancePrompt {
  RequestId request_id;
  std::string text;
  int teacher_token_count = 0;
  double generation_time = 0.0;
  int batch_index = 0;
};

struct CompletionResult {
  RequestId request_id;
  GuidancePrompt guidance;
  std::string full_response;
  int student_token_count = 0;
  // Student-tokenizer count of full_response (guidance + continuation).
  int response_token_count = 0;
  double student_time = 0.0;
  std::optional<std::string> extracted_answer;
  GenerationSettings settings_used;
  // Set when the job failed; the other fields are then best-effort.
  std::optional<std::string> error;

  bool ok() const { return !error.has_value(); }
};

enum class TaskKind { Numeric, MultipleChoice };

std::string to_string(TaskKind task);
TaskKind parse_task_kind(const std::string &text);

/// Canonical exact-decimal form: commas and a leading '+' dropped, leading
/// zeros and trailing fractional zeros stripped, "-0" folded to "0".
std::optional<std::string> normalize_numeric(const std::string &text);
/// Lower-case single letter a-e, or nullopt.
std::optional<std::string> normalize_choice(const std::string &text);
std::optional<std::string> normalize_answer(const std::string &text, TaskKind task);

struct DatasetRecord {
  std::string id;
  std::string question;
  // Exact decimal string for numeric tasks, a single letter a-e for choice tasks.
  std::string gold_answer;
  std::optional<std::string> gold_rationale;
  std::optional<GenerationSettings> settings;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Backend descriptors (configuration side of lm-backend).

enum class BackendKind { Mock, Remote };
enum class TokenizerScheme { Reference, External };

struct TokenizerConfig {
  TokenizerScheme scheme = TokenizerScheme::Reference;
  // External scheme: shell command reading text on stdin, printing a count.
  std::string command;

  bool operator==(const TokenizerConfig &) const = default;
};

struct ScriptedEntry {
  std::string match;
  std::string continuation;

  bool operator==(const ScriptedEntry &) const = default;
};

struct BackendConfig {
  std::string name = "mock";
  BackendKind kind = BackendKind::Mock;
  std::string family;  // "llama" implies a 32000-token vocabulary
  std::optional<int> vocabulary_size;
  TokenizerConfig tokenizer;
  int max_seq_len = 1024;

  // Mock
  std::optional<std::uint64_t> seed;
  double latency_per_token_s = 0.0;
  double batch_overhead_s = 0.0;
  std::vector<ScriptedEntry> scripted;

  // Remote
  std::string endpoint;
  std::string model_id;
  std::string auth_token_env = "GKT_API_TOKEN";
  std::optional<std::string> auth_token;
  double timeout_s = 30.0;
  int max_in_flight = 4;
  int max_attempts = 3;
  double backoff_initial_s = 0.5;

  bool operator==(const BackendConfig &) const = default;

  int resolved_vocabulary_size() const;
};

enum class PricingMode { TeacherTokens, Utf8Bytes };

struct LinkConfig {
  double bandwidth_bits_per_s = 5000.0;
  std::optional<int> vocabulary_size;  // defaults to the teacher's
  PricingMode pricing = PricingMode::TeacherTokens;
  double overhead_bits = 0.0;

  bool operator==(const LinkConfig &) const = default;
};

enum class RunMode { Gkt, StudentOnly, TeacherOnly };

std::string to_string(RunMode mode);
RunMode parse_run_mode(const std::string &text);

struct BaselineRefs {
  std::optional<std::string> student_only_report;
  std::optional<std::string> reference_report;
  std::optional<double> student_only_accuracy;  // fraction in [0,1]
  std::optional<double> reference_time_s;
  std::string student_only_name = "student-only";
  std::string reference_name = "teacher-only";

  bool operator==(const BaselineRefs &) const = default;
};

struct ExperimentConfig {
  TaskKind task = TaskKind::Numeric;
  BackendConfig teacher_backend;
  BackendConfig student_backend;
  ProjectionSpec projection;
  int teacher_batch_size = 24;
  std::optional<GenerationSettings> teacher_settings;
  GenerationSettings student_settings_default{0.8, 0.9, 300, std::nullopt};
  std::string few_shot_prompt;
  std::optional<std::string> few_shot_path;
  std::string dataset_path;
  std::optional<LinkConfig> link;
  std::string report_path = "report.json";
  RunMode run_mode = RunMode::Gkt;
  int edge_parallelism = 24;
  bool student_sees_instruction = false;
  BaselineRefs baselines;
  double linger_ms = 50.0;

  bool operator==(const ExperimentConfig &) const = default;
};

/// Teacher batch size recommended for a model-size class.
int default_batch_size_for(const std::string &model_class);

struct Violation {
  std::string path;
  std::string message;
};

std::vector<Violation> validate_settings(const GenerationSettings &settings, const std::string &path);
std::vector<Violation> validate_config(const ExperimentConfig &config);

// Serialization. Parsing throws ConfigError with a field path.
Json to_json(const GenerationSettings &settings);
GenerationSettings settings_from_json(const Json &j, const std::string &path = "settings");
Json to_json(const BackendConfig &backend);
BackendConfig backend_from_json(const Json &j, const std::string &path);
Json to_json(const ExperimentConfig &config);
ExperimentConfig config_from_json(const Json &j);
ExperimentConfig load_config(const std::string &path);

Json to_json(const GuidancePrompt &guidance);
GuidancePrompt guidance_from_json(const Json &j);
Json to_json(const CompletionResult &result);
CompletionResult completion_from_json(const Json &j);

std::vector<CompletionResult> load_results(const std::string &path);

/// Parses one JSONL line. A GSM8K-style answer ("rationale #### 72") is split
/// into rationale and canonical answer.
DatasetRecord parse_dataset_line(const std::string &line, TaskKind task);
std::vector<DatasetRecord> load_dataset(const std::string &path, TaskKind task);

std::string read_text_file(const std::string &path);

}  // namespace gkt
