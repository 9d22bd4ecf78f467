#include "gkt/domain.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace gkt {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(const std::string &s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const std::string &path, const std::string &msg) {
  throw ConfigError(path + ": " + msg);
}

// Typed field access with a field path in every error.
template <typename T>
T get(const Json &j, const std::string &key, const std::string &path) {
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception &) {
    fail(path + "." + key, "missing or wrong type");
  }
}

template <typename T>
std::optional<T> get_opt(const Json &j, const std::string &key, const std::string &path) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return get<T>(j, key, path);
}

template <typename T>
void read_into(const Json &j, const std::string &key, const std::string &path, T &out) {
  if (j.contains(key) && !j.at(key).is_null()) out = get<T>(j, key, path);
}

void require_object(const Json &j, const std::string &path) {
  if (!j.is_object()) fail(path, "expected an object");
}

std::string to_string(BackendKind kind) { return kind == BackendKind::Mock ? "mock" : "remote"; }

BackendKind parse_backend_kind(const std::string &s, const std::string &path) {
  auto l = lower(s);
  if (l == "mock") return BackendKind::Mock;
  if (l == "remote") return BackendKind::Remote;
  fail(path, "unknown backend kind '" + s + "'");
}

std::string to_string(PricingMode mode) {
  return mode == PricingMode::TeacherTokens ? "teacher_tokens" : "utf8_bytes";
}

PricingMode parse_pricing(const std::string &s, const std::string &path) {
  if (s == "teacher_tokens") return PricingMode::TeacherTokens;
  if (s == "utf8_bytes") return PricingMode::Utf8Bytes;
  fail(path, "unknown pricing mode '" + s + "'");
}

std::string to_string(InstructionPlacement p) {
  return p == InstructionPlacement::AfterExemplars ? "after_exemplars" : "before_exemplars";
}

InstructionPlacement parse_placement(const std::string &s, const std::string &path) {
  if (s == "after_exemplars") return InstructionPlacement::AfterExemplars;
  if (s == "before_exemplars") return InstructionPlacement::BeforeExemplars;
  fail(path, "unknown instruction placement '" + s + "'");
}

}  // namespace

std::string canonical_instruction_prefix(ProjectionMode mode) {
  switch (mode) {
    case ProjectionMode::Cutoff:
      return "";
    case ProjectionMode::Concise:
      return kConcisePrefix;
    case ProjectionMode::Hint:
      return kHintPrefix;
  }
  return "";
}

std::string to_string(ProjectionMode mode) {
  switch (mode) {
    case ProjectionMode::Cutoff:
      return "cutoff";
    case ProjectionMode::Concise:
      return "concise";
    case ProjectionMode::Hint:
      return "hint";
  }
  return "cutoff";
}

ProjectionMode parse_projection_mode(const std::string &text) {
  auto l = lower(text);
  if (l == "cutoff" || l == "cut-off") return ProjectionMode::Cutoff;
  if (l == "concise") return ProjectionMode::Concise;
  if (l == "hint") return ProjectionMode::Hint;
  throw ConfigError("projection.mode: unknown mode '" + text + "'");
}

ProjectionSpec ProjectionSpec::make(ProjectionMode mode, int budget) {
  return ProjectionSpec{mode, budget, canonical_instruction_prefix(mode), InstructionPlacement::AfterExemplars};
}

std::string to_string(TaskKind task) { return task == TaskKind::Numeric ? "numeric" : "choice"; }

TaskKind parse_task_kind(const std::string &text) {
  auto l = lower(text);
  if (l == "numeric") return TaskKind::Numeric;
  if (l == "choice" || l == "multiple_choice") return TaskKind::MultipleChoice;
  throw ConfigError("task: unknown task '" + text + "'");
}

std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::Gkt:
      return "gkt";
    case RunMode::StudentOnly:
      return "student-only";
    case RunMode::TeacherOnly:
      return "teacher-only";
  }
  return "gkt";
}

RunMode parse_run_mode(const std::string &text) {
  if (text == "gkt") return RunMode::Gkt;
  if (text == "student-only") return RunMode::StudentOnly;
  if (text == "teacher-only") return RunMode::TeacherOnly;
  throw ConfigError("run_mode: unknown mode '" + text + "'");
}

std::optional<std::string> normalize_numeric(const std::string &text) {
  std::string s;
  for (char c : trim(text))
    if (c != ',') s.push_back(c);
  if (s.empty()) return std::nullopt;
  bool negative = false;
  std::size_t i = 0;
  if (s[0] == '+' || s[0] == '-') {
    negative = s[0] == '-';
    i = 1;
  }
  std::string int_part, frac_part;
  bool seen_dot = false;
  for (; i < s.size(); ++i) {
    char c = s[i];
    if (c == '.' && !seen_dot) {
      seen_dot = true;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      (seen_dot ? frac_part : int_part).push_back(c);
    } else {
      return std::nullopt;
    }
  }
  if (int_part.empty() && frac_part.empty()) return std::nullopt;
  int_part.erase(0, std::min(int_part.find_first_not_of('0'), int_part.size()));
  while (!frac_part.empty() && frac_part.back() == '0') frac_part.pop_back();
  if (int_part.empty()) int_part = "0";
  std::string out = int_part;
  if (!frac_part.empty()) out += "." + frac_part;
  if (negative && out != "0") out = "-" + out;
  return out;
}

std::optional<std::string> normalize_choice(const std::string &text) {
  std::string s = lower(trim(text));
  if (s.size() >= 3 && s.front() == '(' && s.back() == ')') s = s.substr(1, s.size() - 2);
  if (s.size() == 1 && s[0] >= 'a' && s[0] <= 'e') return s;
  return std::nullopt;
}

std::optional<std::string> normalize_answer(const std::string &text, TaskKind task) {
  return task == TaskKind::Numeric ? normalize_numeric(text) : normalize_choice(text);
}

int BackendConfig::resolved_vocabulary_size() const {
  if (vocabulary_size) return *vocabulary_size;
  if (lower(family) == "llama") return 32000;
  return 0;
}

int default_batch_size_for(const std::string &model_class) {
  auto l = lower(model_class);
  if (l.find("70b") != std::string::npos) return 10;
  if (l.find("13b") != std::string::npos) return 24;
  if (l.find("7b") != std::string::npos) return 32;
  return 24;
}

// ---------------------------------------------------------------------------
// Validation

std::vector<Violation> validate_settings(const GenerationSettings &s, const std::string &path) {
  std::vector<Violation> out;
  if (!(s.temperature >= 0.0)) out.push_back({path + ".temperature", "must be >= 0"});
  if (!(s.top_p > 0.0 && s.top_p <= 1.0)) out.push_back({path + ".top_p", "must be in (0, 1]"});
  if (s.max_new_tokens < 1) out.push_back({path + ".max_new_tokens", "must be >= 1"});
  return out;
}

namespace {

void validate_backend(const BackendConfig &b, const std::string &path, std::vector<Violation> &out) {
  if (b.name.empty()) out.push_back({path + ".name", "must be non-empty"});
  int vocab = b.resolved_vocabulary_size();
  if (!b.vocabulary_size && vocab == 0)
    out.push_back({path + ".vocabulary_size", "required unless family is llama"});
  else if (vocab < 2)
    out.push_back({path + ".vocabulary_size", "must be >= 2"});
  if (b.max_seq_len < 1) out.push_back({path + ".max_seq_len", "must be >= 1"});
  if (b.tokenizer.scheme == TokenizerScheme::External && b.tokenizer.command.empty())
    out.push_back({path + ".tokenizer.command", "required for external tokenizer"});
  if (b.kind == BackendKind::Mock) {
    if (!b.seed) out.push_back({path + ".seed", "mock backends require a seed"});
    if (b.latency_per_token_s < 0) out.push_back({path + ".latency_per_token_s", "must be >= 0"});
    if (b.batch_overhead_s < 0) out.push_back({path + ".batch_overhead_s", "must be >= 0"});
  } else {
    if (b.endpoint.empty()) out.push_back({path + ".endpoint", "remote backends require an endpoint"});
    if (b.model_id.empty()) out.push_back({path + ".model_id", "remote backends require a model_id"});
    if (b.timeout_s <= 0) out.push_back({path + ".timeout_s", "must be > 0"});
    if (b.max_in_flight < 1) out.push_back({path + ".max_in_flight", "must be >= 1"});
    if (b.max_attempts < 1) out.push_back({path + ".max_attempts", "must be >= 1"});
  }
}

}  // namespace

std::vector<Violation> validate_config(const ExperimentConfig &c) {
  std::vector<Violation> out;
  validate_backend(c.teacher_backend, "teacher", out);
  validate_backend(c.student_backend, "student", out);
  if (c.projection.guidance_token_budget < 1)
    out.push_back({"projection.guidance_token_budget", "must be >= 1"});
  if (c.teacher_batch_size < 1) out.push_back({"teacher_batch_size", "must be >= 1"});
  if (c.edge_parallelism < 1) out.push_back({"edge_parallelism", "must be >= 1"});
  if (c.teacher_settings) {
    auto v = validate_settings(*c.teacher_settings, "teacher_settings");
    out.insert(out.end(), v.begin(), v.end());
  }
  auto v = validate_settings(c.student_settings_default, "student_settings");
  out.insert(out.end(), v.begin(), v.end());
  if (c.dataset_path.empty()) out.push_back({"dataset_path", "must be non-empty"});
  if (c.report_path.empty()) out.push_back({"report_path", "must be non-empty"});
  if (c.link) {
    if (!(c.link->bandwidth_bits_per_s > 0)) out.push_back({"link.bandwidth_bits_per_s", "must be > 0"});
    if (c.link->vocabulary_size && *c.link->vocabulary_size < 2)
      out.push_back({"link.vocabulary_size", "must be >= 2"});
    if (c.link->overhead_bits < 0) out.push_back({"link.overhead_bits", "must be >= 0"});
  }
  if (c.linger_ms < 0) out.push_back({"linger_ms", "must be >= 0"});
  if (c.baselines.student_only_accuracy &&
      !(*c.baselines.student_only_accuracy >= 0 && *c.baselines.student_only_accuracy <= 1))
    out.push_back({"baselines.student_only_accuracy", "must be a fraction in [0, 1]"});
  if (c.baselines.reference_time_s && !(*c.baselines.reference_time_s > 0))
    out.push_back({"baselines.reference_time_s", "must be > 0"});
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

Json to_json(const GenerationSettings &s) {
  Json j = {{"temperature", s.temperature}, {"top_p", s.top_p}, {"max_new_tokens", s.max_new_tokens}};
  j["seed"] = s.seed ? Json(*s.seed) : Json(nullptr);
  return j;
}

GenerationSettings settings_from_json(const Json &j, const std::string &path) {
  require_object(j, path);
  GenerationSettings s;
  read_into(j, "temperature", path, s.temperature);
  read_into(j, "top_p", path, s.top_p);
  read_into(j, "max_new_tokens", path, s.max_new_tokens);
  s.seed = get_opt<std::uint64_t>(j, "seed", path);
  return s;
}

Json to_json(const BackendConfig &b) {
  Json j;
  j["name"] = b.name;
  j["kind"] = to_string(b.kind);
  j["family"] = b.family;
  j["vocabulary_size"] = b.vocabulary_size ? Json(*b.vocabulary_size) : Json(nullptr);
  j["tokenizer"] = {{"scheme", b.tokenizer.scheme == TokenizerScheme::Reference ? "reference" : "external"},
                    {"command", b.tokenizer.command}};
  j["max_seq_len"] = b.max_seq_len;
  j["seed"] = b.seed ? Json(*b.seed) : Json(nullptr);
  j["latency_per_token_s"] = b.latency_per_token_s;
  j["batch_overhead_s"] = b.batch_overhead_s;
  Json scripted = Json::array();
  for (const auto &e : b.scripted) scripted.push_back({{"match", e.match}, {"continuation", e.continuation}});
  j["scripted"] = scripted;
  j["endpoint"] = b.endpoint;
  j["model_id"] = b.model_id;
  j["auth_token_env"] = b.auth_token_env;
  j["auth_token"] = b.auth_token ? Json(*b.auth_token) : Json(nullptr);
  j["timeout_s"] = b.timeout_s;
  j["max_in_flight"] = b.max_in_flight;
  j["max_attempts"] = b.max_attempts;
  j["backoff_initial_s"] = b.backoff_initial_s;
  return j;
}

BackendConfig backend_from_json(const Json &j, const std::string &path) {
  require_object(j, path);
  BackendConfig b;
  read_into(j, "name", path, b.name);
  if (auto k = get_opt<std::string>(j, "kind", path)) b.kind = parse_backend_kind(*k, path + ".kind");
  read_into(j, "family", path, b.family);
  b.vocabulary_size = get_opt<int>(j, "vocabulary_size", path);
  if (j.contains("tokenizer") && !j.at("tokenizer").is_null()) {
    const auto &t = j.at("tokenizer");
    require_object(t, path + ".tokenizer");
    auto scheme = get_opt<std::string>(t, "scheme", path + ".tokenizer").value_or("reference");
    if (scheme == "reference")
      b.tokenizer.scheme = TokenizerScheme::Reference;
    else if (scheme == "external")
      b.tokenizer.scheme = TokenizerScheme::External;
    else
      fail(path + ".tokenizer.scheme", "unknown scheme '" + scheme + "'");
    read_into(t, "command", path + ".tokenizer", b.tokenizer.command);
  }
  read_into(j, "max_seq_len", path, b.max_seq_len);
  b.seed = get_opt<std::uint64_t>(j, "seed", path);
  read_into(j, "latency_per_token_s", path, b.latency_per_token_s);
  read_into(j, "batch_overhead_s", path, b.batch_overhead_s);
  if (j.contains("scripted") && !j.at("scripted").is_null()) {
    if (!j.at("scripted").is_array()) fail(path + ".scripted", "expected an array");
    for (std::size_t i = 0; i < j.at("scripted").size(); ++i) {
      const auto &e = j.at("scripted")[i];
      auto p = path + ".scripted[" + std::to_string(i) + "]";
      require_object(e, p);
      b.scripted.push_back({get<std::string>(e, "match", p), get<std::string>(e, "continuation", p)});
    }
  }
  read_into(j, "endpoint", path, b.endpoint);
  read_into(j, "model_id", path, b.model_id);
  read_into(j, "auth_token_env", path, b.auth_token_env);
  b.auth_token = get_opt<std::string>(j, "auth_token", path);
  read_into(j, "timeout_s", path, b.timeout_s);
  read_into(j, "max_in_flight", path, b.max_in_flight);
  read_into(j, "max_attempts", path, b.max_attempts);
  read_into(j, "backoff_initial_s", path, b.backoff_initial_s);
  return b;
}

Json to_json(const ExperimentConfig &c) {
  Json j;
  j["schema_version"] = 1;
  j["task"] = to_string(c.task);
  j["teacher"] = to_json(c.teacher_backend);
  j["student"] = to_json(c.student_backend);
  j["projection"] = {{"mode", to_string(c.projection.mode)},
                     {"guidance_token_budget", c.projection.guidance_token_budget},
                     {"instruction_prefix", c.projection.instruction_prefix},
                     {"instruction_placement", to_string(c.projection.placement)}};
  j["teacher_batch_size"] = c.teacher_batch_size;
  j["teacher_settings"] = c.teacher_settings ? to_json(*c.teacher_settings) : Json(nullptr);
  j["student_settings"] = to_json(c.student_settings_default);
  j["few_shot_prompt"] = c.few_shot_prompt;
  j["few_shot_path"] = c.few_shot_path ? Json(*c.few_shot_path) : Json(nullptr);
  j["dataset_path"] = c.dataset_path;
  if (c.link) {
    j["link"] = {{"bandwidth_bits_per_s", c.link->bandwidth_bits_per_s},
                 {"vocabulary_size", c.link->vocabulary_size ? Json(*c.link->vocabulary_size) : Json(nullptr)},
                 {"pricing", to_string(c.link->pricing)},
                 {"overhead_bits", c.link->overhead_bits}};
  } else {
    j["link"] = nullptr;
  }
  j["report_path"] = c.report_path;
  j["run_mode"] = to_string(c.run_mode);
  j["edge_parallelism"] = c.edge_parallelism;
  j["student_sees_instruction"] = c.student_sees_instruction;
  const auto &bl = c.baselines;
  j["baselines"] = {
      {"student_only_report", bl.student_only_report ? Json(*bl.student_only_report) : Json(nullptr)},
      {"reference_report", bl.reference_report ? Json(*bl.reference_report) : Json(nullptr)},
      {"student_only_accuracy", bl.student_only_accuracy ? Json(*bl.student_only_accuracy) : Json(nullptr)},
      {"reference_time_s", bl.reference_time_s ? Json(*bl.reference_time_s) : Json(nullptr)},
      {"student_only_name", bl.student_only_name},
      {"reference_name", bl.reference_name}};
  j["linger_ms"] = c.linger_ms;
  return j;
}

ExperimentConfig config_from_json(const Json &j) {
  require_object(j, "config");
  const std::string root = "config";
  if (auto v = get_opt<int>(j, "schema_version", root); v && *v != 1)
    fail("schema_version", "unsupported version " + std::to_string(*v));
  ExperimentConfig c;
  if (auto t = get_opt<std::string>(j, "task", root)) c.task = parse_task_kind(*t);
  if (!j.contains("teacher")) fail("teacher", "missing");
  if (!j.contains("student")) fail("student", "missing");
  c.teacher_backend = backend_from_json(j.at("teacher"), "teacher");
  c.student_backend = backend_from_json(j.at("student"), "student");
  if (j.contains("projection") && !j.at("projection").is_null()) {
    const auto &p = j.at("projection");
    require_object(p, "projection");
    auto mode = parse_projection_mode(get_opt<std::string>(p, "mode", "projection").value_or("cutoff"));
    c.projection = ProjectionSpec::make(mode, c.projection.guidance_token_budget);
    read_into(p, "guidance_token_budget", "projection", c.projection.guidance_token_budget);
    read_into(p, "instruction_prefix", "projection", c.projection.instruction_prefix);
    if (auto pl = get_opt<std::string>(p, "instruction_placement", "projection"))
      c.projection.placement = parse_placement(*pl, "projection.instruction_placement");
  }
  read_into(j, "teacher_batch_size", root, c.teacher_batch_size);
  if (j.contains("teacher_settings") && !j.at("teacher_settings").is_null())
    c.teacher_settings = settings_from_json(j.at("teacher_settings"), "teacher_settings");
  if (j.contains("student_settings") && !j.at("student_settings").is_null())
    c.student_settings_default = settings_from_json(j.at("student_settings"), "student_settings");
  read_into(j, "few_shot_prompt", root, c.few_shot_prompt);
  c.few_shot_path = get_opt<std::string>(j, "few_shot_path", root);
  read_into(j, "dataset_path", root, c.dataset_path);
  if (j.contains("link") && !j.at("link").is_null()) {
    const auto &l = j.at("link");
    require_object(l, "link");
    LinkConfig link;
    read_into(l, "bandwidth_bits_per_s", "link", link.bandwidth_bits_per_s);
    link.vocabulary_size = get_opt<int>(l, "vocabulary_size", "link");
    if (auto p = get_opt<std::string>(l, "pricing", "link")) link.pricing = parse_pricing(*p, "link.pricing");
    read_into(l, "overhead_bits", "link", link.overhead_bits);
    c.link = link;
  }
  read_into(j, "report_path", root, c.report_path);
  if (auto m = get_opt<std::string>(j, "run_mode", root)) c.run_mode = parse_run_mode(*m);
  read_into(j, "edge_parallelism", root, c.edge_parallelism);
  read_into(j, "student_sees_instruction", root, c.student_sees_instruction);
  if (j.contains("baselines") && !j.at("baselines").is_null()) {
    const auto &b = j.at("baselines");
    require_object(b, "baselines");
    c.baselines.student_only_report = get_opt<std::string>(b, "student_only_report", "baselines");
    c.baselines.reference_report = get_opt<std::string>(b, "reference_report", "baselines");
    c.baselines.student_only_accuracy = get_opt<double>(b, "student_only_accuracy", "baselines");
    c.baselines.reference_time_s = get_opt<double>(b, "reference_time_s", "baselines");
    read_into(b, "student_only_name", "baselines", c.baselines.student_only_name);
    read_into(b, "reference_name", "baselines", c.baselines.reference_name);
  }
  read_into(j, "linger_ms", root, c.linger_ms);
  return c;
}

std::string read_text_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig load_config(const std::string &path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::runtime_error &e) {
    throw ConfigError(e.what());
  }
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error &e) {
    throw ConfigError(path + ": " + e.what());
  }
  auto c = config_from_json(j);
  // Relative paths in a config file are relative to that file.
  namespace fs = std::filesystem;
  auto base = fs::path(path).parent_path();
  auto resolve = [&](std::string &p) {
    if (!p.empty() && fs::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  resolve(c.dataset_path);
  resolve(c.report_path);
  if (c.few_shot_path) resolve(*c.few_shot_path);
  if (c.baselines.student_only_report) resolve(*c.baselines.student_only_report);
  if (c.baselines.reference_report) resolve(*c.baselines.reference_report);
  return c;
}

Json to_json(const GuidancePrompt &g) {
  return {{"request_id", g.request_id},
          {"text", g.text},
          {"teacher_token_count", g.teacher_token_count},
          {"generation_time", g.generation_time},
          {"batch_index", g.batch_index}};
}

GuidancePrompt guidance_from_json(const Json &j) {
  const std::string p = "guidance";
  return GuidancePrompt{get<std::string>(j, "request_id", p), get<std::string>(j, "text", p),
                        get<int>(j, "teacher_token_count", p), get<double>(j, "generation_time", p),
                        get<int>(j, "batch_index", p)};
}

Json to_json(const CompletionResult &r) {
  Json j;
  j["request_id"] = r.request_id;
  j["guidance"] = to_json(r.guidance);
  j["full_response"] = r.full_response;
  j["student_token_count"] = r.student_token_count;
  j["response_token_count"] = r.response_token_count;
  j["student_time"] = r.student_time;
  j["extracted_answer"] = r.extracted_answer ? Json(*r.extracted_answer) : Json(nullptr);
  j["settings_used"] = to_json(r.settings_used);
  j["error"] = r.error ? Json(*r.error) : Json(nullptr);
  return j;
}

CompletionResult completion_from_json(const Json &j) {
  const std::string p = "result";
  require_object(j, p);
  CompletionResult r;
  r.request_id = get<std::string>(j, "request_id", p);
  r.guidance = guidance_from_json(j.at("guidance"));
  r.full_response = get<std::string>(j, "full_response", p);
  r.student_token_count = get<int>(j, "student_token_count", p);
  read_into(j, "response_token_count", p, r.response_token_count);
  r.student_time = get<double>(j, "student_time", p);
  r.extracted_answer = get_opt<std::string>(j, "extracted_answer", p);
  if (j.contains("settings_used")) r.settings_used = settings_from_json(j.at("settings_used"), "settings_used");
  r.error = get_opt<std::string>(j, "error", p);
  return r;
}

std::vector<CompletionResult> load_results(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open results file " + path);
  std::vector<CompletionResult> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(completion_from_json(Json::parse(line)));
    } catch (const std::exception &e) {
      throw DatasetError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

DatasetRecord parse_dataset_line(const std::string &line, TaskKind task) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::parse_error &e) {
    throw DatasetError(std::string("malformed record: ") + e.what());
  }
  if (!j.is_object()) throw DatasetError("record is not an object");
  DatasetRecord r;
  auto field = [&](const char *key) -> std::string {
    if (!j.contains(key)) throw DatasetError(std::string("missing field '") + key + "'");
    const auto &v = j.at(key);
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number()) return v.dump();
    throw DatasetError(std::string("field '") + key + "' must be a string");
  };
  r.id = field("id");
  r.question = field("question");
  std::string answer = field("answer");
  if (auto pos = answer.rfind("####"); pos != std::string::npos) {
    auto rationale = trim(answer.substr(0, pos));
    if (!rationale.empty()) r.gold_rationale = rationale;
    answer = answer.substr(pos + 4);
  }
  if (j.contains("rationale") && j.at("rationale").is_string()) r.gold_rationale = j.at("rationale").get<std::string>();
  auto canonical = normalize_answer(answer, task);
  if (!canonical)
    throw DatasetError("record " + r.id + ": answer '" + trim(answer) + "' is not a valid " + to_string(task) +
                       " answer");
  r.gold_answer = *canonical;
  if (r.id.empty()) throw DatasetError("record with empty id");
  if (trim(r.question).empty()) throw DatasetError("record " + r.id + ": empty question");
  if (j.contains("settings") && !j.at("settings").is_null()) {
    try {
      r.settings = settings_from_json(j.at("settings"), "settings");
    } catch (const ConfigError &e) {
      throw DatasetError("record " + r.id + ": " + e.what());
    }
  }
  return r;
}

std::vector<DatasetRecord> load_dataset(const std::string &path, TaskKind task) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset " + path);
  std::vector<DatasetRecord> out;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(parse_dataset_line(line, task));
    } catch (const DatasetError &e) {
      throw DatasetError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!seen.insert(out.back().id).second)
      throw DatasetError(path + ":" + std::to_string(lineno) + ": duplicate id '" + out.back().id + "'");
  }
  return out;
}

}  // namespace gkt
