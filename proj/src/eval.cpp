#include "gkt/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

namespace gkt {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
char to_lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

struct NumberSpan {
  std::size_t begin;
  std::size_t end;
  std::string text;
};

// Parses a number starting exactly at `pos` (optional sign, digits with
// commas, optional fraction). A trailing '.' is sentence punctuation.
std::optional<NumberSpan> number_at(std::string_view s, std::size_t pos) {
  std::size_t i = pos;
  std::string out;
  if (i < s.size() && (s[i] == '-' || s[i] == '+')) {
    out.push_back(s[i]);
    ++i;
  }
  if (i < s.size() && s[i] == '$') ++i;
  if (i >= s.size() || !is_digit(s[i])) return std::nullopt;
  while (i < s.size()) {
    if (is_digit(s[i])) {
      out.push_back(s[i++]);
    } else if (s[i] == ',' && i + 1 < s.size() && is_digit(s[i + 1])) {
      ++i;
    } else {
      break;
    }
  }
  if (i + 1 < s.size() && s[i] == '.' && is_digit(s[i + 1])) {
    out.push_back('.');
    ++i;
    while (i < s.size() && is_digit(s[i])) out.push_back(s[i++]);
  }
  if (i < s.size() && is_alpha(s[i])) return std::nullopt;  // "3rd", "5x"
  return NumberSpan{pos, i, out};
}

std::vector<std::size_t> find_all_ci(std::string_view hay, std::string_view needle) {
  std::vector<std::size_t> out;
  if (needle.empty() || hay.size() < needle.size()) return out;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    bool match = true;
    for (std::size_t k = 0; k < needle.size(); ++k) {
      if (to_lower(hay[i + k]) != needle[k]) {
        match = false;
        break;
      }
    }
    if (match) out.push_back(i);
  }
  return out;
}

std::optional<std::string> extract_numeric(std::string_view text, bool allow_fallback) {
  std::optional<std::string> phrase_answer;
  for (std::size_t at : find_all_ci(text, "the answer is")) {
    std::size_t i = at + 13;
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == ':' || text[i] == '*')) ++i;
    if (auto n = number_at(text, i))
      if (auto canon = normalize_numeric(n->text)) phrase_answer = canon;
  }
  if (phrase_answer || !allow_fallback) return phrase_answer;

  std::optional<std::string> last;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    const bool sign_start = (c == '-' || c == '+') && i + 1 < text.size() &&
                            (is_digit(text[i + 1]) || text[i + 1] == '$') && (i == 0 || !is_alnum(text[i - 1]));
    const bool digit_start = (is_digit(c) || c == '$') && (i == 0 || (!is_alnum(text[i - 1]) && text[i - 1] != '.'));
    if (sign_start || digit_start) {
      if (auto n = number_at(text, i)) {
        if (auto canon = normalize_numeric(n->text)) last = canon;
        i = n->end;
        continue;
      }
    }
    ++i;
  }
  return last;
}

// "(b)" or a bare "b" not followed by a letter, starting at pos.
std::optional<std::string> choice_at(std::string_view s, std::size_t pos) {
  if (pos < s.size() && s[pos] == '(') {
    if (pos + 2 < s.size() && s[pos + 2] == ')') {
      char c = to_lower(s[pos + 1]);
      if (c >= 'a' && c <= 'e') return std::string(1, c);
    }
    return std::nullopt;
  }
  if (pos < s.size()) {
    char c = to_lower(s[pos]);
    if (c >= 'a' && c <= 'e' && (pos + 1 >= s.size() || !is_alpha(s[pos + 1]))) return std::string(1, c);
  }
  return std::nullopt;
}

std::optional<std::string> extract_choice(std::string_view text) {
  std::optional<std::string> best;
  std::size_t best_pos = 0;
  auto consider = [&](std::size_t pos, std::string value) {
    if (!best || pos >= best_pos) {
      best = std::move(value);
      best_pos = pos;
    }
  };
  for (std::size_t at : find_all_ci(text, "answer")) {
    if (at > 0 && is_alpha(text[at - 1])) continue;
    std::size_t i = at + 6;
    if (i < text.size() && is_alpha(text[i])) continue;  // "answered", "answers"
    while (i < text.size() && (text[i] == ' ' || text[i] == ':' || text[i] == '*')) ++i;
    bool saw_is = false;
    if (i + 1 < text.size() && to_lower(text[i]) == 'i' && to_lower(text[i + 1]) == 's' &&
        (i + 2 >= text.size() || !is_alpha(text[i + 2]))) {
      i += 2;
      saw_is = true;
      while (i < text.size() && (text[i] == ' ' || text[i] == ':' || text[i] == '*')) ++i;
    }
    // A bare letter only counts after "answer is"/"answer:"; "(x)" always does.
    if (i < text.size() && text[i] == '(') {
      if (auto c = choice_at(text, i)) consider(i, *c);
    } else if (saw_is || (i > at + 6 && text[at + 6] == ':')) {
      if (auto c = choice_at(text, i)) consider(i, *c);
    }
  }
  // "(b) is the answer"
  for (std::size_t at : find_all_ci(text, "is the answer")) {
    if (at < 4) continue;
    std::size_t j = at;
    while (j > 0 && text[j - 1] == ' ') --j;
    if (j >= 3 && text[j - 1] == ')' && text[j - 3] == '(')
      if (auto c = choice_at(text, j - 3)) consider(at, *c);
  }
  return best;
}

}  // namespace

std::optional<std::string> extract_answer(std::string_view text, TaskKind task) {
  return task == TaskKind::Numeric ? extract_numeric(text, true) : extract_choice(text);
}

std::optional<std::string> extract_terminal_answer(std::string_view text, TaskKind task) {
  return task == TaskKind::Numeric ? extract_numeric(text, false) : extract_choice(text);
}

bool answers_equal(const std::string &a, const std::string &b, TaskKind task) {
  auto na = normalize_answer(a, task);
  auto nb = normalize_answer(b, task);
  return na && nb && *na == *nb;
}

// ---------------------------------------------------------------------------

namespace {

ExampleGrade grade_one(const CompletionResult &result, const DatasetRecord &gold, TaskKind task) {
  ExampleGrade g;
  g.teacher_answer = extract_terminal_answer(result.guidance.text, task);
  g.teacher_correct = g.teacher_answer && answers_equal(*g.teacher_answer, gold.gold_answer, task);
  if (result.ok()) {
    g.answer = extract_answer(result.full_response, task);
    g.correct = g.answer && answers_equal(*g.answer, gold.gold_answer, task);
  }
  return g;
}

void check_aligned(std::span<const CompletionResult> results, std::span<const DatasetRecord> gold) {
  if (results.size() != gold.size()) throw JoinError("results and gold differ in length");
}

}  // namespace

std::vector<ExampleGrade> grade_examples_serial(std::span<const CompletionResult> results,
                                                std::span<const DatasetRecord> gold, TaskKind task) {
  check_aligned(results, gold);
  std::vector<ExampleGrade> out(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) out[i] = grade_one(results[i], gold[i], task);
  return out;
}

std::vector<ExampleGrade> grade_examples_parallel(std::span<const CompletionResult> results,
                                                  std::span<const DatasetRecord> gold, TaskKind task) {
  check_aligned(results, gold);
  std::vector<ExampleGrade> out(results.size());
  const auto n = static_cast<std::ptrdiff_t>(results.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = grade_one(results[i], gold[i], task);
  return out;
}

std::vector<DatasetRecord> join_gold(std::span<const CompletionResult> results, std::span<const DatasetRecord> gold) {
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < gold.size(); ++i)
    if (!by_id.emplace(gold[i].id, i).second) throw JoinError("duplicate gold id '" + gold[i].id + "'");
  std::unordered_set<std::string> seen;
  std::vector<DatasetRecord> aligned;
  aligned.reserve(results.size());
  for (const auto &r : results) {
    if (!seen.insert(r.request_id).second) throw JoinError("duplicate result id '" + r.request_id + "'");
    auto it = by_id.find(r.request_id);
    if (it == by_id.end()) throw JoinError("result id '" + r.request_id + "' has no gold record");
    aligned.push_back(gold[it->second]);
  }
  if (aligned.size() != gold.size()) {
    for (const auto &g : gold)
      if (!seen.count(g.id)) throw JoinError("gold id '" + g.id + "' has no result");
  }
  return aligned;
}

void apply_baselines(RunMetrics &m, const Baselines &baselines) {
  if (baselines.student_only) {
    m.delta_acc_points = 100.0 * (m.accuracy - baselines.student_only->accuracy);
    m.delta_baseline = baselines.student_only->name;
  }
  if (baselines.reference && m.total_time_s.total > 0) {
    m.speed_up = baselines.reference->total_time_s / m.total_time_s.total;
    m.speed_up_reference = baselines.reference->name;
  }
}

RunMetrics score_run(std::span<const CompletionResult> results, std::span<const DatasetRecord> gold, TaskKind task,
                     const Baselines &baselines) {
  auto aligned = join_gold(results, gold);
  auto grades = grade_examples_parallel(results, aligned, task);
  RunMetrics m;
  m.n_examples = results.size();
  for (std::size_t i = 0; i < results.size(); ++i) {
    m.n_correct += grades[i].correct ? 1 : 0;
    m.n_teacher_correct += grades[i].teacher_correct ? 1 : 0;
    m.n_failed += results[i].ok() ? 0 : 1;
    m.total_time_s.teacher += results[i].guidance.generation_time;
    m.total_time_s.student += results[i].student_time;
  }
  m.total_time_s.total = m.total_time_s.teacher + m.total_time_s.student;
  if (m.n_examples > 0) {
    m.accuracy = static_cast<double>(m.n_correct) / static_cast<double>(m.n_examples);
    m.acc_teacher = static_cast<double>(m.n_teacher_correct) / static_cast<double>(m.n_examples);
  }
  apply_baselines(m, baselines);
  return m;
}

// ---------------------------------------------------------------------------

ThroughputModel throughput(double teacher_total_s, double student_total_s, long long n_examples, int batch_size) {
  if (n_examples < 1) throw DomainError("n_examples must be >= 1");
  if (batch_size < 1) throw DomainError("batch_size must be >= 1");
  if (!(teacher_total_s >= 0) || !(student_total_s >= 0) || teacher_total_s + student_total_s <= 0)
    throw DomainError("stage totals must be >= 0 with a positive sum");
  ThroughputModel t;
  const auto n = static_cast<double>(n_examples);
  t.per_example_teacher_s = teacher_total_s / n;
  t.per_example_student_s = student_total_s / n;
  t.per_example_total_s = t.per_example_teacher_s + t.per_example_student_s;
  t.batch_size = batch_size;
  t.users_served_per_window = batch_size;
  return t;
}

std::string to_string(CostMode mode) {
  switch (mode) {
    case CostMode::TeacherOutputTokens:
      return "teacher_output_tokens";
    case CostMode::AllTokens:
      return "all_tokens";
    case CostMode::DualRate:
      return "dual_rate";
  }
  return "teacher_output_tokens";
}

CostPerformance cost_performance(double acc_framework, double acc_teacher_full, double guidance_tokens,
                                 double full_output_tokens, const CostPricing &pricing) {
  if (!(acc_teacher_full > 0)) throw DomainError("teacher accuracy must be > 0");
  if (!(full_output_tokens > 0)) throw DomainError("full output length must be > 0");
  if (guidance_tokens < 0 || acc_framework < 0) throw DomainError("inputs must be >= 0");
  CostPerformance c;
  c.mode = pricing.mode;
  c.performance_ratio = acc_framework / acc_teacher_full;
  switch (pricing.mode) {
    case CostMode::TeacherOutputTokens:
      c.cost_ratio = guidance_tokens / full_output_tokens;
      break;
    case CostMode::AllTokens:
      c.cost_ratio = (pricing.input_tokens + guidance_tokens) / (pricing.input_tokens + full_output_tokens);
      break;
    case CostMode::DualRate: {
      const double in = pricing.input_rate * pricing.input_tokens;
      const double denom = in + pricing.output_rate * full_output_tokens;
      if (!(denom > 0)) throw DomainError("dual-rate cost denominator must be > 0");
      c.cost_ratio = (in + pricing.output_rate * guidance_tokens) / denom;
      break;
    }
  }
  return c;
}

// ---------------------------------------------------------------------------

std::vector<std::string> rouge_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isspace(u)) {
      flush();
    } else if (u < 0x80 && std::ispunct(u)) {
      continue;
    } else {
      cur.push_back(to_lower(c));
    }
  }
  flush();
  return out;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(std::string_view candidate, std::string_view reference) {
  auto c = rouge_tokens(candidate);
  auto r = rouge_tokens(reference);
  if (c.empty() || r.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(c, r));
  if (lcs == 0) return 0.0;
  const double precision = lcs / static_cast<double>(c.size());
  const double recall = lcs / static_cast<double>(r.size());
  return 2.0 * precision * recall / (precision + recall);
}

std::vector<double> rouge_l_batch_serial(std::span<const std::string> candidates,
                                         std::span<const std::string> references) {
  if (candidates.size() != references.size()) throw std::invalid_argument("rouge batch: length mismatch");
  std::vector<double> out(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) out[i] = rouge_l(candidates[i], references[i]);
  return out;
}

std::vector<double> rouge_l_batch_parallel(std::span<const std::string> candidates,
                                           std::span<const std::string> references) {
  if (candidates.size() != references.size()) throw std::invalid_argument("rouge batch: length mismatch");
  std::vector<double> out(candidates.size());
  const auto n = static_cast<std::ptrdiff_t>(candidates.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = rouge_l(candidates[i], references[i]);
  return out;
}

// ---------------------------------------------------------------------------

double round_half_up(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  // The nudge absorbs binary representation error on exact halves like 1.005.
  const double scaled = std::fabs(value) * scale;
  const double rounded = std::floor(scaled + 0.5 + 1e-9 * std::max(1.0, scaled)) / scale;
  return std::copysign(rounded, value);
}

std::string format_fixed(double value, int decimals) {
  double r = round_half_up(value, decimals);
  if (r == 0) r = 0;  // no "-0.00"
  return fmt::format("{:.{}f}", r, decimals);
}

Json to_json(const RunMetrics &m) {
  Json j;
  j["n_examples"] = m.n_examples;
  j["n_correct"] = m.n_correct;
  j["n_teacher_correct"] = m.n_teacher_correct;
  j["n_failed"] = m.n_failed;
  j["accuracy"] = m.accuracy;
  j["accuracy_pct"] = format_fixed(100.0 * m.accuracy, 2);
  j["acc_teacher"] = m.acc_teacher;
  j["acc_teacher_pct"] = format_fixed(100.0 * m.acc_teacher, 2);
  j["delta_acc_points"] = m.delta_acc_points ? Json(format_fixed(*m.delta_acc_points, 2)) : Json(nullptr);
  j["delta_baseline"] = m.delta_baseline ? Json(*m.delta_baseline) : Json(nullptr);
  j["total_time_s"] = {{"teacher", format_fixed(m.total_time_s.teacher, 2)},
                       {"student", format_fixed(m.total_time_s.student, 2)},
                       {"total", format_fixed(m.total_time_s.total, 2)}};
  j["total_time_raw_s"] = {
      {"teacher", m.total_time_s.teacher}, {"student", m.total_time_s.student}, {"total", m.total_time_s.total}};
  j["speed_up"] = m.speed_up ? Json(format_fixed(*m.speed_up, 2)) : Json(nullptr);
  j["speed_up_reference"] = m.speed_up_reference ? Json(*m.speed_up_reference) : Json(nullptr);
  return j;
}

Json to_json(const ThroughputModel &t) {
  return {{"per_example_teacher_s", format_fixed(t.per_example_teacher_s, 2)},
          {"per_example_student_s", format_fixed(t.per_example_student_s, 2)},
          {"per_example_total_s", format_fixed(t.per_example_total_s, 2)},
          {"batch_size", t.batch_size},
          {"users_served_per_window", t.users_served_per_window}};
}

Json to_json(const CostPerformance &c) {
  return {{"performance_ratio_pct", format_fixed(100.0 * c.performance_ratio, 2)},
          {"cost_ratio_pct", format_fixed(100.0 * c.cost_ratio, 0)},
          {"performance_ratio", c.performance_ratio},
          {"cost_ratio", c.cost_ratio},
          {"mode", to_string(c.mode)}};
}

}  // namespace gkt
