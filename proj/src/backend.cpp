#include "gkt/backend.hpp"

#include <array>
#include <chrono>
#include <cstdlib>
#include <semaphore>
#include <thread>

#include <httplib.h>

namespace gkt {

const char *to_string(BackendErrorKind kind) {
  switch (kind) {
    case BackendErrorKind::RemoteUnavailable:
      return "RemoteUnavailable";
    case BackendErrorKind::RemoteRejected:
      return "RemoteRejected";
    case BackendErrorKind::ContextOverflow:
      return "ContextOverflow";
    case BackendErrorKind::ExternalTokenizerUnavailable:
      return "ExternalTokenizerUnavailable";
    case BackendErrorKind::InvalidRequest:
      return "InvalidRequest";
  }
  return "BackendError";
}

LanguageModel::LanguageModel(BackendConfig config)
    : config_(std::move(config)),
      vocabulary_size_(config_.resolved_vocabulary_size()),
      tokenizer_(make_tokenizer(config_.tokenizer)) {
  if (vocabulary_size_ < 2)
    throw ConfigError(config_.name + ": vocabulary_size must be >= 2 (set it or use family \"llama\")");
}

void LanguageModel::check_request(std::string_view prompt, const GenerationSettings &settings) const {
  if (prompt.empty()) throw BackendError(BackendErrorKind::InvalidRequest, name() + ": empty prompt");
  auto violations = validate_settings(settings, "settings");
  if (!violations.empty())
    throw BackendError(BackendErrorKind::InvalidRequest,
                       name() + ": " + violations.front().path + " " + violations.front().message);
}

// ---------------------------------------------------------------------------
// Mock

namespace {

constexpr std::array<std::string_view, 64> kMockWords = {
    "the",  "a",    "we",   "so",   "then", "add",  "take", "half", "each", "has",  "had",  "sold", "left",
    "more", "less", "two",  "four", "five", "six",  "ten",  "is",   "are",  "of",   "to",   "and",  "it",
    "she",  "he",   "they", "now",  "all",  "many", "how",  "much", "time", "day",  "week", "cost", "paid",
    "gets", "buys", "uses", "from", "with", "into", "per",  "sum",  "so,",  "then", "step", "next", "one",
    "2",    "3",    "4",    "5",    "6",    "8",    "12",   "24",   "48",   "72",   "100",  "=",
};

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

MockModel::MockModel(BackendConfig config) : LanguageModel(std::move(config)) {
  if (!config_.seed) throw ConfigError(config_.name + ": mock backends require a seed");
}

std::uint64_t MockModel::effective_seed(const GenerationSettings &settings) const {
  return settings.seed.value_or(*config_.seed);
}

GenerationOutput MockModel::produce(std::string_view prompt, const GenerationSettings &settings) const {
  check_request(prompt, settings);
  if (pieces_.count(prompt) > config_.max_seq_len)
    throw BackendError(BackendErrorKind::ContextOverflow,
                       name() + ": prompt of " + std::to_string(pieces_.count(prompt)) +
                           " tokens exceeds max_seq_len " + std::to_string(config_.max_seq_len));
  const int budget = settings.max_new_tokens;
  GenerationOutput out;
  for (const auto &entry : config_.scripted) {
    if (!entry.match.empty() && prompt.find(entry.match) != std::string_view::npos) {
      const int full = pieces_.count(entry.continuation);
      out.text = std::string(pieces_.truncate(entry.continuation, budget));
      out.token_count = std::min(full, budget);
      out.finish_reason = full > budget ? FinishReason::Length : FinishReason::Stop;
      return out;
    }
  }
  const std::uint64_t base = splitmix64(fnv1a(prompt) ^ splitmix64(effective_seed(settings)));
  out.text.reserve(static_cast<std::size_t>(budget) * 5);
  for (int k = 0; k < budget; ++k) {
    auto word = kMockWords[splitmix64(base + static_cast<std::uint64_t>(k)) % kMockWords.size()];
    out.text.push_back(' ');
    out.text.append(word);
  }
  out.token_count = budget;
  out.finish_reason = FinishReason::Length;
  return out;
}

GenerationOutput MockModel::generate(std::string_view prompt, const GenerationSettings &settings) const {
  auto out = produce(prompt, settings);
  out.latency = config_.batch_overhead_s + config_.latency_per_token_s * out.token_count;
  return out;
}

std::vector<GenerationOutput> MockModel::generate_batch(std::span<const std::string> prompts,
                                                        const GenerationSettings &settings) const {
  if (prompts.empty()) throw BackendError(BackendErrorKind::InvalidRequest, name() + ": empty batch");
  std::vector<GenerationOutput> outs;
  outs.reserve(prompts.size());
  int longest = 0;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    try {
      outs.push_back(produce(prompts[i], settings));
    } catch (BackendError &e) {
      e.item_index = static_cast<int>(i);
      throw;
    }
    longest = std::max(longest, outs.back().token_count);
  }
  // The batch decodes in lockstep, so it takes as long as its longest member.
  const double latency = config_.batch_overhead_s + config_.latency_per_token_s * longest;
  for (auto &o : outs) o.latency = latency;
  return outs;
}

// ---------------------------------------------------------------------------
// Remote

struct RemoteModel::State {
  std::string scheme_host_port;
  std::string base_path;
  std::counting_semaphore<4096> in_flight;

  explicit State(int limit) : in_flight(limit) {}
};

namespace {

class SemaphoreGuard {
 public:
  explicit SemaphoreGuard(std::counting_semaphore<4096> &s) : s_(s) { s_.acquire(); }
  ~SemaphoreGuard() { s_.release(); }
  SemaphoreGuard(const SemaphoreGuard &) = delete;
  SemaphoreGuard &operator=(const SemaphoreGuard &) = delete;

 private:
  std::counting_semaphore<4096> &s_;
};

FinishReason parse_finish(const Json &choice) {
  if (choice.contains("finish_reason") && choice.at("finish_reason").is_string() &&
      choice.at("finish_reason").get<std::string>() == "length")
    return FinishReason::Length;
  return FinishReason::Stop;
}

}  // namespace

RemoteModel::RemoteModel(BackendConfig config) : LanguageModel(std::move(config)) {
  if (config_.endpoint.empty() || config_.model_id.empty())
    throw ConfigError(config_.name + ": remote backends require endpoint and model_id");
  state_ = std::make_unique<State>(std::clamp(config_.max_in_flight, 1, 4096));
  const auto &ep = config_.endpoint;
  auto scheme_end = ep.find("://");
  auto host_begin = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto path_begin = ep.find('/', host_begin);
  if (path_begin == std::string::npos) {
    state_->scheme_host_port = ep;
  } else {
    state_->scheme_host_port = ep.substr(0, path_begin);
    state_->base_path = ep.substr(path_begin);
    while (!state_->base_path.empty() && state_->base_path.back() == '/') state_->base_path.pop_back();
  }
}

RemoteModel::~RemoteModel() = default;

std::string RemoteModel::auth_token() const {
  if (config_.auth_token) return *config_.auth_token;
  if (!config_.auth_token_env.empty())
    if (const char *v = std::getenv(config_.auth_token_env.c_str())) return v;
  return "";
}

Json RemoteModel::build_body(const Json &prompt, const GenerationSettings &settings) const {
  Json body = {{"model", config_.model_id},
               {"prompt", prompt},
               {"max_tokens", settings.max_new_tokens},
               {"temperature", settings.temperature},
               {"top_p", settings.top_p}};
  if (settings.seed) body["seed"] = *settings.seed;
  return body;
}

Json RemoteModel::post_with_retry(const Json &body) const {
  SemaphoreGuard guard(state_->in_flight);
  const std::string path = state_->base_path + "/v1/completions";
  const std::string payload = body.dump();
  const std::string token = auth_token();
  double backoff = config_.backoff_initial_s;
  std::string last_error;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    httplib::Client client(state_->scheme_host_port);
    auto timeout = std::chrono::duration<double>(config_.timeout_s);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);
    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      last_error = name() + ": request failed (" + httplib::to_string(res.error()) + ")";
    } else if (res->status == 429 || res->status >= 500) {
      last_error = name() + ": HTTP " + std::to_string(res->status);
    } else if (res->status >= 400) {
      throw BackendError(BackendErrorKind::RemoteRejected,
                         name() + ": HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 512));
    } else {
      try {
        return Json::parse(res->body);
      } catch (const Json::parse_error &) {
        throw BackendError(BackendErrorKind::RemoteRejected, name() + ": response is not JSON");
      }
    }
    if (attempt < config_.max_attempts) {
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
      backoff *= 2;
    }
  }
  throw BackendError(BackendErrorKind::RemoteUnavailable, last_error);
}

GenerationOutput RemoteModel::generate(std::string_view prompt, const GenerationSettings &settings) const {
  check_request(prompt, settings);
  auto start = std::chrono::steady_clock::now();
  Json reply = post_with_retry(build_body(std::string(prompt), settings));
  auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!reply.contains("choices") || !reply.at("choices").is_array() || reply.at("choices").empty())
    throw BackendError(BackendErrorKind::RemoteRejected, name() + ": response has no choices");
  const auto &choice = reply.at("choices")[0];
  GenerationOutput out;
  out.text = choice.value("text", std::string{});
  out.finish_reason = parse_finish(choice);
  if (reply.contains("usage") && reply.at("usage").contains("completion_tokens"))
    out.token_count = reply.at("usage").at("completion_tokens").get<int>();
  else
    out.token_count = tokenizer_->count(out.text);
  if (out.token_count > settings.max_new_tokens)
    throw BackendError(BackendErrorKind::RemoteRejected,
                       name() + ": server returned " + std::to_string(out.token_count) + " tokens for max_tokens " +
                           std::to_string(settings.max_new_tokens));
  out.latency = elapsed;
  return out;
}

std::vector<GenerationOutput> RemoteModel::generate_batch(std::span<const std::string> prompts,
                                                          const GenerationSettings &settings) const {
  if (prompts.empty()) throw BackendError(BackendErrorKind::InvalidRequest, name() + ": empty batch");
  if (prompts.size() == 1) return {generate(prompts[0], settings)};
  Json array = Json::array();
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    try {
      check_request(prompts[i], settings);
    } catch (BackendError &e) {
      e.item_index = static_cast<int>(i);
      throw;
    }
    array.push_back(prompts[i]);
  }
  auto start = std::chrono::steady_clock::now();
  Json reply = post_with_retry(build_body(array, settings));
  auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!reply.contains("choices") || !reply.at("choices").is_array())
    throw BackendError(BackendErrorKind::RemoteRejected, name() + ": response has no choices");
  std::vector<std::optional<GenerationOutput>> slots(prompts.size());
  const auto &choices = reply.at("choices");
  for (std::size_t k = 0; k < choices.size(); ++k) {
    const auto &choice = choices[k];
    std::size_t idx = choice.contains("index") ? choice.at("index").get<std::size_t>() : k;
    if (idx >= slots.size()) continue;
    GenerationOutput out;
    out.text = choice.value("text", std::string{});
    out.finish_reason = parse_finish(choice);
    // usage is aggregated over the batch, so count per choice locally.
    out.token_count = tokenizer_->count(out.text);
    if (out.token_count > settings.max_new_tokens) {
      out.text = tokenizer_->scheme() == TokenizerScheme::Reference
                     ? std::string(ReferenceTokenizer{}.truncate(out.text, settings.max_new_tokens))
                     : out.text;
      out.token_count = std::min(out.token_count, settings.max_new_tokens);
    }
    out.latency = elapsed;
    slots[idx] = std::move(out);
  }
  std::vector<GenerationOutput> outs;
  outs.reserve(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i]) {
      BackendError e(BackendErrorKind::RemoteRejected, name() + ": no choice for prompt " + std::to_string(i));
      e.item_index = static_cast<int>(i);
      throw e;
    }
    outs.push_back(std::move(*slots[i]));
  }
  return outs;
}

BackendHandle make_backend(const BackendConfig &config) {
  if (config.kind == BackendKind::Mock) return std::make_shared<MockModel>(config);
  return std::make_shared<RemoteModel>(config);
}

}  // namespace gkt
