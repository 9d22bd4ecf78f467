#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gkt/domain.hpp"

namespace gkt {

enum class BackendErrorKind {
  RemoteUnavailable,  // network or 5xx/429; retryable
  RemoteRejected,     // other 4xx or protocol violation
  ContextOverflow,
  ExternalTokenizerUnavailable,
  InvalidRequest,
};

const char *to_string(BackendErrorKind kind);

class BackendError : public std::runtime_error {
 public:
  BackendError(BackendErrorKind kind, const std::string &message)
      : std::runtime_error(message), kind_(kind) {}

  BackendErrorKind kind() const { return kind_; }
  bool retryable() const { return kind_ == BackendErrorKind::RemoteUnavailable; }

  std::optional<int> batch_index;  // batch within a plan
  std::optional<int> item_index;   // prompt within a batch
  std::optional<RequestId> request_id;

 private:
  BackendErrorKind kind_;
};

// ---------------------------------------------------------------------------
// Tokenizers

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual TokenizerScheme scheme() const = 0;
  virtual int count(std::string_view text) const = 0;
};

/// Whitespace-delimited words, each split into chunks of up to four UTF-8
/// code points. Used whenever no model tokenizer is available.
class ReferenceTokenizer final : public Tokenizer {
 public:
  TokenizerScheme scheme() const override { return TokenizerScheme::Reference; }
  int count(std::string_view text) const override;

  /// Byte ranges [begin, end) of every token piece.
  std::vector<std::pair<std::size_t, std::size_t>> pieces(std::string_view text) const;
  /// Longest prefix of `text` holding at most `max_tokens` pieces; whitespace
  /// after the last kept piece is dropped.
  std::string_view truncate(std::string_view text, int max_tokens) const;
};

/// Runs a user command with the text on stdin; the command prints the count.
class ExternalTokenizer final : public Tokenizer {
 public:
  explicit ExternalTokenizer(std::string command) : command_(std::move(command)) {}
  TokenizerScheme scheme() const override { return TokenizerScheme::External; }
  int count(std::string_view text) const override;

 private:
  std::string command_;
};

std::shared_ptr<const Tokenizer> make_tokenizer(const TokenizerConfig &config);

int count_tokens(const Tokenizer &tokenizer, std::string_view text);

// ---------------------------------------------------------------------------
// Language models

enum class FinishReason { Length, Stop };

struct GenerationOutput {
  std::string text;  // continuation only
  int token_count = 0;
  FinishReason finish_reason = FinishReason::Length;
  double latency = 0.0;  // seconds; simulated for Mock, measured for Remote

  bool operator==(const GenerationOutput &) const = default;
};

class LanguageModel {
 public:
  explicit LanguageModel(BackendConfig config);
  virtual ~LanguageModel() = default;

  LanguageModel(const LanguageModel &) = delete;
  LanguageModel &operator=(const LanguageModel &) = delete;

  const BackendConfig &config() const { return config_; }
  const std::string &name() const { return config_.name; }
  BackendKind kind() const { return config_.kind; }
  int vocabulary_size() const { return vocabulary_size_; }
  const Tokenizer &tokenizer() const { return *tokenizer_; }

  // True when latencies are simulated and deterministic.
  virtual bool simulated_time() const = 0;

  virtual GenerationOutput generate(std::string_view prompt, const GenerationSettings &settings) const = 0;

  /// Output i answers prompt i. Batching never changes content.
  virtual std::vector<GenerationOutput> generate_batch(std::span<const std::string> prompts,
                                                       const GenerationSettings &settings) const = 0;

 protected:
  void check_request(std::string_view prompt, const GenerationSettings &settings) const;

  BackendConfig config_;
  int vocabulary_size_;
  std::shared_ptr<const Tokenizer> tokenizer_;
};

using BackendHandle = std::shared_ptr<const LanguageModel>;

/// Deterministic stand-in model. Each emitted token is a short word picked by
/// a seeded hash of (prompt, seed, position), so a shorter budget always
/// yields a prefix of a longer one. Scripted entries map a prompt substring to
/// a fixed continuation, truncated to the budget.
class MockModel final : public LanguageModel {
 public:
  explicit MockModel(BackendConfig config);

  bool simulated_time() const override { return true; }
  GenerationOutput generate(std::string_view prompt, const GenerationSettings &settings) const override;
  std::vector<GenerationOutput> generate_batch(std::span<const std::string> prompts,
                                               const GenerationSettings &settings) const override;

  std::uint64_t effective_seed(const GenerationSettings &settings) const;

 private:
  GenerationOutput produce(std::string_view prompt, const GenerationSettings &settings) const;
  ReferenceTokenizer pieces_;
};

/// OpenAI-style completions client (POST <endpoint>/v1/completions).
class RemoteModel final : public LanguageModel {
 public:
  explicit RemoteModel(BackendConfig config);
  ~RemoteModel() override;

  bool simulated_time() const override { return false; }
  GenerationOutput generate(std::string_view prompt, const GenerationSettings &settings) const override;
  std::vector<GenerationOutput> generate_batch(std::span<const std::string> prompts,
                                               const GenerationSettings &settings) const override;

  std::string auth_token() const;

 private:
  struct State;
  Json build_body(const Json &prompt, const GenerationSettings &settings) const;
  Json post_with_retry(const Json &body) const;
  std::unique_ptr<State> state_;
};

BackendHandle make_backend(const BackendConfig &config);

}  // namespace gkt
