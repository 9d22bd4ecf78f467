#include <unistd.h>

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "gkt/backend.hpp"

namespace gkt {

namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// UTF-8 continuation bytes do not start a code point.
bool starts_code_point(unsigned char c) { return (c & 0xC0) != 0x80; }

constexpr int kChunkCodePoints = 4;

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> ReferenceTokenizer::pieces(std::string_view text) const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    while (i < n && is_space(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= n) break;
    std::size_t word_end = i;
    while (word_end < n && !is_space(static_cast<unsigned char>(text[word_end]))) ++word_end;
    std::size_t begin = i;
    int cps = 0;
    for (std::size_t k = i; k < word_end; ++k) {
      if (!starts_code_point(static_cast<unsigned char>(text[k]))) continue;
      if (cps == kChunkCodePoints) {
        out.emplace_back(begin, k);
        begin = k;
        cps = 0;
      }
      ++cps;
    }
    out.emplace_back(begin, word_end);
    i = word_end;
  }
  return out;
}

int ReferenceTokenizer::count(std::string_view text) const { return static_cast<int>(pieces(text).size()); }

std::string_view ReferenceTokenizer::truncate(std::string_view text, int max_tokens) const {
  if (max_tokens <= 0) return text.substr(0, 0);
  auto ps = pieces(text);
  if (static_cast<int>(ps.size()) <= max_tokens) return text;
  return text.substr(0, ps[static_cast<std::size_t>(max_tokens) - 1].second);
}

int ExternalTokenizer::count(std::string_view text) const {
  if (text.empty()) return 0;
  namespace fs = std::filesystem;
  std::error_code ec;
  auto dir = fs::temp_directory_path(ec);
  if (ec) throw BackendError(BackendErrorKind::ExternalTokenizerUnavailable, "no temp directory");
  std::string tmpl = (dir / "gkt-tok-XXXXXX").string();
  int fd = ::mkstemp(tmpl.data());
  if (fd < 0) throw BackendError(BackendErrorKind::ExternalTokenizerUnavailable, "cannot create temp file");
  ::close(fd);
  {
    std::ofstream out(tmpl, std::ios::binary);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
  }
  std::string cmd = command_ + " < '" + tmpl + "' 2>/dev/null";
  FILE *pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) {
    fs::remove(tmpl, ec);
    throw BackendError(BackendErrorKind::ExternalTokenizerUnavailable, "cannot start '" + command_ + "'");
  }
  std::string output;
  char buf[256];
  while (std::fgets(buf, sizeof buf, pipe)) output += buf;
  int status = ::pclose(pipe);
  fs::remove(tmpl, ec);
  if (status != 0)
    throw BackendError(BackendErrorKind::ExternalTokenizerUnavailable,
                       "tokenizer command '" + command_ + "' exited with status " + std::to_string(status));
  char *end = nullptr;
  long value = std::strtol(output.c_str(), &end, 10);
  if (end == output.c_str() || value < 0)
    throw BackendError(BackendErrorKind::ExternalTokenizerUnavailable,
                       "tokenizer command '" + command_ + "' printed no count");
  return static_cast<int>(value);
}

std::shared_ptr<const Tokenizer> make_tokenizer(const TokenizerConfig &config) {
  if (config.scheme == TokenizerScheme::External) return std::make_shared<ExternalTokenizer>(config.command);
  return std::make_shared<ReferenceTokenizer>();
}

int count_tokens(const Tokenizer &tokenizer, std::string_view text) { return tokenizer.count(text); }

}  // namespace gkt
