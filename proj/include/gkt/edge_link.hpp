#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gkt/domain.hpp"

namespace gkt {

class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Smallest b with 2^b >= vocabulary_size. Throws DomainError for N < 2.
int bits_per_token(long long vocabulary_size);

/// Payload-only link: one token index costs bits_per_token bits.
class LinkModel {
 public:
  LinkModel(double bandwidth_bits_per_s, long long vocabulary_size, double overhead_bits = 0.0);

  static LinkModel from_config(const LinkConfig &config, int teacher_vocabulary_size);

  double bandwidth_bits_per_s() const { return bandwidth_; }
  long long vocabulary_size() const { return vocabulary_size_; }
  int bits_per_token() const { return bits_per_token_; }
  double overhead_bits() const { return overhead_bits_; }

  double transmission_time(long long tokens) const;
  double transmission_time_bytes(std::size_t utf8_bytes) const;

 private:
  double bandwidth_;
  long long vocabulary_size_;
  int bits_per_token_;
  double overhead_bits_;
};

enum class TransferScheme { Gkt, SpeculativeDecoding };

std::string to_string(TransferScheme scheme);

struct TransmissionReport {
  TransferScheme scheme;
  long long tokens_transmitted = 0;
  double time_s = 0.0;
};

double transmission_time(long long tokens, const LinkModel &link);

/// GKT ships m guidance tokens down; speculative decoding ships 2L tokens
/// (drafts up, verified tokens back).
std::pair<TransmissionReport, TransmissionReport> compare_schemes(long long guidance_tokens,
                                                                  long long student_output_tokens,
                                                                  const LinkModel &link);

/// Cost of one guidance text on the link under the chosen pricing mode.
double guidance_transfer_time(const LinkModel &link, PricingMode pricing, int teacher_tokens,
                              std::string_view guidance_text);

struct LinkSweepRow {
  double bandwidth_bits_per_s;
  TransmissionReport gkt;
  TransmissionReport speculative;
};

std::vector<LinkSweepRow> sweep_bandwidths(long long vocabulary_size, const std::vector<double> &bandwidths,
                                           long long guidance_tokens, long long student_output_tokens);

}  // namespace gkt
