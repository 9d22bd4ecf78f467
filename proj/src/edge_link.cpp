#include "gkt/edge_link.hpp"

#include <cmath>

namespace gkt {

int bits_per_token(long long vocabulary_size) {
  if (vocabulary_size < 2)
    throw DomainError("vocabulary size must be >= 2, got " + std::to_string(vocabulary_size));
  // Integer search avoids log2 rounding at exact powers of two.
  int b = 0;
  unsigned long long capacity = 1;
  while (capacity < static_cast<unsigned long long>(vocabulary_size)) {
    capacity <<= 1;
    ++b;
  }
  return b;
}

LinkModel::LinkModel(double bandwidth_bits_per_s, long long vocabulary_size, double overhead_bits)
    : bandwidth_(bandwidth_bits_per_s),
      vocabulary_size_(vocabulary_size),
      bits_per_token_(gkt::bits_per_token(vocabulary_size)),
      overhead_bits_(overhead_bits) {
  if (!(bandwidth_bits_per_s > 0) || !std::isfinite(bandwidth_bits_per_s))
    throw DomainError("bandwidth must be a positive finite number of bits per second");
  if (overhead_bits < 0) throw DomainError("overhead_bits must be >= 0");
}

LinkModel LinkModel::from_config(const LinkConfig &config, int teacher_vocabulary_size) {
  return LinkModel(config.bandwidth_bits_per_s, config.vocabulary_size.value_or(teacher_vocabulary_size),
                   config.overhead_bits);
}

double LinkModel::transmission_time(long long tokens) const {
  if (tokens <= 0) return 0.0;
  return (static_cast<double>(tokens) * bits_per_token_ + overhead_bits_) / bandwidth_;
}

double LinkModel::transmission_time_bytes(std::size_t utf8_bytes) const {
  if (utf8_bytes == 0) return 0.0;
  return (8.0 * static_cast<double>(utf8_bytes) + overhead_bits_) / bandwidth_;
}

std::string to_string(TransferScheme scheme) {
  return scheme == TransferScheme::Gkt ? "gkt" : "speculative_decoding";
}

double transmission_time(long long tokens, const LinkModel &link) { return link.transmission_time(tokens); }

std::pair<TransmissionReport, TransmissionReport> compare_schemes(long long guidance_tokens,
                                                                  long long student_output_tokens,
                                                                  const LinkModel &link) {
  if (guidance_tokens < 0 || student_output_tokens < 0) throw DomainError("token counts must be >= 0");
  TransmissionReport gkt{TransferScheme::Gkt, guidance_tokens, link.transmission_time(guidance_tokens)};
  const long long sd_tokens = 2 * student_output_tokens;
  TransmissionReport sd{TransferScheme::SpeculativeDecoding, sd_tokens, link.transmission_time(sd_tokens)};
  return {gkt, sd};
}

double guidance_transfer_time(const LinkModel &link, PricingMode pricing, int teacher_tokens,
                              std::string_view guidance_text) {
  if (pricing == PricingMode::Utf8Bytes) return link.transmission_time_bytes(guidance_text.size());
  return link.transmission_time(teacher_tokens);
}

std::vector<LinkSweepRow> sweep_bandwidths(long long vocabulary_size, const std::vector<double> &bandwidths,
                                           long long guidance_tokens, long long student_output_tokens) {
  std::vector<LinkSweepRow> rows;
  rows.reserve(bandwidths.size());
  for (double bw : bandwidths) {
    LinkModel link(bw, vocabulary_size);
    auto [gkt, sd] = compare_schemes(guidance_tokens, student_output_tokens, link);
    rows.push_back({bw, gkt, sd});
  }
  return rows;
}

}  // namespace gkt
