#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace physiort::wire {

struct SampleFrame {
  std::vector<std::uint32_t> values;

  friend bool operator==(const SampleFrame&, const SampleFrame&) = default;
};

constexpr std::size_t kMaxBytesPerChannel = 64;

inline std::uint32_t adc_max(int adc_bits) { return (1u << adc_bits) - 1u; }

// "v0,v1,...,vK\n". Throws ValueOutOfRange when a value exceeds the ADC range.
std::string encode_frame(const SampleFrame& frame, int adc_bits);

struct DecoderStats {
  std::uint64_t frames_ok = 0;
  std::uint64_t frames_dropped = 0;
};

// Incremental decoder for the newline-delimited sample stream. Malformed lines
// are counted and skipped; decoding resumes after the next '\n'.
class FrameDecoder {
 public:
  FrameDecoder(std::size_t expected_channels, int adc_bits);

  std::vector<SampleFrame> feed(std::string_view bytes);
  std::vector<SampleFrame> feed(std::span<const std::uint8_t> bytes);
  // Appends decoded frames to `out` instead of allocating a new vector.
  void feed_into(std::string_view bytes, std::vector<SampleFrame>& out);

  const DecoderStats& stats() const noexcept { return stats_; }
  std::size_t buffered_bytes() const noexcept { return buffer_.size(); }
  std::size_t max_line_bytes() const noexcept { return max_line_; }
  std::size_t expected_channels() const noexcept { return expected_channels_; }

 private:
  void finish_line(std::vector<SampleFrame>& out);

  std::size_t expected_channels_;
  std::uint32_t max_value_;
  std::size_t max_line_;
  std::string buffer_;
  bool overflow_ = false;
  DecoderStats stats_;
};

}  // namespace physiort::wire
