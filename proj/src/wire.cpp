#include "physiort/wire.hpp"

#include <charconv>

#include "physiort/error.hpp"

namespace physiort::wire {

std::string encode_frame(const SampleFrame& frame, int adc_bits) {
  const std::uint32_t max = adc_max(adc_bits);
  std::string line;
  line.reserve(frame.values.size() * 5 + 1);
  char buf[16];
  for (std::size_t i = 0; i < frame.values.size(); ++i) {
    const std::uint32_t v = frame.values[i];
    if (v > max) {
      throw Error(Errc::ValueOutOfRange,
                  "value " + std::to_string(v) + " exceeds " + std::to_string(adc_bits) + "-bit ADC range");
    }
    if (i) line.push_back(',');
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    line.append(buf, end);
  }
  line.push_back('\n');
  return line;
}

FrameDecoder::FrameDecoder(std::size_t expected_channels, int adc_bits)
    : expected_channels_(expected_channels),
      max_value_(adc_max(adc_bits)),
      max_line_(kMaxBytesPerChannel * expected_channels) {
  if (expected_channels == 0) throw Error(Errc::SpecViolation, "decoder needs at least one channel");
  if (adc_bits != 10 && adc_bits != 12) throw Error(Errc::SpecViolation, "adc_bits must be 10 or 12");
  buffer_.reserve(max_line_);
}

std::vector<SampleFrame> FrameDecoder::feed(std::string_view bytes) {
  std::vector<SampleFrame> out;
  feed_into(bytes, out);
  return out;
}

std::vector<SampleFrame> FrameDecoder::feed(std::span<const std::uint8_t> bytes) {
  return feed(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

void FrameDecoder::feed_into(std::string_view bytes, std::vector<SampleFrame>& out) {
  for (char c : bytes) {
    if (c == '\n') {
      finish_line(out);
      continue;
    }
    if (overflow_) continue;
    if (buffer_.size() >= max_line_) {
      // Overlong line: discard what we have and skip to the next newline.
      overflow_ = true;
      buffer_.clear();
      continue;
    }
    buffer_.push_back(c);
  }
}

void FrameDecoder::finish_line(std::vector<SampleFrame>& out) {
  std::string_view line(buffer_);
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

  bool ok = !overflow_ && !line.empty();
  SampleFrame frame;
  if (ok) {
    frame.values.reserve(expected_channels_);
    std::size_t pos = 0;
    while (ok) {
      const std::size_t comma = line.find(',', pos);
      const std::string_view field = line.substr(pos, comma == std::string_view::npos ? line.npos : comma - pos);
      std::uint32_t v = 0;
      // Plain decimal digits only; at most 10 so from_chars cannot overflow.
      ok = !field.empty() && field.size() <= 10 && frame.values.size() < expected_channels_;
      for (char d : field) ok = ok && d >= '0' && d <= '9';
      if (ok) {
        auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
        ok = ec == std::errc{} && p == field.data() + field.size() && v <= max_value_;
      }
      if (ok) frame.values.push_back(v);
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    ok = ok && frame.values.size() == expected_channels_;
  }

  if (ok) {
    ++stats_.frames_ok;
    out.push_back(std::move(frame));
  } else {
    ++stats_.frames_dropped;
  }
  buffer_.clear();
  overflow_ = false;
}

}  // namespace physiort::wire
