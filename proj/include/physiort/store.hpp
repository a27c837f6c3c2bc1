#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "physiort/config.hpp"
#include "physiort/dsp.hpp"
#include "physiort/error.hpp"
#include "physiort/wire.hpp"

namespace physiort::store {

constexpr std::string_view kFormatTag = "physiort-session/1";

struct ChannelInfo {
  std::string name;
  config::SignalKind kind = config::SignalKind::PPG;
  std::string site;
  friend bool operator==(const ChannelInfo&, const ChannelInfo&) = default;
};

struct RecordingHeader {
  std::string session_id;
  std::string participant_id;
  std::string condition;
  std::string group;  // optional participant group, may be empty
  double fs = 0.0;
  int adc_bits = 10;
  std::vector<ChannelInfo> channels;
  std::string start_wall;  // ISO 8601 UTC
  std::int64_t start_mono_ns = 0;
  std::string config_digest;  // hex SHA-256, may be empty
  friend bool operator==(const RecordingHeader&, const RecordingHeader&) = default;

  void validate() const;  // InvalidId / RangeViolation
};

// Inclusive sample range carrying one positive event code.
struct EventMark {
  std::int32_t code = 0;
  std::uint64_t start_sample = 0;
  std::uint64_t end_sample = 0;
  friend bool operator==(const EventMark&, const EventMark&) = default;
};

constexpr std::int8_t kSqiUnassessed = -1;
constexpr std::int8_t kSqiBad = 0;
constexpr std::int8_t kSqiGood = 1;

struct Recording {
  RecordingHeader header;
  std::vector<std::uint32_t> values;  // [row][channel]
  std::vector<std::int8_t> sqi;
  std::vector<std::int32_t> event_code;
  std::vector<EventMark> marks;
  bool finalized = false;

  std::size_t rows() const noexcept { return sqi.size(); }
  std::size_t channel_count() const noexcept { return header.channels.size(); }
  std::uint32_t value(std::size_t row, std::size_t ch) const { return values[row * channel_count() + ch]; }
  double elapsed(std::size_t row) const { return static_cast<double>(row) / header.fs; }
  std::optional<std::size_t> channel_index(std::string_view name) const;
  dsp::SampleSeries channel(std::size_t ch) const;  // ADC counts as doubles
  friend bool operator==(const Recording&, const Recording&) = default;
};

// Maximal runs of equal non-zero codes.
std::vector<EventMark> marks_from_codes(const std::vector<std::int32_t>& codes);

// Bit-exact cell formatting shared by writer and reader.
std::string format_elapsed(std::uint64_t sample_idx, double fs);

std::string sha256_hex(std::string_view bytes);
std::string config_digest(const config::ExperimentConfig& exp, const config::AcqConfig& acq);

// Append-only session file. Rows are flushed to the OS at least once per
// second of data and on finalize. The file is created exclusively.
class Writer {
 public:
  Writer(const std::filesystem::path& path, RecordingHeader header);  // IoFailure
  ~Writer();
  Writer(const Writer&) = delete;
  Writer& operator=(const Writer&) = delete;

  // OutOfOrderSample unless sample_idx is the next row.
  void append(std::uint64_t sample_idx, const wire::SampleFrame& frame, std::int8_t sqi, std::int32_t event_code);
  void append(const wire::SampleFrame& frame, std::int8_t sqi, std::int32_t event_code);
  void flush();
  void finalize();  // writes the row-count trailer; later appends throw IoFailure

  std::uint64_t rows_written() const noexcept { return next_idx_; }
  std::size_t flush_count() const noexcept { return flushes_; }
  bool finalized() const noexcept { return finalized_; }
  const RecordingHeader& header() const noexcept { return header_; }
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  void write_raw(const std::string& bytes);

  std::filesystem::path path_;
  RecordingHeader header_;
  std::FILE* file_ = nullptr;
  std::uint32_t max_value_ = 0;
  std::uint64_t next_idx_ = 0;
  std::uint64_t last_flush_idx_ = 0;
  std::uint64_t flush_every_ = 1;
  std::size_t flushes_ = 0;
  bool finalized_ = false;
  std::string line_;
};

// Writes a whole recording through Writer.
void write_recording(const std::filesystem::path& path, const Recording& rec);

// Raised for a damaged file; carries the rows that parsed before the damage.
class CorruptRecording : public Error {
 public:
  CorruptRecording(std::size_t line_no, std::string message, Recording prefix)
      : Error(Errc::CorruptFile, "line " + std::to_string(line_no) + ": " + message, "line " + std::to_string(line_no)),
        line_no_(line_no),
        prefix_(std::move(prefix)) {}
  std::size_t line_no() const noexcept { return line_no_; }
  const Recording& prefix() const noexcept { return prefix_; }

 private:
  std::size_t line_no_;
  Recording prefix_;
};

Recording parse_recording(std::string_view text);  // CorruptRecording
Recording read_recording(const std::filesystem::path& path);  // IoFailure, CorruptRecording

// <data_dir>/<participant_id>/<condition>.csv, or <condition>_N.csv for the
// first free N >= 2 when earlier sessions exist. Throws InvalidId.
std::filesystem::path session_layout(const std::filesystem::path& data_dir, std::string_view participant_id,
                                     std::string_view condition);

// Every *.csv directly under <data_dir>/<participant>/, sorted.
std::vector<std::filesystem::path> list_sessions(const std::filesystem::path& data_dir);

}  // namespace physiort::store
