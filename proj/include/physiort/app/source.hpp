#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "physiort/config.hpp"
#include "physiort/wire.hpp"

namespace physiort::app {

// Raw byte stream in the wire grammar.
class ByteSource {
 public:
  virtual ~ByteSource() = default;
  // Appends whatever arrives within `timeout`. Returns false once the stream has ended.
  virtual bool read(std::string& out, std::chrono::milliseconds timeout) = 0;
};

// Wire position of each declared channel: values appear in ascending adc_index order.
std::vector<std::size_t> wire_positions(const std::vector<config::ChannelSpec>& channels);

// Synthetic sensors: PPG, EDA and RSP generators per channel, quantized and
// encoded frame by frame. Paced sources emit at the sampling rate in wall time.
class SimulatorSource : public ByteSource {
 public:
  SimulatorSource(std::vector<config::ChannelSpec> channels, double fs, int adc_bits, config::SimulatorSettings settings,
                  std::uint64_t stream_seed, std::optional<std::uint64_t> frame_limit);
  bool read(std::string& out, std::chrono::milliseconds timeout) override;
  std::uint64_t frames_emitted() const noexcept { return emitted_; }

  static constexpr double kBlockSeconds = 300.0;

 private:
  void fill_block();
  void emit(std::string& out, std::uint64_t n);

  std::vector<config::ChannelSpec> channels_;
  std::vector<std::size_t> positions_;
  double fs_;
  int adc_bits_;
  config::SimulatorSettings settings_;
  std::uint64_t stream_seed_;
  std::optional<std::uint64_t> limit_;
  std::vector<std::vector<std::uint32_t>> block_;  // [channel][sample]
  std::uint64_t block_index_ = 0;
  std::size_t block_pos_ = 0;
  std::uint64_t emitted_ = 0;
  std::optional<std::chrono::steady_clock::time_point> t0_;
};

// Replays a captured wire-grammar file, optionally paced line by line.
class ReplaySource : public ByteSource {
 public:
  ReplaySource(const std::filesystem::path& path, double fs, bool paced);  // IoFailure
  bool read(std::string& out, std::chrono::milliseconds timeout) override;

 private:
  std::string data_;
  std::size_t pos_ = 0;
  double fs_;
  bool paced_;
  std::uint64_t lines_ = 0;
  std::optional<std::chrono::steady_clock::time_point> t0_;
};

// termios serial port in raw 8N1 mode. Throws TransportError.
class SerialSource : public ByteSource {
 public:
  SerialSource(const std::string& device, int baudrate);
  ~SerialSource() override;
  SerialSource(const SerialSource&) = delete;
  SerialSource& operator=(const SerialSource&) = delete;
  bool read(std::string& out, std::chrono::milliseconds timeout) override;

 private:
  int fd_ = -1;
};

// Source for one condition. frame_limit bounds simulator output; other
// transports ignore it.
std::unique_ptr<ByteSource> open_source(const config::AcqConfig& acq, const std::vector<config::ChannelSpec>& channels,
                                        std::uint64_t stream_seed, std::optional<std::uint64_t> frame_limit);

}  // namespace physiort::app
