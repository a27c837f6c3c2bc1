#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "physiort/app/hub.hpp"
#include "physiort/app/source.hpp"
#include "physiort/config.hpp"
#include "physiort/sqa.hpp"
#include "physiort/store.hpp"

namespace physiort::app {

struct RecorderSetup {
  config::ExperimentConfig experiment;
  config::AcqConfig acq;
  std::string participant_id;
  std::filesystem::path data_dir;
  std::string session_id;
  std::string condition;
  std::optional<double> duration_s;  // nullopt: until request_stop or end of source
  const sqa::Model* model = nullptr;  // SQI stays -1 without one
  UiHub* hub = nullptr;
  std::string config_digest;
  std::string start_wall;
  std::int64_t start_mono_ns = 0;
  // Called on the recording thread roughly once per second of data.
  std::function<void(std::uint64_t rows)> on_progress;
};

enum class EndReason { timer, stopped, source_ended };
std::string_view to_string(EndReason r) noexcept;

struct ConditionResult {
  std::filesystem::path path;
  std::string condition;
  std::uint64_t rows = 0;
  std::uint64_t frames_dropped = 0;
  std::vector<store::EventMark> marks;
  EndReason end = EndReason::stopped;
};

// One condition: source -> decoder -> {writer, live metrics, SQA}. A reader
// thread feeds a bounded queue; the writer side blocks the reader rather than
// drop bytes. Rows wait for their SQA bin and are written in order.
class Recorder {
 public:
  explicit Recorder(RecorderSetup setup);
  Recorder(const Recorder&) = delete;
  Recorder& operator=(const Recorder&) = delete;

  ConditionResult run(ByteSource& source);  // IoFailure, TransportError

  void request_stop();
  // Applied at the next row; acknowledged through the hub.
  void mark_on(std::int32_t code);
  void mark_off();

  std::uint64_t rows_received() const noexcept { return received_.load(); }
  double elapsed_s() const noexcept;
  const RecorderSetup& setup() const noexcept { return setup_; }

  static constexpr std::size_t kQueueChunks = 256;

 private:
  struct MarkCommand {
    bool on = false;
    std::int32_t code = 0;
  };

  RecorderSetup setup_;
  std::atomic<bool> stop_{false};
  std::atomic<std::uint64_t> received_{0};
  std::mutex mark_mu_;
  std::vector<MarkCommand> mark_mailbox_;
};

// Session-relative UTC wall clock in ISO 8601 with milliseconds.
std::string iso8601_now();

}  // namespace physiort::app
