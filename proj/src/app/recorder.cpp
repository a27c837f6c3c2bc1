#include "physiort/app/recorder.hpp"

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <thread>

#include "physiort/app/live.hpp"
#include "physiort/error.hpp"
#include "physiort/sync.hpp"
#include "physiort/wire.hpp"

namespace physiort::app {

std::string_view to_string(EndReason r) noexcept {
  switch (r) {
    case EndReason::timer: return "timer";
    case EndReason::stopped: return "stopped";
    case EndReason::source_ended: return "source_ended";
  }
  return "?";
}

std::string iso8601_now() {
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

namespace {

// Bounded, lossless: push blocks while full.
class ChunkQueue {
 public:
  explicit ChunkQueue(std::size_t cap) : cap_(cap) {}

  bool push(std::string chunk, const std::atomic<bool>& abort) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return q_.size() < cap_ || abort.load() || discard_; });
    if (abort.load() || discard_) return false;
    q_.push_back(std::move(chunk));
    not_empty_.notify_one();
    return true;
  }
  // Returns false once closed and empty.
  bool pop(std::string& out, std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    not_empty_.wait_for(lock, timeout, [&] { return !q_.empty() || closed_; });
    if (q_.empty()) return !closed_;
    out = std::move(q_.front());
    q_.pop_front();
    not_full_.notify_one();
    return true;
  }
  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
  }
  void discard() {
    std::lock_guard lock(mu_);
    discard_ = true;
    not_full_.notify_all();
  }
  bool closed_and_empty() {
    std::lock_guard lock(mu_);
    return closed_ && q_.empty();
  }

 private:
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
  std::deque<std::string> q_;
  std::size_t cap_;
  bool closed_ = false;
  bool discard_ = false;
};

struct PendingRow {
  wire::SampleFrame frame;
  std::int32_t code = 0;
};

}  // namespace

Recorder::Recorder(RecorderSetup setup) : setup_(std::move(setup)) {}

void Recorder::request_stop() { stop_.store(true); }

void Recorder::mark_on(std::int32_t code) {
  if (code <= 0) throw Error(Errc::RangeViolation, "event code must be positive", "code");
  std::lock_guard lock(mark_mu_);
  mark_mailbox_.push_back({true, code});
}

void Recorder::mark_off() {
  std::lock_guard lock(mark_mu_);
  mark_mailbox_.push_back({false, 0});
}

double Recorder::elapsed_s() const noexcept {
  return static_cast<double>(received_.load()) / setup_.acq.sampling_rate;
}

ConditionResult Recorder::run(ByteSource& source) {
  const auto& exp = setup_.experiment;
  const double fs = setup_.acq.sampling_rate;
  const std::size_t n_ch = exp.channels.size();

  store::RecordingHeader header;
  header.session_id = setup_.session_id;
  header.participant_id = setup_.participant_id;
  header.condition = setup_.condition;
  header.fs = fs;
  header.adc_bits = setup_.acq.adc_bits;
  for (const auto& c : exp.channels) header.channels.push_back({c.name, c.kind, c.site});
  header.start_wall = setup_.start_wall.empty() ? iso8601_now() : setup_.start_wall;
  header.start_mono_ns = setup_.start_mono_ns ? setup_.start_mono_ns : sync::mono_now_ns();
  header.config_digest = setup_.config_digest;

  ConditionResult result;
  result.condition = setup_.condition;
  result.path = store::session_layout(setup_.data_dir, setup_.participant_id, setup_.condition);
  store::Writer writer(result.path, header);

  const auto positions = wire_positions(exp.channels);
  wire::FrameDecoder decoder(n_ch, setup_.acq.adc_bits);
  const std::uint64_t target =
      setup_.duration_s ? static_cast<std::uint64_t>(std::llround(*setup_.duration_s * fs)) : UINT64_MAX;

  auto publish = [&](const nlohmann::json& m) {
    if (setup_.hub) setup_.hub->publish(m);
  };

  LiveSettings live_settings;
  live_settings.biofeedback = exp.biofeedback;
  live_settings.plot_channels = exp.plot_channels;
  LiveMetrics live(exp.channels, fs, live_settings, publish);

  std::optional<std::size_t> sqa_channel;
  for (std::size_t c = 0; c < n_ch && setup_.model; ++c) {
    if (exp.channels[c].kind == config::SignalKind::PPG) {
      sqa_channel = c;
      break;
    }
  }
  std::optional<sqa::StreamAssessor> assessor;
  if (sqa_channel) assessor.emplace(*setup_.model, fs);
  std::vector<std::int8_t> labels;
  std::deque<PendingRow> pending;

  std::int32_t code = 0;
  std::optional<store::EventMark> open_mark;
  std::uint64_t next_row = 0;  // rows accepted from the decoder

  auto close_mark = [&](std::uint64_t last) {
    if (open_mark && last + 1 > open_mark->start_sample) {
      open_mark->end_sample = last;
      result.marks.push_back(*open_mark);
    }
    open_mark.reset();
  };

  auto apply_marks = [&] {
    std::vector<MarkCommand> cmds;
    {
      std::lock_guard lock(mark_mu_);
      cmds.swap(mark_mailbox_);
    }
    for (const auto& m : cmds) {
      const double t = static_cast<double>(next_row) / fs;
      if (m.on) {
        if (open_mark && open_mark->code != m.code && next_row > 0) close_mark(next_row - 1);
        if (open_mark && next_row == open_mark->start_sample) open_mark.reset();
        if (!open_mark) open_mark = store::EventMark{m.code, next_row, next_row};
        code = m.code;
        publish(msg::mark_ack("mark_on", m.code, next_row, t));
      } else {
        const std::int32_t was = code;
        if (open_mark) {
          if (next_row > 0) close_mark(next_row - 1);
          else open_mark.reset();
        }
        code = 0;
        publish(msg::mark_ack("mark_off", was, next_row, t));
      }
    }
  };

  auto write_ready = [&](bool all) {
    while (!pending.empty()) {
      const std::uint64_t idx = writer.rows_written();
      std::int8_t sqi = store::kSqiUnassessed;
      if (assessor) {
        const auto bin = sqa::bin_of_sample(idx, fs);
        if (bin < labels.size()) sqi = labels[bin];
        else if (!all) break;
      }
      writer.append(pending.front().frame, sqi, pending.front().code);
      pending.pop_front();
    }
  };

  const std::uint64_t progress_every = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(fs));

  ChunkQueue queue(kQueueChunks);
  std::atomic<bool> reader_abort{false};
  std::exception_ptr reader_error;
  std::thread reader([&] {
    try {
      while (!reader_abort.load() && !stop_.load()) {
        std::string chunk;
        if (!source.read(chunk, std::chrono::milliseconds(50))) break;
        if (!chunk.empty() && !queue.push(std::move(chunk), reader_abort)) break;
      }
    } catch (...) {
      reader_error = std::current_exception();
    }
    queue.close();
  });
  struct Joiner {
    std::thread& t;
    std::atomic<bool>& abort;
    ChunkQueue& q;
    ~Joiner() {
      abort.store(true);
      q.discard();
      if (t.joinable()) t.join();
    }
  } joiner{reader, reader_abort, queue};

  std::vector<wire::SampleFrame> frames;
  std::vector<double> live_frame(n_ch);
  std::vector<double> sqa_buf;
  EndReason end = EndReason::source_ended;
  bool done = false;
  while (!done) {
    std::string chunk;
    if (!queue.pop(chunk, std::chrono::milliseconds(50))) break;
    apply_marks();
    if (chunk.empty()) {
      if (stop_.load() && queue.closed_and_empty()) {
        end = EndReason::stopped;
        break;
      }
      continue;
    }
    frames.clear();
    decoder.feed_into(chunk, frames);
    sqa_buf.clear();
    for (const auto& f : frames) {
      if (next_row >= target) {
        done = true;
        end = EndReason::timer;
        break;
      }
      PendingRow row;
      row.frame.values.resize(n_ch);
      for (std::size_t c = 0; c < n_ch; ++c) {
        row.frame.values[c] = f.values[positions[c]];
        live_frame[c] = static_cast<double>(row.frame.values[c]);
      }
      row.code = code;
      if (sqa_channel) sqa_buf.push_back(live_frame[*sqa_channel]);
      pending.push_back(std::move(row));
      ++next_row;
      received_.store(next_row);
      live.push(live_frame);
      if (setup_.on_progress && next_row % progress_every == 0) setup_.on_progress(next_row);
    }
    if (next_row >= target) {
      done = true;
      end = EndReason::timer;
    }
    if (assessor && !sqa_buf.empty()) {
      const auto bins = assessor->push(sqa_buf);
      if (!bins.empty()) {
        std::vector<std::pair<double, std::int8_t>> out;
        std::vector<double> probs;
        for (const auto& b : bins) {
          const auto label = static_cast<std::int8_t>(b.quality.label);
          labels.push_back(label);
          out.emplace_back(b.start, label);
          probs.push_back(b.quality.prob_bad);
        }
        publish(msg::sqi(out, probs));
      }
    }
    write_ready(false);
  }
  if (!done && stop_.load() && end != EndReason::timer) end = EndReason::stopped;

  reader_abort.store(true);
  queue.discard();
  if (reader.joinable()) reader.join();
  if (reader_error && end == EndReason::source_ended) std::rethrow_exception(reader_error);

  apply_marks();
  if (next_row > 0) close_mark(next_row - 1);
  write_ready(true);
  live.flush_plot();
  writer.finalize();

  result.rows = writer.rows_written();
  result.frames_dropped = decoder.stats().frames_dropped;
  result.end = end;
  if (setup_.on_progress) setup_.on_progress(result.rows);
  return result;
}

}  // namespace physiort::app
