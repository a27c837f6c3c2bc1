#include "physiort/app/source.hpp"

#include <fcntl.h>
#include <poll.h>
#include <termios.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "physiort/error.hpp"
#include "physiort/synth.hpp"

namespace physiort::app {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<std::size_t> wire_positions(const std::vector<config::ChannelSpec>& channels) {
  std::vector<std::size_t> order(channels.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return channels[a].adc_index < channels[b].adc_index; });
  std::vector<std::size_t> pos(channels.size());
  for (std::size_t p = 0; p < order.size(); ++p) pos[order[p]] = p;
  return pos;
}

// ---------------------------------------------------------------------------

SimulatorSource::SimulatorSource(std::vector<config::ChannelSpec> channels, double fs, int adc_bits,
                                 config::SimulatorSettings settings, std::uint64_t stream_seed,
                                 std::optional<std::uint64_t> frame_limit)
    : channels_(std::move(channels)),
      positions_(wire_positions(channels_)),
      fs_(fs),
      adc_bits_(adc_bits),
      settings_(settings),
      stream_seed_(stream_seed),
      limit_(frame_limit) {}

void SimulatorSource::fill_block() {
  std::size_t n = static_cast<std::size_t>(std::llround(kBlockSeconds * fs_));
  if (limit_) n = static_cast<std::size_t>(std::min<std::uint64_t>(n, *limit_ - emitted_));
  const double seconds = static_cast<double>(n) / fs_;
  block_.assign(channels_.size(), {});
  for (std::size_t c = 0; c < channels_.size(); ++c) {
    const std::uint64_t seed =
        mix(settings_.seed ^ mix(stream_seed_ ^ mix(static_cast<std::uint64_t>(channels_[c].adc_index) ^ mix(block_index_))));
    dsp::SampleSeries s;
    switch (channels_[c].kind) {
      case config::SignalKind::PPG: {
        synth::PpgSpec spec;
        spec.fs = fs_;
        spec.duration = seconds;
        spec.hr_bpm = settings_.hr_bpm;
        spec.ibi_jitter_ms = settings_.ibi_jitter_ms;
        spec.snr_db = settings_.snr_db;
        spec.seed = seed;
        s = synth::generate_ppg(spec).samples;
        break;
      }
      case config::SignalKind::EDA: {
        synth::EdaSpec spec;
        spec.fs = fs_;
        spec.duration = seconds;
        spec.seed = seed;
        s = synth::generate_eda(spec);
        break;
      }
      case config::SignalKind::RSP: {
        synth::RspSpec spec;
        spec.fs = fs_;
        spec.duration = seconds;
        spec.seed = seed;
        s = synth::generate_rsp(spec);
        break;
      }
    }
    s.data.resize(n, s.data.empty() ? 0.5 : s.data.back());
    block_[c] = synth::quantize(s.data, adc_bits_);
  }
  block_pos_ = 0;
  ++block_index_;
}

void SimulatorSource::emit(std::string& out, std::uint64_t n) {
  wire::SampleFrame frame;
  frame.values.resize(channels_.size());
  for (std::uint64_t i = 0; i < n; ++i) {
    if (block_.empty() || block_pos_ >= block_[0].size()) fill_block();
    for (std::size_t c = 0; c < channels_.size(); ++c) frame.values[positions_[c]] = block_[c][block_pos_];
    ++block_pos_;
    out += wire::encode_frame(frame, adc_bits_);
    ++emitted_;
  }
}

bool SimulatorSource::read(std::string& out, std::chrono::milliseconds timeout) {
  if (limit_ && emitted_ >= *limit_) return false;
  const std::uint64_t remaining = limit_ ? *limit_ - emitted_ : UINT64_MAX;
  if (!settings_.paced) {
    emit(out, std::min<std::uint64_t>(remaining, 1024));
    return true;
  }
  const auto now = std::chrono::steady_clock::now();
  if (!t0_) t0_ = now;
  auto due_at = [&](std::uint64_t frames) {
    return *t0_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                      std::chrono::duration<double>(static_cast<double>(frames) / fs_));
  };
  // Frame k is due at t0 + k / fs.
  const auto next_due = due_at(emitted_);
  if (next_due > now) std::this_thread::sleep_until(std::min(next_due, now + timeout));
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - *t0_).count();
  const auto due = static_cast<std::uint64_t>(std::floor(elapsed * fs_)) + 1;
  if (due > emitted_) emit(out, std::min(remaining, due - emitted_));
  return true;
}

// ---------------------------------------------------------------------------

ReplaySource::ReplaySource(const std::filesystem::path& path, double fs, bool paced) : fs_(fs), paced_(paced) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot open replay file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  data_ = ss.str();
}

bool ReplaySource::read(std::string& out, std::chrono::milliseconds timeout) {
  if (pos_ >= data_.size()) return false;
  if (!paced_) {
    const std::size_t n = std::min<std::size_t>(data_.size() - pos_, 64 * 1024);
    out.append(data_, pos_, n);
    pos_ += n;
    return true;
  }
  const auto now = std::chrono::steady_clock::now();
  if (!t0_) t0_ = now;
  const auto next_due = *t0_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                   std::chrono::duration<double>(static_cast<double>(lines_) / fs_));
  if (next_due > now) std::this_thread::sleep_until(std::min(next_due, now + timeout));
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - *t0_).count();
  const auto due = static_cast<std::uint64_t>(std::floor(elapsed * fs_)) + 1;
  while (lines_ < due && pos_ < data_.size()) {
    const auto nl = data_.find('\n', pos_);
    const std::size_t end = nl == std::string::npos ? data_.size() : nl + 1;
    out.append(data_, pos_, end - pos_);
    pos_ = end;
    ++lines_;
  }
  return true;
}

// ---------------------------------------------------------------------------

namespace {

speed_t baud_constant(int baud) {
  switch (baud) {
    case 9600: return B9600;
    case 19200: return B19200;
    case 38400: return B38400;
    case 57600: return B57600;
    case 115200: return B115200;
    case 230400: return B230400;
    case 460800: return B460800;
    case 500000: return B500000;
    case 576000: return B576000;
    case 921600: return B921600;
    case 1000000: return B1000000;
    case 1152000: return B1152000;
    case 1500000: return B1500000;
    case 2000000: return B2000000;
    default: throw Error(Errc::TransportError, "baudrate " + std::to_string(baud) + " is not a standard serial rate");
  }
}

}  // namespace

SerialSource::SerialSource(const std::string& device, int baudrate) {
  const speed_t speed = baud_constant(baudrate);
  fd_ = ::open(device.c_str(), O_RDWR | O_NOCTTY | O_NONBLOCK);
  if (fd_ < 0) throw Error(Errc::TransportError, "cannot open " + device + ": " + std::strerror(errno));
  termios tio{};
  if (::tcgetattr(fd_, &tio) != 0) {
    const int err = errno;
    ::close(fd_);
    throw Error(Errc::TransportError, device + " is not a serial device: " + std::strerror(err));
  }
  ::cfmakeraw(&tio);
  tio.c_cflag |= CLOCAL | CREAD;
  tio.c_cflag &= ~static_cast<tcflag_t>(CSTOPB | PARENB);
  tio.c_cc[VMIN] = 0;
  tio.c_cc[VTIME] = 0;
  ::cfsetispeed(&tio, speed);
  ::cfsetospeed(&tio, speed);
  if (::tcsetattr(fd_, TCSANOW, &tio) != 0) {
    const int err = errno;
    ::close(fd_);
    throw Error(Errc::TransportError, "cannot configure " + device + ": " + std::strerror(err));
  }
}

SerialSource::~SerialSource() {
  if (fd_ >= 0) ::close(fd_);
}

bool SerialSource::read(std::string& out, std::chrono::milliseconds timeout) {
  pollfd p{fd_, POLLIN, 0};
  const int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
  if (rc < 0) {
    if (errno == EINTR) return true;
    throw Error(Errc::TransportError, std::string("poll failed: ") + std::strerror(errno));
  }
  if (rc == 0) return true;
  char buf[4096];
  const ssize_t n = ::read(fd_, buf, sizeof buf);
  if (n > 0) {
    out.append(buf, static_cast<std::size_t>(n));
    return true;
  }
  if (n < 0 && (errno == EAGAIN || errno == EINTR)) return true;
  // Hang-up (n == 0) or EIO after the far end closed.
  return false;
}

std::unique_ptr<ByteSource> open_source(const config::AcqConfig& acq, const std::vector<config::ChannelSpec>& channels,
                                        std::uint64_t stream_seed, std::optional<std::uint64_t> frame_limit) {
  switch (acq.transport) {
    case config::Transport::simulator:
      return std::make_unique<SimulatorSource>(channels, acq.sampling_rate, acq.adc_bits, acq.simulator, stream_seed,
                                               frame_limit);
    case config::Transport::replay:
      if (!acq.replay_path) throw Error(Errc::TransportError, "replay transport needs replay_path");
      return std::make_unique<ReplaySource>(*acq.replay_path, acq.sampling_rate, acq.simulator.paced);
    case config::Transport::serial:
      if (!acq.serial_port) throw Error(Errc::TransportError, "serial transport needs serial_port");
      return std::make_unique<SerialSource>(*acq.serial_port, acq.baudrate);
  }
  throw Error(Errc::TransportError, "unknown transport");
}

}  // namespace physiort::app
