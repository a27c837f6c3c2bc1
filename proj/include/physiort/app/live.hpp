#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "physiort/config.hpp"
#include "physiort/dsp.hpp"

namespace physiort::app {

// (value - lo) / (hi - lo), clamped to [0, 1].
double biofeedback_norm(double value, const config::BiofeedbackSpec& spec) noexcept;

config::SignalKind feedback_kind(config::FeedbackMetric metric) noexcept;
dsp::Metric feedback_dsp_metric(config::FeedbackMetric metric) noexcept;

constexpr double kPlotRateHz = 30.0;
constexpr double kPlotBatchSeconds = 0.2;

struct LiveSettings {
  double window_s = 10.0;
  double step_s = 2.0;
  std::optional<config::BiofeedbackSpec> biofeedback;  // overrides window and step
  std::vector<std::string> plot_channels;
};

// Windowed metrics over the causally filtered stream. A window closes at every
// sample n with n >= W and (n - W) % S == 0; its results are emitted as gateway
// messages through `emit`, stamped with the window end.
class LiveMetrics {
 public:
  using Emit = std::function<void(const nlohmann::json&)>;

  LiveMetrics(std::vector<config::ChannelSpec> channels, double fs, LiveSettings settings, Emit emit);

  // One frame in declared channel order.
  void push(const std::vector<double>& frame);
  // Sends any buffered plot samples.
  void flush_plot();

  std::uint64_t samples_seen() const noexcept { return n_; }
  std::size_t window_samples() const noexcept { return win_; }
  std::size_t step_samples() const noexcept { return step_; }
  std::size_t decimation() const noexcept { return decim_; }

 private:
  struct Channel {
    config::ChannelSpec spec;
    std::optional<dsp::CausalFilter> filter;
    bool primed = false;
    std::vector<double> raw_ring, filt_ring;
    bool plotted = false;
    std::vector<double> plot_pending;
  };

  void close_window();
  std::vector<double> linear(const std::vector<double>& ring) const;

  std::vector<Channel> channels_;
  double fs_;
  LiveSettings settings_;
  Emit emit_;
  std::size_t win_;
  std::size_t step_;
  std::size_t decim_;
  std::size_t plot_batch_;
  std::uint64_t n_ = 0;
  std::size_t head_ = 0;  // next ring slot
  std::uint64_t plot_t0_sample_ = 0;
};

}  // namespace physiort::app
