#include "physiort/app/live.hpp"

#include <algorithm>
#include <cmath>

#include "physiort/app/hub.hpp"
#include "physiort/error.hpp"

namespace physiort::app {

using config::FeedbackMetric;
using config::SignalKind;

double biofeedback_norm(double value, const config::BiofeedbackSpec& spec) noexcept {
  const double t = (value - spec.range_lo) / (spec.range_hi - spec.range_lo);
  if (!(t > 0.0)) return 0.0;
  return std::min(t, 1.0);
}

SignalKind feedback_kind(FeedbackMetric metric) noexcept {
  switch (metric) {
    case FeedbackMetric::HR:
    case FeedbackMetric::pNN50: return SignalKind::PPG;
    case FeedbackMetric::RESP_RATE: return SignalKind::RSP;
    case FeedbackMetric::EDA_LEVEL: return SignalKind::EDA;
  }
  return SignalKind::PPG;
}

dsp::Metric feedback_dsp_metric(FeedbackMetric metric) noexcept {
  switch (metric) {
    case FeedbackMetric::HR: return dsp::Metric::HR_BPM;
    case FeedbackMetric::pNN50: return dsp::Metric::PNN50;
    case FeedbackMetric::RESP_RATE: return dsp::Metric::RESP_RATE;
    case FeedbackMetric::EDA_LEVEL: return dsp::Metric::EDA_LEVEL;
  }
  return dsp::Metric::HR_BPM;
}

LiveMetrics::LiveMetrics(std::vector<config::ChannelSpec> channels, double fs, LiveSettings settings, Emit emit)
    : fs_(fs), settings_(std::move(settings)), emit_(std::move(emit)) {
  if (settings_.biofeedback) {
    settings_.window_s = settings_.biofeedback->window_seconds;
    settings_.step_s = settings_.biofeedback->step_seconds;
  }
  if (!(settings_.window_s > 0.0) || !(settings_.step_s > 0.0) || settings_.step_s > settings_.window_s) {
    throw Error(Errc::InvariantViolation, "live window and step must satisfy 0 < step <= window");
  }
  win_ = static_cast<std::size_t>(std::llround(settings_.window_s * fs_));
  step_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(settings_.step_s * fs_)));
  decim_ = static_cast<std::size_t>(std::ceil(fs_ / kPlotRateHz - 1e-9));
  plot_batch_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(kPlotBatchSeconds * fs_ / decim_)));

  std::optional<dsp::BiquadCascade> cascade;
  for (auto& spec : channels) {
    Channel ch;
    ch.spec = spec;
    if (spec.kind == SignalKind::PPG) {
      if (!cascade) cascade = dsp::design_bandpass(fs_);
      ch.filter.emplace(*cascade);
    }
    ch.raw_ring.assign(win_, 0.0);
    if (ch.filter) ch.filt_ring.assign(win_, 0.0);
    ch.plotted = std::find(settings_.plot_channels.begin(), settings_.plot_channels.end(), spec.name) !=
                 settings_.plot_channels.end();
    channels_.push_back(std::move(ch));
  }
}

void LiveMetrics::push(const std::vector<double>& frame) {
  if (frame.size() != channels_.size()) throw Error(Errc::ShapeViolation, "frame width does not match channels");
  const bool plot_tick = n_ % decim_ == 0;
  for (std::size_t c = 0; c < channels_.size(); ++c) {
    auto& ch = channels_[c];
    const double x = frame[c];
    double y = x;
    if (ch.filter) {
      if (!ch.primed) {
        ch.filter->prime(x);
        ch.primed = true;
      }
      y = ch.filter->step(x);
      ch.filt_ring[head_] = y;
    }
    ch.raw_ring[head_] = x;
    if (ch.plotted && plot_tick) ch.plot_pending.push_back(y);
  }
  head_ = (head_ + 1) % win_;
  ++n_;
  if (n_ >= win_ && (n_ - win_) % step_ == 0) close_window();
  if (plot_tick) {
    bool full = false;
    for (const auto& ch : channels_) full = full || ch.plot_pending.size() >= plot_batch_;
    if (full) flush_plot();
  }
}

void LiveMetrics::flush_plot() {
  std::map<std::string, std::vector<double>> out;
  for (auto& ch : channels_) {
    if (!ch.plotted || ch.plot_pending.empty()) continue;
    out[ch.spec.name] = std::move(ch.plot_pending);
    ch.plot_pending.clear();
  }
  if (out.empty()) return;
  const std::size_t count = out.begin()->second.size();
  emit_(msg::samples(static_cast<double>(plot_t0_sample_) / fs_, static_cast<double>(decim_) / fs_, out));
  plot_t0_sample_ += count * decim_;
}

std::vector<double> LiveMetrics::linear(const std::vector<double>& ring) const {
  // head_ is the oldest sample once the ring is full.
  std::vector<double> out(ring.size());
  std::rotate_copy(ring.begin(), ring.begin() + static_cast<std::ptrdiff_t>(head_), ring.end(), out.begin());
  return out;
}

void LiveMetrics::close_window() {
  const double t_end = static_cast<double>(n_) / fs_;
  const double start = static_cast<double>(n_ - win_) / fs_;
  const double length = static_cast<double>(win_) / fs_;
  const bool want_pnn50 = settings_.biofeedback && settings_.biofeedback->metric == FeedbackMetric::pNN50;
  std::optional<double> feedback;
  bool feedback_found = false;
  const SignalKind fb_kind = settings_.biofeedback ? feedback_kind(settings_.biofeedback->metric) : SignalKind::PPG;
  const dsp::Metric fb_metric = settings_.biofeedback ? feedback_dsp_metric(settings_.biofeedback->metric)
                                                      : dsp::Metric::HR_BPM;

  auto report = [&](const Channel& ch, dsp::Metric m, const std::optional<double>& v) {
    emit_(msg::metric(t_end, ch.spec.name, m, v));
    if (settings_.biofeedback && !feedback_found && ch.spec.kind == fb_kind && m == fb_metric) {
      feedback_found = true;
      feedback = v;
    }
  };

  for (const auto& ch : channels_) {
    const auto raw = linear(ch.raw_ring);
    switch (ch.spec.kind) {
      case SignalKind::PPG: {
        dsp::SampleSeries filtered{linear(ch.filt_ring), fs_, start};
        std::optional<dsp::IbiSeries> ibis;
        try {
          ibis = dsp::detect_peaks(filtered);
        } catch (const Error&) {
        }
        report(ch, dsp::Metric::HR_BPM, ibis ? dsp::hr_from_window(*ibis, start, length).value : std::nullopt);
        if (want_pnn50) {
          report(ch, dsp::Metric::PNN50, ibis ? dsp::pnn50_from_window(*ibis, start, length).value : std::nullopt);
        }
        if (length >= dsp::kPsqiMinSeconds - 1e-9) {
          dsp::SampleSeries rs{raw, fs_, start};
          report(ch, dsp::Metric::PSQI, dsp::psqi_from_window(rs, 0, raw.size()).value);
        }
        break;
      }
      case SignalKind::EDA: report(ch, dsp::Metric::EDA_LEVEL, dsp::eda_level(raw)); break;
      case SignalKind::RSP: report(ch, dsp::Metric::RESP_RATE, dsp::respiration_rate_bpm(raw, fs_)); break;
    }
  }
  if (feedback) {
    emit_(msg::biofeedback(t_end, settings_.biofeedback->metric, *feedback,
                           biofeedback_norm(*feedback, *settings_.biofeedback)));
  }
}

}  // namespace physiort::app
