#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace physiort::dsp {

// Uniformly sampled, real-valued signal. t0 is session-relative.
struct SampleSeries {
  std::vector<double> data;
  double fs = 1.0;
  double t0 = 0.0;

  std::size_t size() const noexcept { return data.size(); }
  double duration() const noexcept { return static_cast<double>(data.size()) / fs; }
  double time_of(std::size_t i) const noexcept { return t0 + static_cast<double>(i) / fs; }
};

// ---------------------------------------------------------------------------
// Band-pass filtering

constexpr double kPulseBandLowHz = 0.7;
constexpr double kPulseBandHighHz = 4.0;
constexpr int kPulseBandOrder = 3;

// y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]
struct BiquadSection {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;

  std::complex<double> response(double omega) const;  // omega in rad/sample
  bool stable() const;
};

struct BandpassDesign {
  int order = kPulseBandOrder;
  double low_hz = kPulseBandLowHz;
  double high_hz = kPulseBandHighHz;
  double fs = 0.0;
};

struct BiquadCascade {
  std::vector<BiquadSection> sections;
  BandpassDesign design;

  std::complex<double> response(double f_hz) const;
  double magnitude(double f_hz) const { return std::abs(response(f_hz)); }
};

// Butterworth band-pass of the given prototype order (2*order poles), realized
// as second-order sections via the bilinear transform with pre-warping.
// Throws NyquistViolation when the upper edge does not fit below fs/2.
BiquadCascade design_bandpass(double fs, double low_hz = kPulseBandLowHz, double high_hz = kPulseBandHighHz,
                              int order = kPulseBandOrder);

// Streaming filter (transposed direct form II per section). Feeding the same
// samples in any chunking produces identical output.
class CausalFilter {
 public:
  explicit CausalFilter(BiquadCascade cascade);

  // Sets the state to the steady state for a constant input x0, which avoids
  // the start-up transient of a DC offset.
  void prime(double x0);
  void reset();
  double step(double x);
  void process(std::span<const double> in, std::span<double> out);
  std::vector<double> process(std::span<const double> in);

  const BiquadCascade& cascade() const noexcept { return cascade_; }

 private:
  struct State {
    double s1 = 0, s2 = 0;
  };
  BiquadCascade cascade_;
  std::vector<State> state_;
};

// Fresh causal filter primed with the first sample.
SampleSeries filter_causal(const BiquadCascade& cascade, const SampleSeries& x);
// Forward-backward filtering with odd-extension padding; zero phase, squared magnitude.
SampleSeries filter_zero_phase(const BiquadCascade& cascade, const SampleSeries& x);

// ---------------------------------------------------------------------------
// Beats and inter-beat intervals

constexpr double kMinIbiMs = 273.0;
constexpr double kMaxIbiMs = 2000.0;

struct Ibi {
  double ms = 0.0;
  double t_end = 0.0;             // time of the closing peak (seconds)
  bool follows_previous = false;  // shares its opening peak with the previous interval
};

struct IbiSeries {
  std::vector<std::size_t> peak_indices;
  std::vector<double> peak_times;  // seconds, sub-sample refined
  std::vector<Ibi> ibis;

  std::vector<double> ibis_ms() const;
};

struct PeakDetectorParams {
  double percentile_window_s = 3.0;
  double percentile = 0.75;
  double threshold_ratio = 0.5;
  // Pulse amplitude is the running maximum over +-envelope_half_width_s. The
  // systolic plateau then covers 2 * width / max_ibi > 1 - percentile of every
  // percentile window, so diastolic bumps never set the threshold.
  double envelope_half_width_s = 0.3;
  double refractory_s = 0.27;
  double min_ibi_ms = kMinIbiMs;
  double max_ibi_ms = kMaxIbiMs;
};

// Local maxima of a band-passed signal above half the rolling 75th percentile
// of the pulse amplitude envelope, with a refractory period. Intervals shorter than min_ibi_ms drop their
// closing peak; intervals longer than max_ibi_ms break the beat chain.
// Throws TooShort for less than three seconds of data.
IbiSeries detect_peaks(const SampleSeries& filtered, const PeakDetectorParams& params = {});

// ---------------------------------------------------------------------------
// Windowed metrics

enum class Metric { HR_BPM, PNN50, PSQI, RESP_RATE, EDA_LEVEL };
std::string_view to_string(Metric metric) noexcept;
Metric parse_metric(std::string_view text);

struct MetricWindow {
  double start = 0.0;
  double length = 0.0;
  Metric metric = Metric::HR_BPM;
  std::optional<double> value;
  int n_beats = 0;
};

constexpr std::size_t kMinIbisForHr = 4;
constexpr double kPsqiBandLowHz = 1.0;
constexpr double kPsqiBandHighHz = 2.25;
constexpr double kPsqiTotalLowHz = 0.0;
constexpr double kPsqiTotalHighHz = 8.0;
constexpr double kPsqiMinSeconds = 8.0;

// 60000 / mean(ibis); absent with fewer than four intervals.
std::optional<double> heart_rate_bpm(std::span<const double> ibis_ms);
// Percentage of successive pairs differing by more than 50 ms; absent below two intervals.
std::optional<double> pnn50(std::span<const double> ibis_ms);
// Relative power in [1, 2.25] Hz over [0, 8] Hz of the mean-removed
// rectangular-window periodogram. Absent when the signal carries no power.
std::optional<double> psqi(std::span<const double> raw, double fs);

// Interval selection is by closing-peak time in [start, start + length).
MetricWindow hr_from_window(const IbiSeries& ibis, double start, double length);
// Pairs are only counted between intervals that share a peak.
MetricWindow pnn50_from_window(const IbiSeries& ibis, double start, double length);
MetricWindow psqi_from_window(const SampleSeries& raw, std::size_t begin, std::size_t end);

// Breaths per minute from rising zero crossings of the mean-removed signal.
std::optional<double> respiration_rate_bpm(std::span<const double> x, double fs);
std::optional<double> eda_level(std::span<const double> x);

struct WindowRange {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
};

// Maximal list of full windows; a trailing partial window is dropped.
// Throws WindowTooLong when a single window does not fit.
std::vector<WindowRange> windows(std::size_t n_samples, double fs, double win_s, double step_s);

}  // namespace physiort::dsp
