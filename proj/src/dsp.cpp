#include "physiort/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <numeric>
#include <string>

#include "physiort/error.hpp"

namespace physiort::dsp {

using cplx = std::complex<double>;

// ---------------------------------------------------------------------------
// Biquads

cplx BiquadSection::response(double omega) const {
  const cplx z1 = std::polar(1.0, -omega);
  const cplx z2 = z1 * z1;
  return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
}

bool BiquadSection::stable() const {
  // Jury conditions for a second-order denominator.
  return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2;
}

cplx BiquadCascade::response(double f_hz) const {
  const double omega = 2.0 * std::numbers::pi * f_hz / design.fs;
  cplx h = 1.0;
  for (const auto& s : sections) h *= s.response(omega);
  return h;
}

BiquadCascade design_bandpass(double fs, double low_hz, double high_hz, int order) {
  if (!(fs > 0.0) || !(high_hz < fs / 2.0)) {
    throw Error(Errc::NyquistViolation,
                "band edge " + std::to_string(high_hz) + " Hz must lie below fs/2 = " + std::to_string(fs / 2.0));
  }
  if (!(low_hz > 0.0) || !(low_hz < high_hz) || order < 1) {
    throw Error(Errc::SpecViolation, "band-pass needs 0 < low < high and order >= 1");
  }

  const double pi = std::numbers::pi;
  const double w_lo = std::tan(pi * low_hz / fs);
  const double w_hi = std::tan(pi * high_hz / fs);
  const double bw = w_hi - w_lo;
  const double w0_sq = w_lo * w_hi;

  // Analog prototype poles -> band-pass poles -> z-plane.
  std::vector<cplx> poles;
  for (int k = 1; k <= order; ++k) {
    const cplx p = std::polar(1.0, pi * (2.0 * k + order - 1) / (2.0 * order));
    const cplx pb = p * bw;
    const cplx disc = std::sqrt(pb * pb - 4.0 * w0_sq);
    for (const cplx s : {(pb + disc) / 2.0, (pb - disc) / 2.0}) poles.push_back((1.0 + s) / (1.0 - s));
  }

  constexpr double kImagTol = 1e-12;
  std::vector<cplx> upper, real;
  for (const cplx& z : poles) {
    if (z.imag() > kImagTol) upper.push_back(z);
    else if (std::abs(z.imag()) <= kImagTol) real.push_back(z);
  }
  std::sort(upper.begin(), upper.end(), [](cplx a, cplx b) { return a.real() < b.real(); });
  std::sort(real.begin(), real.end(), [](cplx a, cplx b) { return a.real() < b.real(); });

  BiquadCascade cascade;
  cascade.design = {order, low_hz, high_hz, fs};
  // Each section carries one zero at z = 1 and one at z = -1.
  for (const cplx& z : upper) {
    cascade.sections.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
  }
  for (std::size_t i = 0; i + 1 < real.size(); i += 2) {
    const double r1 = real[i].real(), r2 = real[i + 1].real();
    cascade.sections.push_back({1.0, 0.0, -1.0, -(r1 + r2), r1 * r2});
  }

  // Unity gain at the pre-warped centre frequency.
  const double f0 = fs / pi * std::atan(std::sqrt(w0_sq));
  const double gain = 1.0 / std::abs(cascade.response(f0));
  const double per_section = std::pow(gain, 1.0 / static_cast<double>(cascade.sections.size()));
  for (auto& s : cascade.sections) {
    s.b0 *= per_section;
    s.b1 *= per_section;
    s.b2 *= per_section;
  }
  return cascade;
}

CausalFilter::CausalFilter(BiquadCascade cascade)
    : cascade_(std::move(cascade)), state_(cascade_.sections.size()) {}

void CausalFilter::reset() { std::fill(state_.begin(), state_.end(), State{}); }

void CausalFilter::prime(double x0) {
  double u = x0;
  for (std::size_t k = 0; k < state_.size(); ++k) {
    const auto& s = cascade_.sections[k];
    const double y = u * (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    state_[k].s2 = s.b2 * u - s.a2 * y;
    state_[k].s1 = s.b1 * u - s.a1 * y + state_[k].s2;
    u = y;
  }
}

double CausalFilter::step(double x) {
  double u = x;
  for (std::size_t k = 0; k < state_.size(); ++k) {
    const auto& s = cascade_.sections[k];
    auto& st = state_[k];
    const double y = s.b0 * u + st.s1;
    st.s1 = s.b1 * u - s.a1 * y + st.s2;
    st.s2 = s.b2 * u - s.a2 * y;
    u = y;
  }
  return u;
}

void CausalFilter::process(std::span<const double> in, std::span<double> out) {
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = step(in[i]);
}

std::vector<double> CausalFilter::process(std::span<const double> in) {
  std::vector<double> out(in.size());
  process(in, out);
  return out;
}

SampleSeries filter_causal(const BiquadCascade& cascade, const SampleSeries& x) {
  SampleSeries y{std::vector<double>(x.size()), x.fs, x.t0};
  if (x.data.empty()) return y;
  CausalFilter f(cascade);
  f.prime(x.data.front());
  f.process(x.data, y.data);
  return y;
}

SampleSeries filter_zero_phase(const BiquadCascade& cascade, const SampleSeries& x) {
  const std::size_t n = x.size();
  SampleSeries y{{}, x.fs, x.t0};
  if (n == 0) return y;

  const std::size_t pad = std::min<std::size_t>(n - 1, 3 * (2 * cascade.sections.size() + 1));
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x.data.front() - x.data[i]);
  ext.insert(ext.end(), x.data.begin(), x.data.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x.data.back() - x.data[n - 1 - i]);

  CausalFilter f(cascade);
  f.prime(ext.front());
  std::vector<double> fwd = f.process(ext);
  std::reverse(fwd.begin(), fwd.end());
  f.reset();
  f.prime(fwd.front());
  std::vector<double> bwd = f.process(fwd);
  std::reverse(bwd.begin(), bwd.end());

  y.data.assign(bwd.begin() + static_cast<std::ptrdiff_t>(pad), bwd.begin() + static_cast<std::ptrdiff_t>(pad + n));
  return y;
}

// ---------------------------------------------------------------------------
// Peaks

std::vector<double> IbiSeries::ibis_ms() const {
  std::vector<double> out;
  out.reserve(ibis.size());
  for (const auto& ibi : ibis) out.push_back(ibi.ms);
  return out;
}

IbiSeries detect_peaks(const SampleSeries& x, const PeakDetectorParams& params) {
  const std::size_t n = x.size();
  if (x.duration() < 3.0) throw Error(Errc::TooShort, "peak detection needs at least 3 s of data");

  const auto half = static_cast<std::size_t>(std::llround(params.percentile_window_s * x.fs / 2.0));
  const auto refractory = params.refractory_s;

  // Running maximum over [i - e, i + e] by a monotone deque.
  const auto e = static_cast<std::size_t>(std::llround(params.envelope_half_width_s * x.fs));
  std::vector<double> envelope(n);
  std::deque<std::size_t> run;
  for (std::size_t j = 0; j < n + e; ++j) {
    if (j < n) {
      while (!run.empty() && x.data[run.back()] <= x.data[j]) run.pop_back();
      run.push_back(j);
    }
    if (j < e) continue;
    const std::size_t i = j - e;
    while (run.front() + e < i) run.pop_front();
    envelope[i] = x.data[run.front()];
  }

  std::vector<double> scratch;
  auto threshold_at = [&](std::size_t i) {
    const std::size_t lo = i > half ? i - half : 0;
    const std::size_t hi = std::min(n, i + half + 1);
    scratch.assign(envelope.begin() + static_cast<std::ptrdiff_t>(lo), envelope.begin() + static_cast<std::ptrdiff_t>(hi));
    const auto rank = static_cast<std::size_t>(params.percentile * static_cast<double>(scratch.size() - 1));
    std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(rank), scratch.end());
    return params.threshold_ratio * scratch[rank];
  };

  struct Candidate {
    std::size_t index;
    double time;
    double value;
  };
  std::vector<Candidate> accepted;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double v = x.data[i];
    // Rising edge then non-rising: the first sample of a plateau counts once.
    if (!(v > x.data[i - 1] && v >= x.data[i + 1]) || !(v > 0.0)) continue;
    if (!(v > threshold_at(i))) continue;

    const double y0 = x.data[i - 1], y2 = x.data[i + 1];
    const double denom = y0 - 2.0 * v + y2;
    double delta = denom < 0.0 ? 0.5 * (y0 - y2) / denom : 0.0;
    delta = std::clamp(delta, -0.5, 0.5);
    Candidate c{i, x.t0 + (static_cast<double>(i) + delta) / x.fs, v};

    if (!accepted.empty() && c.time - accepted.back().time < refractory) {
      if (c.value > accepted.back().value) accepted.back() = c;
      continue;
    }
    accepted.push_back(c);
  }

  IbiSeries out;
  bool chain_open = false;
  for (const auto& c : accepted) {
    if (!out.peak_times.empty()) {
      const double ms = (c.time - out.peak_times.back()) * 1000.0;
      if (ms < params.min_ibi_ms) continue;
      if (ms <= params.max_ibi_ms) {
        out.ibis.push_back({ms, c.time, chain_open});
        chain_open = true;
      } else {
        chain_open = false;
      }
    }
    out.peak_indices.push_back(c.index);
    out.peak_times.push_back(c.time);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

std::string_view to_string(Metric metric) noexcept {
  switch (metric) {
    case Metric::HR_BPM: return "HR_BPM";
    case Metric::PNN50: return "PNN50";
    case Metric::PSQI: return "PSQI";
    case Metric::RESP_RATE: return "RESP_RATE";
    case Metric::EDA_LEVEL: return "EDA_LEVEL";
  }
  return "?";
}

Metric parse_metric(std::string_view text) {
  for (Metric m : {Metric::HR_BPM, Metric::PNN50, Metric::PSQI, Metric::RESP_RATE, Metric::EDA_LEVEL}) {
    if (to_string(m) == text) return m;
  }
  throw Error(Errc::SchemaViolation, "unknown metric '" + std::string(text) + "'", "metrics");
}

std::optional<double> heart_rate_bpm(std::span<const double> ibis_ms) {
  if (ibis_ms.size() < kMinIbisForHr) return std::nullopt;
  const double mean = std::accumulate(ibis_ms.begin(), ibis_ms.end(), 0.0) / static_cast<double>(ibis_ms.size());
  return 60000.0 / mean;
}

std::optional<double> pnn50(std::span<const double> ibis_ms) {
  if (ibis_ms.size() < 2) return std::nullopt;
  std::size_t over = 0;
  for (std::size_t i = 0; i + 1 < ibis_ms.size(); ++i) {
    if (std::abs(ibis_ms[i + 1] - ibis_ms[i]) > 50.0) ++over;
  }
  return 100.0 * static_cast<double>(over) / static_cast<double>(ibis_ms.size() - 1);
}

namespace {

bool in_band(std::size_t k, std::size_t n, double fs, double lo, double hi) {
  const double f = static_cast<double>(k) * fs / static_cast<double>(n);
  return f >= lo - 1e-9 && f <= hi + 1e-9;
}

}  // namespace

std::optional<double> psqi(std::span<const double> raw, double fs) {
  const std::size_t n = raw.size();
  if (static_cast<double>(n) / fs < kPsqiMinSeconds - 1e-9) {
    throw Error(Errc::TooShort, "pSQI needs a window of at least 8 s");
  }
  const double mean = std::accumulate(raw.begin(), raw.end(), 0.0) / static_cast<double>(n);

  // Only bins up to 8 Hz are needed, so a direct partial DFT is O(n * bins).
  const auto k_max = std::min<std::size_t>(
      n / 2, static_cast<std::size_t>(std::floor(kPsqiTotalHighHz * static_cast<double>(n) / fs + 1e-9)));
  std::vector<double> cos_t(n), sin_t(n);
  for (std::size_t m = 0; m < n; ++m) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n);
    cos_t[m] = std::cos(a);
    sin_t[m] = std::sin(a);
  }
  double band = 0.0, total = 0.0;
  for (std::size_t k = 0; k <= k_max; ++k) {
    double re = 0.0, im = 0.0;
    std::size_t idx = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = raw[i] - mean;
      re += v * cos_t[idx];
      im -= v * sin_t[idx];
      idx += k;
      if (idx >= n) idx -= n;
    }
    const double p = re * re + im * im;
    if (in_band(k, n, fs, kPsqiTotalLowHz, kPsqiTotalHighHz)) total += p;
    if (in_band(k, n, fs, kPsqiBandLowHz, kPsqiBandHighHz)) band += p;
  }
  // Relative threshold: the residual of mean removal is rounding noise.
  double energy = 0.0;
  for (double v : raw) energy += (v - mean) * (v - mean);
  if (!(total > 0.0) || energy <= 1e-24 * static_cast<double>(n) * (mean * mean + 1.0)) return std::nullopt;
  return 100.0 * band / total;
}

MetricWindow hr_from_window(const IbiSeries& ibis, double start, double length) {
  std::vector<double> in_window;
  for (const auto& ibi : ibis.ibis) {
    if (ibi.t_end >= start && ibi.t_end < start + length) in_window.push_back(ibi.ms);
  }
  MetricWindow w{start, length, Metric::HR_BPM, heart_rate_bpm(in_window), static_cast<int>(in_window.size())};
  return w;
}

MetricWindow pnn50_from_window(const IbiSeries& ibis, double start, double length) {
  std::size_t count = 0, pairs = 0, over = 0;
  const Ibi* prev = nullptr;
  for (const auto& ibi : ibis.ibis) {
    if (!(ibi.t_end >= start && ibi.t_end < start + length)) {
      prev = nullptr;
      continue;
    }
    ++count;
    if (prev && ibi.follows_previous) {
      ++pairs;
      if (std::abs(ibi.ms - prev->ms) > 50.0) ++over;
    }
    prev = &ibi;
  }
  MetricWindow w{start, length, Metric::PNN50, std::nullopt, static_cast<int>(count)};
  if (count >= 2 && pairs > 0) w.value = 100.0 * static_cast<double>(over) / static_cast<double>(pairs);
  return w;
}

MetricWindow psqi_from_window(const SampleSeries& raw, std::size_t begin, std::size_t end) {
  std::span<const double> view(raw.data.data() + begin, end - begin);
  return {raw.time_of(begin), static_cast<double>(end - begin) / raw.fs, Metric::PSQI, psqi(view, raw.fs), 0};
}

std::optional<double> respiration_rate_bpm(std::span<const double> x, double fs) {
  if (x.size() < 2) return std::nullopt;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  std::size_t rising = 0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (x[i - 1] - mean < 0.0 && x[i] - mean >= 0.0) ++rising;
  }
  if (rising == 0) return std::nullopt;
  return 60.0 * static_cast<double>(rising) / (static_cast<double>(x.size()) / fs);
}

std::optional<double> eda_level(std::span<const double> x) {
  if (x.empty()) return std::nullopt;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

std::vector<WindowRange> windows(std::size_t n_samples, double fs, double win_s, double step_s) {
  if (!(win_s > 0.0) || !(step_s > 0.0) || !(fs > 0.0)) {
    throw Error(Errc::SpecViolation, "window and step must be positive");
  }
  const auto win = static_cast<std::size_t>(std::llround(win_s * fs));
  const auto step = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(step_s * fs)));
  if (win == 0 || win > n_samples) {
    throw Error(Errc::WindowTooLong, "window of " + std::to_string(win_s) + " s exceeds the " +
                                         std::to_string(static_cast<double>(n_samples) / fs) + " s signal");
  }
  std::vector<WindowRange> out;
  for (std::size_t b = 0; b + win <= n_samples; b += step) out.push_back({b, b + win});
  return out;
}

}  // namespace physiort::dsp
