#include "physiort/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "physiort/error.hpp"

namespace physiort::synth {

namespace {

constexpr double kBaseline = 0.40;
constexpr double kPulseAmplitude = 0.25;
constexpr double kSystolicSigma = 0.060;
constexpr double kDicroticDelay = 0.250;
constexpr double kDicroticSigma = 0.080;
constexpr double kDicroticRatio = 0.30;
constexpr double kWanderHz = 0.35;
constexpr double kMinIbiSeconds = 0.273;
constexpr double kMaxIbiSeconds = 2.0;

double beat_template(double dt) {
  const double a = dt / kSystolicSigma;
  const double b = (dt - kDicroticDelay) / kDicroticSigma;
  return std::exp(-0.5 * a * a) + kDicroticRatio * std::exp(-0.5 * b * b);
}

std::size_t bin_count(double duration) {
  return static_cast<std::size_t>(std::floor(duration / kQualityBinSeconds + 1e-9));
}

bool overlaps(double a0, double a1, double b0, double b1) { return a0 < b1 && b0 < a1; }

}  // namespace

std::string_view to_string(ArtifactKind kind) noexcept {
  switch (kind) {
    case ArtifactKind::saturation: return "saturation";
    case ArtifactKind::dropout: return "dropout";
    case ArtifactKind::motion_wander: return "motion_wander";
  }
  return "?";
}

std::size_t LabeledSegment::bad_bins() const {
  return static_cast<std::size_t>(std::count(quality_bins.begin(), quality_bins.end(), Quality::bad));
}

LabeledSegment generate_ppg(const PpgSpec& spec) {
  if (!(spec.hr_bpm >= 30.0 && spec.hr_bpm <= 220.0)) {
    throw Error(Errc::SpecViolation, "hr_bpm must lie in [30, 220]", "hr_bpm");
  }
  if (!(spec.fs >= 16.0)) throw Error(Errc::SpecViolation, "fs must be at least 16 Hz", "fs");
  if (!(spec.duration > 0.0)) throw Error(Errc::SpecViolation, "duration must be positive", "duration");
  if (!(spec.ibi_jitter_ms >= 0.0)) throw Error(Errc::SpecViolation, "jitter must be non-negative", "ibi_jitter_ms");

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> jitter(0.0, spec.ibi_jitter_ms / 1000.0);
  const double mean_ibi = 60.0 / spec.hr_bpm;
  auto next_ibi = [&] {
    const double ibi = mean_ibi + (spec.ibi_jitter_ms > 0.0 ? jitter(rng) : 0.0);
    return std::clamp(ibi, kMinIbiSeconds, kMaxIbiSeconds);
  };

  // One beat before t = 0 so its tail is present at the start.
  std::vector<double> beats;
  double t = 0.5 * mean_ibi - next_ibi();
  while (t < spec.duration + 1.0) {
    beats.push_back(t);
    t += next_ibi();
  }

  const auto n = static_cast<std::size_t>(std::llround(spec.duration * spec.fs));
  LabeledSegment seg;
  seg.samples = {std::vector<double>(n, 0.0), spec.fs, 0.0};
  auto& x = seg.samples.data;
  for (double beat : beats) {
    const double lo = beat - 5.0 * kSystolicSigma;
    const double hi = beat + kDicroticDelay + 5.0 * kDicroticSigma;
    const auto i0 = static_cast<std::ptrdiff_t>(std::ceil(lo * spec.fs));
    const auto i1 = static_cast<std::ptrdiff_t>(std::floor(hi * spec.fs));
    for (auto i = std::max<std::ptrdiff_t>(i0, 0); i <= i1 && i < static_cast<std::ptrdiff_t>(n); ++i) {
      x[static_cast<std::size_t>(i)] += kPulseAmplitude * beat_template(static_cast<double>(i) / spec.fs - beat);
    }
    if (beat >= 0.0 && beat < spec.duration) {
      seg.truth_peak_times.push_back(beat);
      seg.truth_peaks.push_back(std::min<std::size_t>(n - 1, static_cast<std::size_t>(std::llround(beat * spec.fs))));
    }
  }
  for (std::size_t i = 1; i < seg.truth_peak_times.size(); ++i) {
    seg.truth_ibis_ms.push_back((seg.truth_peak_times[i] - seg.truth_peak_times[i - 1]) * 1000.0);
  }

  const double mean = n ? std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n) : 0.0;
  double power = 0.0;
  for (double v : x) power += (v - mean) * (v - mean);
  power = n ? power / static_cast<double>(n) : 0.0;
  const double noise_sd = std::sqrt(power / std::pow(10.0, spec.snr_db / 10.0));
  std::normal_distribution<double> noise(0.0, 1.0);
  for (double& v : x) {
    v = std::clamp(kBaseline + v + noise_sd * noise(rng), kRailLow, kRailHigh);
  }

  seg.quality_bins.assign(bin_count(spec.duration), Quality::good);
  return seg;
}

LabeledSegment inject_artifacts(LabeledSegment seg, const ArtifactSpec& art) {
  const double duration = seg.samples.duration();
  std::vector<Burst> bursts = art.bursts;
  for (const auto& b : bursts) {
    if (!(b.length > 0.0) || !(b.start >= 0.0) || b.start + b.length > duration + 1e-9) {
      throw Error(Errc::SpecViolation, "burst must lie within the signal duration", "bursts");
    }
  }
  std::sort(bursts.begin(), bursts.end(), [](const Burst& a, const Burst& b) { return a.start < b.start; });
  std::vector<Burst> all = seg.bursts;
  all.insert(all.end(), bursts.begin(), bursts.end());
  std::sort(all.begin(), all.end(), [](const Burst& a, const Burst& b) { return a.start < b.start; });
  for (std::size_t i = 1; i < all.size(); ++i) {
    if (overlaps(all[i - 1].start, all[i - 1].start + all[i - 1].length, all[i].start, all[i].start + all[i].length)) {
      throw Error(Errc::OverlapViolation, "artifact bursts overlap", "bursts");
    }
  }

  auto& x = seg.samples.data;
  const double fs = seg.samples.fs;
  for (const auto& b : bursts) {
    const double end = b.start + b.length;
    const auto i0 = static_cast<std::size_t>(std::ceil(b.start * fs - 1e-9));
    for (std::size_t i = i0; i < x.size(); ++i) {
      const double t = static_cast<double>(i) / fs;
      if (t >= end) break;
      switch (b.kind) {
        case ArtifactKind::saturation: x[i] = kRailHigh; break;
        case ArtifactKind::dropout: x[i] = kRailLow; break;
        case ArtifactKind::motion_wander:
          x[i] = std::clamp(x[i] + b.amplitude * std::cos(2.0 * std::numbers::pi * kWanderHz * (t - b.start)),
                            kRailLow, kRailHigh);
          break;
      }
    }
    for (std::size_t k = 0; k < seg.quality_bins.size(); ++k) {
      const double b0 = static_cast<double>(k) * kQualityBinSeconds;
      if (overlaps(b.start, end, b0, b0 + kQualityBinSeconds)) seg.quality_bins[k] = Quality::bad;
    }
  }
  seg.bursts = std::move(all);
  return seg;
}

SampleSeries generate_eda(const EdaSpec& spec) {
  if (!(spec.fs > 0.0) || !(spec.duration > 0.0) || spec.phasic_events < 0) {
    throw Error(Errc::SpecViolation, "invalid EDA spec");
  }
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> when(0.0, spec.duration);
  std::vector<double> onsets;
  for (int i = 0; i < spec.phasic_events; ++i) onsets.push_back(when(rng));
  std::sort(onsets.begin(), onsets.end());

  constexpr double kRise = 0.75, kDecay = 4.0;
  // Peak of exp(-t/decay) - exp(-t/rise), used to normalise the response.
  const double t_peak = std::log(kDecay / kRise) * kRise * kDecay / (kDecay - kRise);
  const double peak = std::exp(-t_peak / kDecay) - std::exp(-t_peak / kRise);

  const auto n = static_cast<std::size_t>(std::llround(spec.duration * spec.fs));
  SampleSeries out{std::vector<double>(n), spec.fs, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / spec.fs;
    double v = spec.tonic_level + spec.tonic_drift_per_min * t / 60.0;
    for (double on : onsets) {
      if (t < on) break;
      const double dt = t - on;
      v += spec.phasic_amplitude * (std::exp(-dt / kDecay) - std::exp(-dt / kRise)) / peak;
    }
    out.data[i] = std::clamp(v, kRailLow, kRailHigh);
  }
  return out;
}

SampleSeries generate_rsp(const RspSpec& spec) {
  if (!(spec.fs > 0.0) || !(spec.duration > 0.0) || !(spec.rate_hz > 0.0) || spec.rate_hz >= spec.fs / 2.0) {
    throw Error(Errc::SpecViolation, "invalid respiration spec");
  }
  std::mt19937_64 rng(spec.seed);
  const double am_phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
  const auto n = static_cast<std::size_t>(std::llround(spec.duration * spec.fs));
  SampleSeries out{std::vector<double>(n), spec.fs, 0.0};
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / spec.fs;
    const double envelope = 1.0 + spec.am_depth * std::sin(two_pi * spec.am_rate_hz * t + am_phase);
    out.data[i] = std::clamp(0.5 + spec.amplitude * envelope * std::sin(two_pi * spec.rate_hz * t - std::numbers::pi / 2),
                             kRailLow, kRailHigh);
  }
  return out;
}

std::vector<LabeledSegment> corpus(std::size_t n_segments, double artifact_fraction, std::uint64_t seed) {
  if (!(artifact_fraction >= 0.0 && artifact_fraction <= 1.0)) {
    throw Error(Errc::SpecViolation, "artifact_fraction must lie in [0, 1]");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(n_segments);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_art = static_cast<std::size_t>(std::llround(static_cast<double>(n_segments) * artifact_fraction));
  std::vector<bool> with_artifact(n_segments, false);
  for (std::size_t i = 0; i < n_art; ++i) with_artifact[order[i]] = true;

  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  std::vector<LabeledSegment> out;
  out.reserve(n_segments);
  for (std::size_t i = 0; i < n_segments; ++i) {
    PpgSpec spec;
    spec.fs = kCorpusFs;
    spec.duration = kCorpusSeconds;
    spec.hr_bpm = uniform(45.0, 150.0);
    spec.ibi_jitter_ms = uniform(0.0, 60.0);
    spec.snr_db = uniform(10.0, 40.0);
    spec.seed = rng();
    LabeledSegment seg = generate_ppg(spec);
    seg.group = static_cast<int>(i / kCorpusGroupSize);

    if (with_artifact[i]) {
      ArtifactSpec art;
      const int n_bursts = u01(rng) < 0.7 ? 1 : 2;
      for (int b = 0; b < n_bursts; ++b) {
        Burst burst;
        burst.length = uniform(0.5, 3.0);
        burst.start = uniform(0.0, kCorpusSeconds - burst.length);
        burst.kind = static_cast<ArtifactKind>(std::min<int>(2, static_cast<int>(u01(rng) * 3.0)));
        burst.amplitude = uniform(2.0 * kPulseAmplitude, 4.0 * kPulseAmplitude);
        const bool clash = std::any_of(art.bursts.begin(), art.bursts.end(), [&](const Burst& o) {
          return overlaps(o.start, o.start + o.length, burst.start, burst.start + burst.length);
        });
        if (!clash) art.bursts.push_back(burst);
      }
      seg = inject_artifacts(std::move(seg), art);
    }
    out.push_back(std::move(seg));
  }
  return out;
}

std::vector<std::uint32_t> quantize(std::span<const double> x, int adc_bits) {
  const double max = static_cast<double>(wire::adc_max(adc_bits));
  std::vector<std::uint32_t> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = static_cast<std::uint32_t>(std::llround(std::clamp(x[i], kRailLow, kRailHigh) * max));
  }
  return out;
}

std::vector<wire::SampleFrame> to_frames(const std::vector<SampleSeries>& channels, int adc_bits) {
  if (channels.empty()) return {};
  const std::size_t n = channels.front().size();
  std::vector<std::vector<std::uint32_t>> q;
  for (const auto& ch : channels) {
    if (ch.size() != n) throw Error(Errc::LengthMismatch, "channels differ in length");
    q.push_back(quantize(ch.data, adc_bits));
  }
  std::vector<wire::SampleFrame> frames(n);
  for (std::size_t i = 0; i < n; ++i) {
    frames[i].values.reserve(q.size());
    for (const auto& ch : q) frames[i].values.push_back(ch[i]);
  }
  return frames;
}

}  // namespace physiort::synth
