#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "physiort/dsp.hpp"
#include "physiort/wire.hpp"

namespace physiort::synth {

using dsp::SampleSeries;

// Generated waveforms live in full-scale units [0, 1]; 0 and 1 are the ADC rails.
constexpr double kRailLow = 0.0;
constexpr double kRailHigh = 1.0;
constexpr double kQualityBinSeconds = 0.5;

struct PpgSpec {
  double fs = 64.0;
  double duration = 30.0;
  double hr_bpm = 72.0;
  double ibi_jitter_ms = 0.0;
  double snr_db = 30.0;
  std::uint64_t seed = 1;
};

enum class ArtifactKind { saturation, dropout, motion_wander };
std::string_view to_string(ArtifactKind kind) noexcept;

struct Burst {
  double start = 0.0;
  double length = 0.0;
  ArtifactKind kind = ArtifactKind::saturation;
  double amplitude = 1.0;  // full-scale units, used by motion_wander
};

struct ArtifactSpec {
  std::vector<Burst> bursts;
};

enum class Quality : std::uint8_t { bad = 0, good = 1 };

struct LabeledSegment {
  SampleSeries samples;
  std::vector<Quality> quality_bins;
  std::vector<std::size_t> truth_peaks;
  std::vector<double> truth_ibis_ms;
  std::vector<double> truth_peak_times;
  int group = 0;  // source "participant" for group-disjoint splits
  std::vector<Burst> bursts;  // injected artifacts, sorted by start

  std::size_t bad_bins() const;
};

// Per-beat template of two Gaussians (systolic sigma 60 ms, dicrotic +250 ms,
// sigma 80 ms, 30 % amplitude) at IBIs of 60000/hr + N(0, jitter) ms.
LabeledSegment generate_ppg(const PpgSpec& spec);

// Corrupts the waveform inside each burst and relabels every overlapping
// 0.5 s bin as bad. Throws OverlapViolation / SpecViolation.
LabeledSegment inject_artifacts(LabeledSegment seg, const ArtifactSpec& art);

struct EdaSpec {
  double fs = 64.0;
  double duration = 60.0;
  double tonic_level = 0.4;
  double tonic_drift_per_min = 0.02;
  int phasic_events = 3;
  double phasic_amplitude = 0.05;
  std::uint64_t seed = 1;
};

struct RspSpec {
  double fs = 64.0;
  double duration = 60.0;
  double rate_hz = 0.25;
  double amplitude = 0.2;
  double am_depth = 0.2;
  double am_rate_hz = 0.02;
  std::uint64_t seed = 1;
};

// Tonic level with linear drift plus bi-exponential phasic responses.
SampleSeries generate_eda(const EdaSpec& spec);
// Sinusoid at the breathing rate starting at a trough, with slow amplitude modulation.
SampleSeries generate_rsp(const RspSpec& spec);

// Segments of 8 s at 64 Hz. Exactly round(n * artifact_fraction) segments
// carry one or two random bursts. Consecutive blocks of ten segments share a group.
constexpr double kCorpusFs = 64.0;
constexpr double kCorpusSeconds = 8.0;
constexpr int kCorpusGroupSize = 10;
std::vector<LabeledSegment> corpus(std::size_t n_segments, double artifact_fraction, std::uint64_t seed);

// Clamp to [0, 1] and scale to ADC counts.
std::vector<std::uint32_t> quantize(std::span<const double> x, int adc_bits);

// Interleaves equally long channels into wire frames.
std::vector<wire::SampleFrame> to_frames(const std::vector<SampleSeries>& channels, int adc_bits);

}  // namespace physiort::synth
