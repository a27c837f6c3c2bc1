#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "physiort/config.hpp"
#include "physiort/dsp.hpp"
#include "physiort/store.hpp"

namespace physiort::analysis {

using dsp::Metric;

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const noexcept { return v >= lo && v <= hi; }
  friend bool operator==(const Range&, const Range&) = default;
};

// Which metrics to compute and which channels to compare.
// HR_BPM, PSQI, RESP_RATE and EDA_LEVEL use the HR window grid; PNN50 the PRV grid.
struct AgreementPair {
  std::string reference;
  std::string test;
  friend bool operator==(const AgreementPair&, const AgreementPair&) = default;
};

struct AnalysisConfig {
  std::optional<double> fs;  // when set, sessions at another rate are rejected
  double hr_window_s = 30.0;
  double hr_step_s = 10.0;
  double prv_window_s = 120.0;
  double prv_step_s = 10.0;
  double psqi_threshold_pct = 40.0;
  std::map<config::SignalKind, std::vector<Metric>> metrics{
      {config::SignalKind::PPG, {Metric::HR_BPM, Metric::PNN50}},
      {config::SignalKind::EDA, {Metric::EDA_LEVEL}},
      {config::SignalKind::RSP, {Metric::RESP_RATE}},
  };
  std::map<Metric, Range> healthy_ranges{{Metric::HR_BPM, {30.0, 220.0}}, {Metric::PNN50, {0.0, 100.0}}};
  bool select_best_ppg = true;  // adds best_PPG rows when two or more PPG channels exist
  std::optional<AgreementPair> agreement;

  void validate() const;  // InvariantViolation
  friend bool operator==(const AnalysisConfig&, const AnalysisConfig&) = default;
};

// Strict: unknown fields are SchemaViolation.
AnalysisConfig analysis_config_from_json(const nlohmann::json& doc);
AnalysisConfig load_analysis_config(std::string_view document);
AnalysisConfig load_analysis_file(const std::filesystem::path& path);
nlohmann::json to_json(const AnalysisConfig& cfg);

constexpr std::string_view kBestPpgChannel = "best_PPG";

struct MetricRow {
  std::string participant_id;
  std::string condition;
  std::string group;
  std::string session_id;
  double window_start_s = 0.0;
  std::string channel;
  std::string source;  // physical channel behind the value; differs from channel on best_PPG rows
  Metric metric = Metric::HR_BPM;
  std::optional<double> value;
  std::optional<double> quality_pct;  // pSQI of the window; absent for non-PPG channels
  bool excluded = false;
};

struct MetricsTable {
  std::vector<MetricRow> rows;
};

// excluded is set iff the value is absent, quality falls below the threshold,
// or the value leaves the healthy range.
bool is_excluded(const AnalysisConfig& cfg, Metric metric, const std::optional<double>& value,
                 const std::optional<double>& quality_pct);

// Rows for one recording: every configured metric on every channel, plus
// best_PPG rows when enabled.
std::vector<MetricRow> process_recording(const AnalysisConfig& cfg, const store::Recording& rec);

// ---------------------------------------------------------------------------
// Channel selection and agreement

struct ChannelQuality {
  std::string channel;
  config::SignalKind kind = config::SignalKind::PPG;
  std::vector<std::optional<double>> quality_pct;  // one entry per window
};

struct ChannelChoice {
  std::optional<std::size_t> channel;  // index into the input; absent when excluded
  std::optional<double> quality_pct;   // best quality seen in the window
};

// Per window, the channel with maximal quality; ties go to the earlier channel.
// A window whose best quality is below threshold has no choice.
// Throws KindMismatch (mixed kinds or fewer than two channels), LengthMismatch.
std::vector<ChannelChoice> select_best_channel(const std::vector<ChannelQuality>& channels, double threshold_pct);

struct PairedWindows {
  std::vector<std::size_t> kept;  // indices of retained pairs
  std::vector<double> reference;
  std::vector<double> test;
};

// Drops every pair whose reference-window quality is below threshold.
PairedWindows paired_exclusion(std::span<const double> reference_quality_pct, std::span<const double> reference,
                               std::span<const double> test, double threshold_pct);

struct BlandAltman {
  double mean_diff = 0.0;
  double loa_low = 0.0;
  double loa_high = 0.0;
};

struct AgreementStats {
  std::size_t n = 0;
  double rmse = 0.0;
  double mae = 0.0;
  double sd_error = 0.0;            // sample SD of a - b; 0 for a single pair
  std::optional<double> pearson_r;  // absent when either side has zero variance
  BlandAltman bland_altman;
};

// Differences are a - b. Throws LengthMismatch on unequal or empty input.
AgreementStats agreement(std::span<const double> a, std::span<const double> b);

struct BlandAltmanPoint {
  double mean = 0.0;
  double diff = 0.0;
  friend bool operator==(const BlandAltmanPoint&, const BlandAltmanPoint&) = default;
};
std::vector<BlandAltmanPoint> bland_altman_points(std::span<const double> a, std::span<const double> b);
void write_bland_altman_csv(std::ostream& out, const std::vector<BlandAltmanPoint>& points);

nlohmann::json to_json(const AgreementStats& stats);

// ---------------------------------------------------------------------------
// Batch processing

struct FileProblem {
  std::string file;
  std::string error;
};

struct ChannelComparison {
  Metric metric = Metric::HR_BPM;
  std::vector<BlandAltmanPoint> points;
  std::optional<AgreementStats> stats;  // absent with no retained pairs
  std::size_t pairs_total = 0;
};

struct BatchResult {
  MetricsTable table;
  nlohmann::json manifest;
  std::vector<FileProblem> problems;
  std::vector<ChannelComparison> comparisons;
};

// Reads every session under data_dir. Damaged files are reported in the
// manifest and skipped. Throws NoSessions when nothing is readable.
BatchResult batch_process(const AnalysisConfig& cfg, const std::filesystem::path& data_dir);

// Pairs non-excluded reference windows with the test channel's values at the
// same session and window, then applies paired exclusion.
ChannelComparison compare_channels(const MetricsTable& table, const AgreementPair& pair, Metric metric,
                                   double threshold_pct);

void write_metrics_csv(std::ostream& out, const MetricsTable& table);
// metrics.csv, manifest.json and bland_altman_<metric>.csv per comparison.
void write_outputs(const BatchResult& result, const std::filesystem::path& out_dir);

}  // namespace physiort::analysis
