#include "physiort/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include "physiort/error.hpp"

namespace physiort::analysis {

using nlohmann::json;
using config::SignalKind;

namespace {

bool metric_fits(Metric m, SignalKind kind) {
  switch (m) {
    case Metric::HR_BPM:
    case Metric::PNN50:
    case Metric::PSQI: return kind == SignalKind::PPG;
    case Metric::RESP_RATE: return kind == SignalKind::RSP;
    case Metric::EDA_LEVEL: return kind == SignalKind::EDA;
  }
  return false;
}

double number(const json& doc, const char* key) {
  const auto& v = doc.at(key);
  if (!v.is_number()) throw Error(Errc::SchemaViolation, std::string(key) + " must be a number", key);
  return v.get<double>();
}

std::string fixed6(double v) {
  char buf[64];
  const int n = std::snprintf(buf, sizeof buf, "%.6f", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

std::string csv_field(const std::optional<double>& v) { return v ? fixed6(*v) : std::string(); }

}  // namespace

void AnalysisConfig::validate() const {
  auto positive = [](double v, const char* field) {
    if (!(std::isfinite(v) && v > 0.0)) throw Error(Errc::InvariantViolation, std::string(field) + " must be positive", field);
  };
  positive(hr_window_s, "hr_window_s");
  positive(hr_step_s, "hr_step_s");
  positive(prv_window_s, "prv_window_s");
  positive(prv_step_s, "prv_step_s");
  if (fs) positive(*fs, "fs");
  if (hr_step_s > hr_window_s) throw Error(Errc::InvariantViolation, "hr_step_s exceeds hr_window_s", "hr_step_s");
  if (prv_step_s > prv_window_s) throw Error(Errc::InvariantViolation, "prv_step_s exceeds prv_window_s", "prv_step_s");
  if (!(psqi_threshold_pct >= 0.0 && psqi_threshold_pct <= 100.0)) {
    throw Error(Errc::InvariantViolation, "psqi_threshold_pct must lie in [0, 100]", "psqi_threshold_pct");
  }
  for (const auto& [kind, list] : metrics) {
    for (Metric m : list) {
      if (!metric_fits(m, kind)) {
        throw Error(Errc::InvariantViolation,
                    std::string(dsp::to_string(m)) + " does not apply to " + std::string(config::to_string(kind)),
                    "metrics");
      }
    }
  }
  for (const auto& [m, r] : healthy_ranges) {
    if (!(r.lo <= r.hi)) throw Error(Errc::InvariantViolation, "healthy range lo exceeds hi", "healthy_ranges");
  }
  if (agreement && agreement->reference == agreement->test) {
    throw Error(Errc::InvariantViolation, "agreement compares a channel with itself", "agreement");
  }
}

AnalysisConfig analysis_config_from_json(const json& doc) {
  if (!doc.is_object()) throw Error(Errc::SchemaViolation, "analysis config must be an object");
  static const std::set<std::string> kKnown{"fs", "hr_window_s", "hr_step_s", "prv_window_s", "prv_step_s",
                                            "psqi_threshold_pct", "metrics", "healthy_ranges", "select_best_ppg",
                                            "agreement"};
  for (const auto& [k, v] : doc.items()) {
    if (!kKnown.count(k)) throw Error(Errc::SchemaViolation, "unknown field '" + k + "'", k);
  }
  AnalysisConfig cfg;
  try {
    if (doc.contains("fs")) cfg.fs = number(doc, "fs");
    for (auto [key, slot] : {std::pair{"hr_window_s", &cfg.hr_window_s}, std::pair{"hr_step_s", &cfg.hr_step_s},
                             std::pair{"prv_window_s", &cfg.prv_window_s}, std::pair{"prv_step_s", &cfg.prv_step_s},
                             std::pair{"psqi_threshold_pct", &cfg.psqi_threshold_pct}}) {
      if (doc.contains(key)) *slot = number(doc, key);
    }
    if (doc.contains("metrics")) {
      const auto& m = doc.at("metrics");
      if (!m.is_object()) throw Error(Errc::SchemaViolation, "metrics must map signal kinds to lists", "metrics");
      for (const auto& [kind_name, list] : m.items()) {
        const SignalKind kind = config::parse_signal_kind(kind_name);
        if (!list.is_array()) throw Error(Errc::SchemaViolation, "metrics." + kind_name + " must be a list", "metrics");
        auto& out = cfg.metrics[kind];
        out.clear();
        for (const auto& name : list) {
          if (!name.is_string()) throw Error(Errc::SchemaViolation, "metric names are strings", "metrics");
          out.push_back(dsp::parse_metric(name.get<std::string>()));
        }
      }
    }
    if (doc.contains("healthy_ranges")) {
      const auto& h = doc.at("healthy_ranges");
      if (!h.is_object()) throw Error(Errc::SchemaViolation, "healthy_ranges must be an object", "healthy_ranges");
      for (const auto& [name, r] : h.items()) {
        if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number()) {
          throw Error(Errc::SchemaViolation, "healthy range must be [lo, hi]", "healthy_ranges");
        }
        cfg.healthy_ranges[dsp::parse_metric(name)] = {r[0].get<double>(), r[1].get<double>()};
      }
    }
    if (doc.contains("select_best_ppg")) {
      if (!doc.at("select_best_ppg").is_boolean()) {
        throw Error(Errc::SchemaViolation, "select_best_ppg must be a boolean", "select_best_ppg");
      }
      cfg.select_best_ppg = doc.at("select_best_ppg").get<bool>();
    }
    if (doc.contains("agreement")) {
      const auto& a = doc.at("agreement");
      if (!a.is_object() || a.size() != 2 || !a.contains("reference") || !a.contains("test") ||
          !a.at("reference").is_string() || !a.at("test").is_string()) {
        throw Error(Errc::SchemaViolation, "agreement needs reference and test channel names", "agreement");
      }
      cfg.agreement = AgreementPair{a.at("reference").get<std::string>(), a.at("test").get<std::string>()};
    }
  } catch (const Error& e) {
    if (e.code() == Errc::InvariantViolation) throw;
    throw Error(Errc::SchemaViolation, e.what(), e.field());
  }
  cfg.validate();
  return cfg;
}

AnalysisConfig load_analysis_config(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw Error(Errc::MalformedDocument, e.what());
  }
  return analysis_config_from_json(doc);
}

AnalysisConfig load_analysis_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_analysis_config(ss.str());
}

json to_json(const AnalysisConfig& cfg) {
  json doc;
  if (cfg.fs) doc["fs"] = *cfg.fs;
  doc["hr_window_s"] = cfg.hr_window_s;
  doc["hr_step_s"] = cfg.hr_step_s;
  doc["prv_window_s"] = cfg.prv_window_s;
  doc["prv_step_s"] = cfg.prv_step_s;
  doc["psqi_threshold_pct"] = cfg.psqi_threshold_pct;
  json metrics = json::object();
  for (const auto& [kind, list] : cfg.metrics) {
    json arr = json::array();
    for (Metric m : list) arr.push_back(dsp::to_string(m));
    metrics[std::string(config::to_string(kind))] = arr;
  }
  doc["metrics"] = metrics;
  json ranges = json::object();
  for (const auto& [m, r] : cfg.healthy_ranges) ranges[std::string(dsp::to_string(m))] = {r.lo, r.hi};
  doc["healthy_ranges"] = ranges;
  doc["select_best_ppg"] = cfg.select_best_ppg;
  if (cfg.agreement) doc["agreement"] = {{"reference", cfg.agreement->reference}, {"test", cfg.agreement->test}};
  return doc;
}

// ---------------------------------------------------------------------------

bool is_excluded(const AnalysisConfig& cfg, Metric metric, const std::optional<double>& value,
                 const std::optional<double>& quality_pct) {
  if (!value) return true;
  if (quality_pct && *quality_pct < cfg.psqi_threshold_pct) return true;
  const auto it = cfg.healthy_ranges.find(metric);
  return it != cfg.healthy_ranges.end() && !it->second.contains(*value);
}

namespace {

std::vector<dsp::WindowRange> grid(std::size_t n, double fs, double win, double step) {
  try {
    return dsp::windows(n, fs, win, step);
  } catch (const Error& e) {
    if (e.code() == Errc::WindowTooLong) return {};
    throw;
  }
}

struct ChannelRows {
  std::size_t channel = 0;
  // metric -> per-window (value, quality)
  std::map<Metric, std::vector<std::pair<std::optional<double>, std::optional<double>>>> cells;
};

}  // namespace

std::vector<MetricRow> process_recording(const AnalysisConfig& cfg, const store::Recording& rec) {
  const auto& h = rec.header;
  if (cfg.fs && std::abs(*cfg.fs - h.fs) > 1e-9) {
    throw Error(Errc::RangeViolation, "session sampled at " + std::to_string(h.fs) + " Hz, expected " +
                                          std::to_string(*cfg.fs) + " Hz", "fs");
  }
  const std::size_t n = rec.rows();
  const auto hr_grid = grid(n, h.fs, cfg.hr_window_s, cfg.hr_step_s);
  const auto prv_grid = grid(n, h.fs, cfg.prv_window_s, cfg.prv_step_s);
  auto grid_of = [&](Metric m) -> const std::vector<dsp::WindowRange>& { return m == Metric::PNN50 ? prv_grid : hr_grid; };

  std::vector<MetricRow> rows;
  std::vector<ChannelRows> ppg;
  auto base_row = [&] {
    MetricRow r;
    r.participant_id = h.participant_id;
    r.condition = h.condition;
    r.group = h.group;
    r.session_id = h.session_id;
    return r;
  };

  for (std::size_t c = 0; c < rec.channel_count(); ++c) {
    const auto& info = h.channels[c];
    const auto it = cfg.metrics.find(info.kind);
    if (it == cfg.metrics.end() || it->second.empty()) continue;
    const auto raw = rec.channel(c);

    dsp::IbiSeries ibis;
    if (info.kind == SignalKind::PPG) {
      const auto filtered = dsp::filter_zero_phase(dsp::design_bandpass(h.fs), raw);
      try {
        ibis = dsp::detect_peaks(filtered);
      } catch (const Error& e) {
        if (e.code() != Errc::TooShort) throw;
      }
    }
    auto quality = [&](const dsp::WindowRange& w) -> std::optional<double> {
      if (info.kind != SignalKind::PPG) return std::nullopt;
      return dsp::psqi_from_window(raw, w.begin, w.end).value;
    };

    ChannelRows cr{c, {}};
    for (Metric m : it->second) {
      for (const auto& w : grid_of(m)) {
        const double start = static_cast<double>(w.begin) / h.fs;
        const double length = static_cast<double>(w.end - w.begin) / h.fs;
        const std::span<const double> span(raw.data.data() + w.begin, w.end - w.begin);
        const auto q = quality(w);
        std::optional<double> value;
        switch (m) {
          case Metric::HR_BPM: value = dsp::hr_from_window(ibis, start, length).value; break;
          case Metric::PNN50: value = dsp::pnn50_from_window(ibis, start, length).value; break;
          case Metric::PSQI: value = q; break;
          case Metric::RESP_RATE: value = dsp::respiration_rate_bpm(span, h.fs); break;
          case Metric::EDA_LEVEL: value = dsp::eda_level(span); break;
        }
        MetricRow r = base_row();
        r.window_start_s = start;
        r.channel = info.name;
        r.source = info.name;
        r.metric = m;
        r.value = value;
        r.quality_pct = q;
        r.excluded = is_excluded(cfg, m, value, q);
        rows.push_back(std::move(r));
        cr.cells[m].emplace_back(value, q);
      }
    }
    if (info.kind == SignalKind::PPG) ppg.push_back(std::move(cr));
  }

  if (cfg.select_best_ppg && ppg.size() >= 2) {
    for (Metric m : cfg.metrics.at(SignalKind::PPG)) {
      std::vector<ChannelQuality> qualities;
      for (const auto& cr : ppg) {
        ChannelQuality q{h.channels[cr.channel].name, SignalKind::PPG, {}};
        for (const auto& cell : cr.cells.at(m)) q.quality_pct.push_back(cell.second);
        qualities.push_back(std::move(q));
      }
      const auto choices = select_best_channel(qualities, cfg.psqi_threshold_pct);
      const auto& g = grid_of(m);
      for (std::size_t w = 0; w < choices.size(); ++w) {
        MetricRow r = base_row();
        r.window_start_s = static_cast<double>(g[w].begin) / h.fs;
        r.channel = std::string(kBestPpgChannel);
        r.metric = m;
        r.quality_pct = choices[w].quality_pct;
        if (choices[w].channel) {
          const auto& cr = ppg[*choices[w].channel];
          r.source = h.channels[cr.channel].name;
          r.value = cr.cells.at(m)[w].first;
          r.excluded = is_excluded(cfg, m, r.value, r.quality_pct);
        } else {
          r.excluded = true;
        }
        rows.push_back(std::move(r));
      }
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------

std::vector<ChannelChoice> select_best_channel(const std::vector<ChannelQuality>& channels, double threshold_pct) {
  if (channels.size() < 2) throw Error(Errc::KindMismatch, "channel selection needs at least two channels");
  const std::size_t windows = channels[0].quality_pct.size();
  for (const auto& c : channels) {
    if (c.kind != channels[0].kind) {
      throw Error(Errc::KindMismatch, "channel '" + c.channel + "' is " + std::string(config::to_string(c.kind)) +
                                          ", expected " + std::string(config::to_string(channels[0].kind)));
    }
    if (c.quality_pct.size() != windows) throw Error(Errc::LengthMismatch, "channels cover different windows");
  }
  std::vector<ChannelChoice> out(windows);
  for (std::size_t w = 0; w < windows; ++w) {
    std::optional<std::size_t> best;
    for (std::size_t c = 0; c < channels.size(); ++c) {
      const auto& q = channels[c].quality_pct[w];
      if (q && (!best || *q > *channels[*best].quality_pct[w])) best = c;
    }
    if (!best) continue;
    out[w].quality_pct = channels[*best].quality_pct[w];
    if (*out[w].quality_pct >= threshold_pct) out[w].channel = best;
  }
  return out;
}

PairedWindows paired_exclusion(std::span<const double> reference_quality_pct, std::span<const double> reference,
                               std::span<const double> test, double threshold_pct) {
  if (reference_quality_pct.size() != reference.size() || reference.size() != test.size()) {
    throw Error(Errc::LengthMismatch, "quality, reference and test windows differ in length");
  }
  PairedWindows out;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (reference_quality_pct[i] < threshold_pct) continue;
    out.kept.push_back(i);
    out.reference.push_back(reference[i]);
    out.test.push_back(test[i]);
  }
  return out;
}

AgreementStats agreement(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::LengthMismatch, "series differ in length");
  if (a.empty()) throw Error(Errc::LengthMismatch, "agreement needs at least one pair");
  const std::size_t n = a.size();
  const double nd = static_cast<double>(n);

  AgreementStats s;
  s.n = n;
  double sq = 0.0, abs_sum = 0.0, diff_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    sq += d * d;
    abs_sum += std::abs(d);
    diff_sum += d;
  }
  s.rmse = std::sqrt(sq / nd);
  s.mae = abs_sum / nd;
  const double mean_diff = diff_sum / nd;
  if (n > 1) {
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (a[i] - b[i] - mean_diff) * (a[i] - b[i] - mean_diff);
    s.sd_error = std::sqrt(var / (nd - 1.0));
  }
  s.bland_altman = {mean_diff, mean_diff - 1.96 * s.sd_error, mean_diff + 1.96 * s.sd_error};

  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / nd;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / nd;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa > 0.0 && sbb > 0.0) s.pearson_r = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
  return s;
}

std::vector<BlandAltmanPoint> bland_altman_points(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::LengthMismatch, "series differ in length");
  std::vector<BlandAltmanPoint> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = {(a[i] + b[i]) / 2.0, a[i] - b[i]};
  return out;
}

void write_bland_altman_csv(std::ostream& out, const std::vector<BlandAltmanPoint>& points) {
  out << "mean,diff\n";
  for (const auto& p : points) out << fixed6(p.mean) << ',' << fixed6(p.diff) << '\n';
}

json to_json(const AgreementStats& s) {
  json j{{"n", s.n},
         {"rmse", s.rmse},
         {"mae", s.mae},
         {"sd_error", s.sd_error},
         {"bland_altman", {{"mean_diff", s.bland_altman.mean_diff}, {"loa_low", s.bland_altman.loa_low},
                           {"loa_high", s.bland_altman.loa_high}}}};
  j["pearson_r"] = s.pearson_r ? json(*s.pearson_r) : json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------

ChannelComparison compare_channels(const MetricsTable& table, const AgreementPair& pair, Metric metric,
                                   double threshold_pct) {
  using Key = std::tuple<std::string, std::string, std::string, double>;
  std::map<Key, const MetricRow*> test_rows;
  for (const auto& r : table.rows) {
    if (r.metric == metric && r.channel == pair.test) {
      test_rows[{r.participant_id, r.condition, r.session_id, r.window_start_s}] = &r;
    }
  }
  std::vector<double> ref_q, ref_v, test_v;
  for (const auto& r : table.rows) {
    if (r.metric != metric || r.channel != pair.reference || !r.value) continue;
    const auto it = test_rows.find({r.participant_id, r.condition, r.session_id, r.window_start_s});
    if (it == test_rows.end() || !it->second->value) continue;
    ref_q.push_back(r.quality_pct.value_or(100.0));
    ref_v.push_back(*r.value);
    test_v.push_back(*it->second->value);
  }
  ChannelComparison out;
  out.metric = metric;
  out.pairs_total = ref_v.size();
  const auto kept = paired_exclusion(ref_q, ref_v, test_v, threshold_pct);
  out.points = bland_altman_points(kept.test, kept.reference);
  if (!kept.kept.empty()) out.stats = agreement(kept.test, kept.reference);
  return out;
}

BatchResult batch_process(const AnalysisConfig& cfg, const std::filesystem::path& data_dir) {
  cfg.validate();
  const auto files = store::list_sessions(data_dir);
  BatchResult result;

  struct Loaded {
    std::string rel;
    store::Recording rec;
  };
  std::vector<Loaded> sessions;
  for (const auto& f : files) {
    const std::string rel = std::filesystem::relative(f, data_dir).generic_string();
    try {
      sessions.push_back({rel, store::read_recording(f)});
    } catch (const Error& e) {
      result.problems.push_back({rel, e.what()});
    }
  }
  std::sort(sessions.begin(), sessions.end(), [](const Loaded& x, const Loaded& y) {
    const auto& a = x.rec.header;
    const auto& b = y.rec.header;
    return std::tie(a.participant_id, a.condition, a.session_id, x.rel) <
           std::tie(b.participant_id, b.condition, b.session_id, y.rel);
  });

  json session_list = json::array();
  for (const auto& s : sessions) {
    try {
      auto rows = process_recording(cfg, s.rec);
      result.table.rows.insert(result.table.rows.end(), std::make_move_iterator(rows.begin()),
                               std::make_move_iterator(rows.end()));
      const auto& h = s.rec.header;
      session_list.push_back({{"file", s.rel},
                              {"participant_id", h.participant_id},
                              {"condition", h.condition},
                              {"group", h.group},
                              {"session_id", h.session_id},
                              {"fs", h.fs},
                              {"rows", s.rec.rows()},
                              {"finalized", s.rec.finalized},
                              {"config_digest", h.config_digest}});
    } catch (const Error& e) {
      result.problems.push_back({s.rel, e.what()});
    }
  }
  if (session_list.empty()) {
    throw Error(Errc::NoSessions, "no readable sessions under " + data_dir.string());
  }

  if (cfg.agreement) {
    std::vector<Metric> metric_order;
    for (const auto& [kind, list] : cfg.metrics) {
      for (Metric m : list) {
        if (std::find(metric_order.begin(), metric_order.end(), m) == metric_order.end()) metric_order.push_back(m);
      }
    }
    for (Metric m : metric_order) {
      auto cmp = compare_channels(result.table, *cfg.agreement, m, cfg.psqi_threshold_pct);
      if (cmp.pairs_total > 0) result.comparisons.push_back(std::move(cmp));
    }
  }

  json exclusions = json::object();
  std::size_t excluded = 0;
  for (const auto& r : result.table.rows) {
    auto& e = exclusions[r.channel][std::string(dsp::to_string(r.metric))];
    if (e.is_null()) e = {{"rows", 0}, {"excluded", 0}};
    e["rows"] = e["rows"].get<std::size_t>() + 1;
    if (r.excluded) {
      e["excluded"] = e["excluded"].get<std::size_t>() + 1;
      ++excluded;
    }
  }
  json problems = json::array();
  for (const auto& p : result.problems) problems.push_back({{"file", p.file}, {"error", p.error}});
  json comparisons = json::array();
  for (const auto& c : result.comparisons) {
    comparisons.push_back({{"metric", dsp::to_string(c.metric)},
                           {"reference", cfg.agreement->reference},
                           {"test", cfg.agreement->test},
                           {"pairs_total", c.pairs_total},
                           {"pairs_kept", c.points.size()},
                           {"stats", c.stats ? to_json(*c.stats) : json(nullptr)}});
  }
  result.manifest = {{"config", to_json(cfg)},
                     {"sessions", session_list},
                     {"problems", problems},
                     {"rows", result.table.rows.size()},
                     {"excluded", excluded},
                     {"exclusions", exclusions},
                     {"comparisons", comparisons}};
  return result;
}

void write_metrics_csv(std::ostream& out, const MetricsTable& table) {
  out << "participant_id,condition,group,session_id,window_start_s,channel,source,metric,value,quality_pct,excluded\n";
  for (const auto& r : table.rows) {
    out << r.participant_id << ',' << r.condition << ',' << r.group << ',' << r.session_id << ','
        << fixed6(r.window_start_s) << ',' << r.channel << ',' << r.source << ',' << dsp::to_string(r.metric) << ','
        << csv_field(r.value) << ',' << csv_field(r.quality_pct) << ',' << (r.excluded ? "true" : "false") << '\n';
  }
}

void write_outputs(const BatchResult& result, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(Errc::IoFailure, "cannot create " + out_dir.string() + ": " + ec.message());
  auto open = [&](const std::string& leaf) {
    std::ofstream f(out_dir / leaf, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(Errc::IoFailure, "cannot write " + (out_dir / leaf).string());
    return f;
  };
  {
    auto f = open("metrics.csv");
    write_metrics_csv(f, result.table);
    if (!f) throw Error(Errc::IoFailure, "write of metrics.csv failed");
  }
  {
    auto f = open("manifest.json");
    f << result.manifest.dump(2) << '\n';
    if (!f) throw Error(Errc::IoFailure, "write of manifest.json failed");
  }
  for (const auto& c : result.comparisons) {
    const std::string leaf = "bland_altman_" + std::string(dsp::to_string(c.metric)) + ".csv";
    auto f = open(leaf);
    write_bland_altman_csv(f, c.points);
    if (!f) throw Error(Errc::IoFailure, "write of " + leaf + " failed");
  }
}

}  // namespace physiort::analysis
