#include <doctest.h>

#include <fstream>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "physiort/analysis.hpp"
#include "support/scratch_dir.hpp"
#include "support/sessions.hpp"

using namespace physiort;
using namespace physiort::analysis;
using config::SignalKind;

namespace {

Errc error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::InvalidState;
}

std::vector<double> v(std::initializer_list<double> x) { return x; }

std::string metrics_csv(const MetricsTable& t) {
  std::ostringstream ss;
  write_metrics_csv(ss, t);
  return ss.str();
}

const std::vector<store::ChannelInfo> kOnePpg{{"ppg_finger", SignalKind::PPG, "finger"}};
const std::vector<store::ChannelInfo> kTwoPpg{{"ppg_finger", SignalKind::PPG, "finger"},
                                              {"ppg_ear", SignalKind::PPG, "ear"}};

dsp::SampleSeries white_noise(double fs, double seconds, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.5, 0.1);
  dsp::SampleSeries s;
  s.fs = fs;
  s.data.resize(static_cast<std::size_t>(fs * seconds));
  for (auto& x : s.data) x = n(rng);
  return s;
}

}  // namespace

TEST_CASE("agreement hand examples") {
  auto s = agreement(v({1, 2, 3}), v({1, 2, 3}));
  CHECK(s.rmse == 0.0);
  CHECK(s.mae == 0.0);
  CHECK(*s.pearson_r == doctest::Approx(1.0).epsilon(1e-12));

  s = agreement(v({1, 2, 3}), v({2, 3, 4}));
  CHECK(s.rmse == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.mae == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.bland_altman.mean_diff == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(s.sd_error == doctest::Approx(0.0));

  s = agreement(v({1, 2, 3}), v({1, 2, 4}));
  CHECK(*s.pearson_r == doctest::Approx(3.0 / std::sqrt(2.0 * 42.0 / 9.0)).epsilon(1e-12));
  CHECK(*s.pearson_r == doctest::Approx(0.9820).epsilon(1e-4));

  s = agreement(v({10, 12}), v({11, 11}));
  CHECK(s.bland_altman.mean_diff == doctest::Approx(0.0));
  CHECK(s.sd_error == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(s.bland_altman.loa_low == doctest::Approx(-2.772).epsilon(1e-3));
  CHECK(s.bland_altman.loa_high == doctest::Approx(2.772).epsilon(1e-3));
  CHECK_FALSE(s.pearson_r.has_value());  // b is constant

  s = agreement(v({5}), v({3}));
  CHECK(s.sd_error == 0.0);
  CHECK(s.bland_altman.loa_low == 2.0);

  CHECK(error_of([] { agreement(v({1, 2}), v({1})); }) == Errc::LengthMismatch);
  CHECK(error_of([] { agreement({}, {}); }) == Errc::LengthMismatch);
}

TEST_CASE("agreement matches the brute-force oracle on random inputs") {
  std::mt19937_64 rng(100);
  std::uniform_real_distribution<double> u(40.0, 140.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 30;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = u(rng);
      b[i] = a[i] + (u(rng) - 90.0) * 0.1;
    }
    const auto got = agreement(a, b);
    const auto want = oracle::agreement(a, b);
    CHECK(std::abs(got.rmse - want.rmse) <= 1e-9);
    CHECK(std::abs(got.mae - want.mae) <= 1e-9);
    CHECK(std::abs(got.sd_error - want.sd) <= 1e-9);
    CHECK(std::abs(got.bland_altman.mean_diff - want.mean_diff) <= 1e-9);
    CHECK(std::abs(got.bland_altman.loa_low - want.loa_low) <= 1e-9);
    CHECK(std::abs(got.bland_altman.loa_high - want.loa_high) <= 1e-9);
    REQUIRE(got.pearson_r.has_value() == want.r.has_value());
    if (want.r) CHECK(std::abs(*got.pearson_r - *want.r) <= 1e-9);
  }
}

TEST_CASE("property: agreement identities and invariances") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(70.0, 12.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + rng() % 20;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = g(rng);
      b[i] = g(rng);
    }
    const auto self = agreement(a, a);
    CHECK(self.rmse == 0.0);
    CHECK(self.mae == 0.0);
    CHECK(std::abs(*self.pearson_r - 1.0) <= 1e-12);

    const auto ab = agreement(a, b);
    const auto ba = agreement(b, a);
    CHECK(ab.rmse == doctest::Approx(ba.rmse).epsilon(1e-12));
    CHECK(ab.mae == doctest::Approx(ba.mae).epsilon(1e-12));
    CHECK(std::abs(ab.bland_altman.mean_diff + ba.bland_altman.mean_diff) <= 1e-9);
    CHECK(*ab.pearson_r >= -1.0);
    CHECK(*ab.pearson_r <= 1.0);

    const double scale = 0.1 + static_cast<double>(rng() % 1000) / 10.0;
    const double shift = static_cast<double>(rng() % 2001) - 1000.0;
    std::vector<double> a2(n);
    for (std::size_t i = 0; i < n; ++i) a2[i] = scale * a[i] + shift;
    CHECK(std::abs(*agreement(a2, b).pearson_r - *ab.pearson_r) <= 1e-9);
    CHECK(std::abs(*agreement(a, a2).pearson_r - 1.0) <= 1e-9);
  }
}

TEST_CASE("bland-altman points") {
  CHECK(bland_altman_points(v({10}), v({12})) == std::vector<BlandAltmanPoint>{{11.0, -2.0}});
  for (const auto& p : bland_altman_points(v({3, 4, 5}), v({3, 4, 5}))) CHECK(p.diff == 0.0);
  CHECK(error_of([] { bland_altman_points(v({1}), v({})); }) == Errc::LengthMismatch);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-50, 50);
  std::vector<double> a(64), b(64);
  for (std::size_t i = 0; i < 64; ++i) {
    a[i] = u(rng);
    b[i] = u(rng);
  }
  const auto pts = bland_altman_points(a, b);
  for (std::size_t i = 0; i < 64; ++i) {
    CHECK(pts[i].mean == 0.5 * (a[i] + b[i]));
    CHECK(pts[i].diff == a[i] - b[i]);
  }
  std::ostringstream ss;
  write_bland_altman_csv(ss, {{11.0, -2.0}});
  CHECK(ss.str() == "mean,diff\n11.000000,-2.000000\n");
}

TEST_CASE("best channel selection") {
  ChannelQuality finger{"finger", SignalKind::PPG, {80.0, 70.0, 30.0, std::nullopt}};
  ChannelQuality ear{"ear", SignalKind::PPG, {95.0, 70.0, 30.0, 55.0}};
  const auto choice = select_best_channel({finger, ear}, 40.0);
  REQUIRE(choice.size() == 4);
  CHECK(choice[0].channel == 1u);   // ear 95 beats finger 80
  CHECK(choice[1].channel == 0u);   // tie goes to the first declared
  CHECK_FALSE(choice[2].channel);   // both below 40
  CHECK(*choice[2].quality_pct == 30.0);
  CHECK(choice[3].channel == 1u);   // absent quality never wins

  ChannelQuality eda{"eda", SignalKind::EDA, {1, 2, 3, 4}};
  CHECK(error_of([&] { select_best_channel({finger, eda}, 40.0); }) == Errc::KindMismatch);
  CHECK(error_of([&] { select_best_channel({finger}, 40.0); }) == Errc::KindMismatch);
  ChannelQuality short_ear{"ear", SignalKind::PPG, {1.0}};
  CHECK(error_of([&] { select_best_channel({finger, short_ear}, 40.0); }) == Errc::LengthMismatch);
}

TEST_CASE("paired exclusion") {
  const auto kept = paired_exclusion(v({50, 30, 60}), v({70, 71, 72}), v({69, 90, 73}), 40.0);
  CHECK(kept.kept == std::vector<std::size_t>{0, 2});
  CHECK(kept.reference == v({70, 72}));
  CHECK(kept.test == v({69, 73}));

  const auto all = paired_exclusion(v({90, 90}), v({1, 2}), v({3, 4}), 40.0);
  CHECK(all.kept == std::vector<std::size_t>{0, 1});
  CHECK(all.test == v({3, 4}));

  CHECK(error_of([] { paired_exclusion(v({50, 30}), v({1, 2, 3}), v({1, 2, 3}), 40.0); }) == Errc::LengthMismatch);
  CHECK(error_of([] { paired_exclusion(v({50}), v({1}), v({1, 2}), 40.0); }) == Errc::LengthMismatch);
}

TEST_CASE("analysis config documents") {
  const auto defaults = load_analysis_config("{}");
  CHECK(defaults.hr_window_s == 30.0);
  CHECK(defaults.hr_step_s == 10.0);
  CHECK(defaults.prv_window_s == 120.0);
  CHECK(defaults.prv_step_s == 10.0);
  CHECK(defaults.psqi_threshold_pct == 40.0);
  CHECK(defaults.healthy_ranges.at(Metric::HR_BPM) == Range{30.0, 220.0});
  CHECK(defaults.healthy_ranges.at(Metric::PNN50) == Range{0.0, 100.0});

  const auto cfg = load_analysis_config(R"({"fs": 256, "hr_window_s": 20, "hr_step_s": 5,
    "metrics": {"PPG": ["HR_BPM", "PSQI"]}, "healthy_ranges": {"HR_BPM": [40, 180]},
    "agreement": {"reference": "ppg_ear", "test": "ppg_finger"}})");
  CHECK(*cfg.fs == 256.0);
  CHECK(cfg.metrics.at(SignalKind::PPG) == std::vector<Metric>{Metric::HR_BPM, Metric::PSQI});
  CHECK(cfg.metrics.at(SignalKind::EDA) == std::vector<Metric>{Metric::EDA_LEVEL});
  CHECK(cfg.healthy_ranges.at(Metric::HR_BPM) == Range{40.0, 180.0});
  CHECK(cfg.agreement->reference == "ppg_ear");
  CHECK(analysis_config_from_json(to_json(cfg)) == cfg);

  CHECK(error_of([] { load_analysis_config("{"); }) == Errc::MalformedDocument);
  CHECK(error_of([] { load_analysis_config(R"({"window": 3})"); }) == Errc::SchemaViolation);
  CHECK(error_of([] { load_analysis_config(R"({"hr_step_s": "x"})"); }) == Errc::SchemaViolation);
  CHECK(error_of([] { load_analysis_config(R"({"metrics": {"PPG": ["VO2"]}})"); }) == Errc::SchemaViolation);
  CHECK(error_of([] { load_analysis_config(R"({"hr_step_s": 40})"); }) == Errc::InvariantViolation);
  CHECK(error_of([] { load_analysis_config(R"({"psqi_threshold_pct": 101})"); }) == Errc::InvariantViolation);
  CHECK(error_of([] { load_analysis_config(R"({"metrics": {"EDA": ["HR_BPM"]}})"); }) == Errc::InvariantViolation);
  CHECK(error_of([] { load_analysis_config(R"({"healthy_ranges": {"HR_BPM": [200, 30]}})"); }) ==
        Errc::InvariantViolation);
}

TEST_CASE("exclusion rule") {
  AnalysisConfig cfg;
  CHECK_FALSE(is_excluded(cfg, Metric::HR_BPM, 72.0, 90.0));
  CHECK(is_excluded(cfg, Metric::HR_BPM, 72.0, 39.9));
  CHECK(is_excluded(cfg, Metric::HR_BPM, 250.0, 90.0));
  CHECK(is_excluded(cfg, Metric::HR_BPM, std::nullopt, 90.0));
  CHECK_FALSE(is_excluded(cfg, Metric::EDA_LEVEL, 512.0, std::nullopt));
}

TEST_CASE("batch over two participants and two conditions") {
  ScratchDir dir("batch");
  std::uint64_t seed = 1;
  for (const char* p : {"P01", "P02"}) {
    for (const char* c : {"baseline", "task"}) {
      write_session(dir.path(), p, c, kOnePpg, {ppg_signal(64.0, 180.0, 72.0, seed++, 30.0)}, "g1");
    }
  }
  AnalysisConfig cfg;
  cfg.metrics = {{SignalKind::PPG, {Metric::HR_BPM}}};
  const auto result = batch_process(cfg, dir.path());
  CHECK(result.problems.empty());
  CHECK(result.table.rows.size() == 64);
  std::map<std::pair<std::string, std::string>, int> per_session;
  for (const auto& r : result.table.rows) {
    ++per_session[{r.participant_id, r.condition}];
    CHECK(r.metric == Metric::HR_BPM);
    CHECK(r.group == "g1");
    REQUIRE(r.value.has_value());
    CHECK(*r.value == doctest::Approx(72.0).epsilon(0.04));
    CHECK_FALSE(r.excluded);
  }
  CHECK(per_session.size() == 4);
  for (const auto& [k, n] : per_session) CHECK(n == 16);
  CHECK(result.table.rows.front().participant_id == "P01");
  CHECK(result.table.rows.front().condition == "baseline");
  CHECK(result.table.rows.back().participant_id == "P02");
  CHECK(result.table.rows.back().window_start_s == 150.0);
  CHECK(result.manifest["sessions"].size() == 4);
  CHECK(result.manifest["rows"] == 64);

  const auto again = batch_process(cfg, dir.path());
  CHECK(metrics_csv(again.table) == metrics_csv(result.table));
}

TEST_CASE("a session below the quality threshold is excluded throughout") {
  ScratchDir dir("batch");
  write_session(dir.path(), "P01", "noisy", kOnePpg, {white_noise(64.0, 60.0, 3)});
  write_session(dir.path(), "P01", "clean", kOnePpg, {ppg_signal(64.0, 60.0, 60.0, 4)});
  AnalysisConfig cfg;
  cfg.prv_window_s = 30.0;
  const auto result = batch_process(cfg, dir.path());
  int noisy = 0, clean_kept = 0;
  for (const auto& r : result.table.rows) {
    if (r.condition == "noisy") {
      ++noisy;
      CHECK(r.excluded);
      CHECK(*r.quality_pct < 40.0);
    } else if (!r.excluded) {
      ++clean_kept;
    }
  }
  CHECK(noisy == 8);
  CHECK(clean_kept == 8);
}

TEST_CASE("empty or unreadable data directories") {
  ScratchDir dir("batch");
  CHECK(error_of([&] { batch_process({}, dir.path()); }) == Errc::NoSessions);
  CHECK(error_of([&] { batch_process({}, dir / "absent"); }) == Errc::NoSessions);

  std::filesystem::create_directories(dir / "P09");
  std::ofstream(dir / "P09/broken.csv") << "# format=physiort-session/1\nnot a session\n";
  CHECK(error_of([&] { batch_process({}, dir.path()); }) == Errc::NoSessions);

  write_session(dir.path(), "P01", "rest", kOnePpg, {ppg_signal(64.0, 40.0, 66.0, 9)});
  const auto result = batch_process({}, dir.path());
  REQUIRE(result.problems.size() == 1);
  CHECK(result.problems[0].file == "P09/broken.csv");
  CHECK(result.manifest["problems"].size() == 1);
  CHECK(result.manifest["sessions"].size() == 1);
}

TEST_CASE("redundant channels: the clean one is selected") {
  ScratchDir dir("batch");
  const auto clean = ppg_signal(64.0, 90.0, 75.0, 21);
  auto noisy = white_noise(64.0, 90.0, 22);
  // the ear channel is clean over the first 30 s only
  for (std::size_t i = 0; i < 64 * 30; ++i) noisy.data[i] = clean.data[i];
  write_session(dir.path(), "P01", "rest", kTwoPpg, {noisy, clean});
  AnalysisConfig cfg;
  cfg.metrics = {{SignalKind::PPG, {Metric::HR_BPM}}};
  cfg.agreement = AgreementPair{"ppg_finger", "ppg_ear"};
  const auto result = batch_process(cfg, dir.path());
  int best = 0;
  for (const auto& r : result.table.rows) {
    if (r.channel != kBestPpgChannel) continue;
    ++best;
    CHECK_FALSE(r.excluded);
    if (r.window_start_s >= 10.0) CHECK(r.source == "ppg_ear");
  }
  CHECK(best == 7);
  REQUIRE(result.comparisons.size() == 1);
  const auto& cmp = result.comparisons[0];
  CHECK(cmp.pairs_total >= 1);
  // finger windows over noise fall below threshold and take their pairs with them
  REQUIRE(cmp.points.size() >= 1);
  CHECK(cmp.points.size() < 7);
  CHECK(std::abs(cmp.points[0].diff) < 1.0);

  ScratchDir out("out");
  write_outputs(result, out.path());
  CHECK(std::filesystem::exists(out / "metrics.csv"));
  CHECK(std::filesystem::exists(out / "manifest.json"));
  CHECK(std::filesystem::exists(out / "bland_altman_HR_BPM.csv"));
}

namespace {

// Fixture: two participants, two conditions, 45 s at 64 Hz; a clean finger PPG,
// an ear PPG saturated over 20-26 s, and an EDA channel.
void write_fixture_sessions(const std::filesystem::path& dir) {
  const std::vector<store::ChannelInfo> channels{{"ppg_finger", SignalKind::PPG, "finger"},
                                                 {"ppg_ear", SignalKind::PPG, "ear"},
                                                 {"eda", SignalKind::EDA, "palm"}};
  std::uint64_t seed = 500;
  for (const auto& [p, group] : {std::pair{"P01", "A"}, std::pair{"P02", "B"}}) {
    for (const auto& [c, hr] : {std::pair{"baseline", 65.0}, std::pair{"task", 85.0}}) {
      const auto finger = ppg_signal(64.0, 45.0, hr, seed++, 25.0);
      synth::PpgSpec ear_spec;
      ear_spec.duration = 45.0;
      ear_spec.hr_bpm = hr;
      ear_spec.ibi_jitter_ms = 25.0;
      ear_spec.seed = seed++;
      const auto ear = synth::inject_artifacts(synth::generate_ppg(ear_spec),
                                               {{{20.0, 6.0, synth::ArtifactKind::saturation, 1.0}}});
      synth::EdaSpec eda;
      eda.duration = 45.0;
      eda.seed = seed++;
      write_session(dir, p, c, channels, {finger, ear.samples, synth::generate_eda(eda)}, group);
    }
  }
}

}  // namespace

TEST_CASE("fixture sessions reproduce the golden metrics table") {
  const std::filesystem::path fixtures = PHYSIORT_FIXTURES;
  if (std::getenv("PHYSIORT_REGEN_FIXTURES")) {
    std::filesystem::remove_all(fixtures / "sessions");
    write_fixture_sessions(fixtures / "sessions");
    std::ofstream(fixtures / "golden_metrics.csv")
        << metrics_csv(batch_process(load_analysis_file(fixtures / "analysis.json"), fixtures / "sessions").table);
  }
  const auto cfg = load_analysis_file(fixtures / "analysis.json");
  const auto result = batch_process(cfg, fixtures / "sessions");
  std::ifstream golden(fixtures / "golden_metrics.csv");
  REQUIRE(golden.good());
  std::stringstream want;
  want << golden.rdbuf();
  CHECK(metrics_csv(result.table) == want.str());

  // Clean-channel HR rows sit near the generator rate of their condition.
  int retained = 0;
  for (const auto& r : result.table.rows) {
    if (r.metric != Metric::HR_BPM || r.channel != "ppg_finger") continue;
    CHECK_FALSE(r.excluded);
    ++retained;
    const double truth = r.condition == "baseline" ? 65.0 : 85.0;
    CHECK(std::abs(*r.value - truth) <= 2.0);
  }
  CHECK(retained == 24);
}
