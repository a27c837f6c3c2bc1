#include "physiort/store.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace physiort::store {

namespace {

using nlohmann::json;

void require_id(std::string_view value, const char* field) {
  if (!config::valid_identifier(value)) {
    throw Error(Errc::InvalidId, std::string(field) + " '" + std::string(value) + "' is not an identifier", field);
  }
}

bool single_line(std::string_view s) { return s.find_first_of("\r\n") == std::string_view::npos; }

std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

std::string header_row(const RecordingHeader& h) {
  std::string row = "sample_idx,elapsed_s";
  for (const auto& ch : h.channels) row += ",ch_" + ch.name;
  row += ",sqi,event_code\n";
  return row;
}

json channels_json(const std::vector<ChannelInfo>& channels) {
  json arr = json::array();
  for (const auto& ch : channels) arr.push_back({{"name", ch.name}, {"kind", config::to_string(ch.kind)}, {"site", ch.site}});
  return arr;
}

std::vector<ChannelInfo> channels_from_json(const json& arr) {
  if (!arr.is_array()) throw std::invalid_argument("channels is not an array");
  std::vector<ChannelInfo> out;
  for (const auto& c : arr) {
    if (!c.is_object() || c.size() != 3) throw std::invalid_argument("channel entry needs name, kind and site");
    out.push_back({c.at("name").get<std::string>(), config::parse_signal_kind(c.at("kind").get<std::string>()),
                   c.at("site").get<std::string>()});
  }
  return out;
}

std::string metadata_block(const RecordingHeader& h) {
  std::string out;
  auto kv = [&](std::string_view k, const std::string& v) {
    out += "# ";
    out += k;
    out += '=';
    out += v;
    out += '\n';
  };
  kv("format", std::string(kFormatTag));
  kv("session_id", h.session_id);
  kv("participant_id", h.participant_id);
  kv("condition", h.condition);
  if (!h.group.empty()) kv("group", h.group);
  kv("fs", format_double(h.fs));
  kv("adc_bits", std::to_string(h.adc_bits));
  kv("channels", channels_json(h.channels).dump());
  kv("start_wall", h.start_wall);
  kv("start_mono_ns", std::to_string(h.start_mono_ns));
  kv("config_digest", h.config_digest);
  return out;
}

}  // namespace

void RecordingHeader::validate() const {
  require_id(session_id, "session_id");
  require_id(participant_id, "participant_id");
  require_id(condition, "condition");
  if (!group.empty()) require_id(group, "group");
  if (!(std::isfinite(fs) && fs > 0.0)) throw Error(Errc::RangeViolation, "fs must be positive", "fs");
  if (adc_bits < 1 || adc_bits > 31) throw Error(Errc::RangeViolation, "adc_bits out of range", "adc_bits");
  if (channels.empty()) throw Error(Errc::InvalidId, "a recording needs at least one channel", "channels");
  std::set<std::string> seen;
  for (const auto& ch : channels) {
    require_id(ch.name, "channels");
    if (!seen.insert(ch.name).second) throw Error(Errc::InvalidId, "duplicate channel '" + ch.name + "'", "channels");
  }
  if (!single_line(start_wall)) throw Error(Errc::InvalidId, "start_wall spans lines", "start_wall");
  if (!config_digest.empty() &&
      (config_digest.size() != 64 || config_digest.find_first_not_of("0123456789abcdef") != std::string::npos)) {
    throw Error(Errc::InvalidId, "config_digest is not a hex SHA-256", "config_digest");
  }
}

std::optional<std::size_t> Recording::channel_index(std::string_view name) const {
  for (std::size_t i = 0; i < header.channels.size(); ++i) {
    if (header.channels[i].name == name) return i;
  }
  return std::nullopt;
}

dsp::SampleSeries Recording::channel(std::size_t ch) const {
  dsp::SampleSeries s;
  s.fs = header.fs;
  s.data.resize(rows());
  for (std::size_t r = 0; r < rows(); ++r) s.data[r] = static_cast<double>(value(r, ch));
  return s;
}

std::vector<EventMark> marks_from_codes(const std::vector<std::int32_t>& codes) {
  std::vector<EventMark> marks;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] == 0) continue;
    if (!marks.empty() && marks.back().code == codes[i] && marks.back().end_sample + 1 == i) {
      marks.back().end_sample = i;
    } else {
      marks.push_back({codes[i], i, i});
    }
  }
  return marks;
}

std::string format_elapsed(std::uint64_t sample_idx, double fs) {
  char buf[48];
  const int n = std::snprintf(buf, sizeof buf, "%.6f", static_cast<double>(sample_idx) / fs);
  return std::string(buf, static_cast<std::size_t>(n));
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(Errc::IoFailure, "SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xF]);
  }
  return out;
}

std::string config_digest(const config::ExperimentConfig& exp, const config::AcqConfig& acq) {
  return sha256_hex(config::to_json(exp).dump() + "\n" + config::to_json(acq).dump());
}

// ---------------------------------------------------------------------------

Writer::Writer(const std::filesystem::path& path, RecordingHeader header) : path_(path), header_(std::move(header)) {
  header_.validate();
  max_value_ = wire::adc_max(header_.adc_bits);
  flush_every_ = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::floor(header_.fs)));
  std::error_code ec;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path(), ec);
  if (ec) throw Error(Errc::IoFailure, "cannot create " + path_.parent_path().string() + ": " + ec.message());
  file_ = std::fopen(path_.c_str(), "wx");
  if (!file_) throw Error(Errc::IoFailure, "cannot create " + path_.string() + ": " + std::strerror(errno));
  write_raw(metadata_block(header_) + header_row(header_));
  flush();
}

Writer::~Writer() {
  if (file_) std::fclose(file_);
}

void Writer::write_raw(const std::string& bytes) {
  if (std::fwrite(bytes.data(), 1, bytes.size(), file_) != bytes.size()) {
    throw Error(Errc::IoFailure, "write to " + path_.string() + " failed: " + std::strerror(errno));
  }
}

void Writer::append(std::uint64_t sample_idx, const wire::SampleFrame& frame, std::int8_t sqi,
                    std::int32_t event_code) {
  if (finalized_ || !file_) throw Error(Errc::IoFailure, "append after finalize");
  if (sample_idx != next_idx_) {
    throw Error(Errc::OutOfOrderSample,
                "expected sample " + std::to_string(next_idx_) + ", got " + std::to_string(sample_idx));
  }
  if (frame.values.size() != header_.channels.size()) {
    throw Error(Errc::ShapeViolation, "frame has " + std::to_string(frame.values.size()) + " values for " +
                                          std::to_string(header_.channels.size()) + " channels");
  }
  if (sqi < -1 || sqi > 1) throw Error(Errc::ValueOutOfRange, "sqi must be -1, 0 or 1", "sqi");
  if (event_code < 0) throw Error(Errc::ValueOutOfRange, "event code must be non-negative", "event_code");

  line_.clear();
  char buf[16];
  line_ += std::to_string(sample_idx);
  line_ += ',';
  line_ += format_elapsed(sample_idx, header_.fs);
  for (const auto v : frame.values) {
    if (v > max_value_) throw Error(Errc::ValueOutOfRange, "ADC value " + std::to_string(v) + " exceeds range");
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    line_ += ',';
    line_.append(buf, r.ptr);
  }
  line_ += ',';
  line_ += std::to_string(sqi);
  line_ += ',';
  line_ += std::to_string(event_code);
  line_ += '\n';
  write_raw(line_);
  ++next_idx_;
  if (next_idx_ - last_flush_idx_ >= flush_every_) flush();
}

void Writer::append(const wire::SampleFrame& frame, std::int8_t sqi, std::int32_t event_code) {
  append(next_idx_, frame, sqi, event_code);
}

void Writer::flush() {
  if (!file_) return;
  if (std::fflush(file_) != 0) throw Error(Errc::IoFailure, "flush of " + path_.string() + " failed");
  last_flush_idx_ = next_idx_;
  ++flushes_;
}

void Writer::finalize() {
  if (finalized_) return;
  if (!file_) throw Error(Errc::IoFailure, "writer is closed");
  write_raw("# rows=" + std::to_string(next_idx_) + "\n");
  flush();
  finalized_ = true;
  const int rc = std::fclose(file_);
  file_ = nullptr;
  if (rc != 0) throw Error(Errc::IoFailure, "close of " + path_.string() + " failed");
}

void write_recording(const std::filesystem::path& path, const Recording& rec) {
  Writer w(path, rec.header);
  wire::SampleFrame frame;
  const std::size_t nch = rec.channel_count();
  frame.values.resize(nch);
  for (std::size_t r = 0; r < rec.rows(); ++r) {
    std::copy_n(rec.values.begin() + static_cast<std::ptrdiff_t>(r * nch), nch, frame.values.begin());
    w.append(frame, rec.sqi[r], rec.event_code[r]);
  }
  if (rec.finalized) w.finalize();
}

// ---------------------------------------------------------------------------

namespace {

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Recording run() {
    bool have_header_row = false;
    std::map<std::string, std::string> meta;
    std::string expected_header;
    std::uint32_t max_value = 0;

    while (pos_ < text_.size()) {
      ++line_no_;
      const auto nl = text_.find('\n', pos_);
      if (nl == std::string_view::npos) fail("truncated line");
      std::string_view line = text_.substr(pos_, nl - pos_);
      pos_ = nl + 1;

      if (rec_.finalized) fail("content after the row-count trailer");

      if (!have_header_row) {
        if (line.rfind("# ", 0) == 0) {
          const auto eq = line.find('=');
          if (eq == std::string_view::npos) fail("metadata line without '='");
          std::string key(line.substr(2, eq - 2));
          if (!meta.emplace(key, std::string(line.substr(eq + 1))).second) fail("duplicate metadata key " + key);
          continue;
        }
        apply_metadata(meta);
        expected_header = header_row(rec_.header);
        expected_header.pop_back();
        if (line != expected_header) fail("header row does not match the declared channels");
        have_header_row = true;
        max_value = wire::adc_max(rec_.header.adc_bits);
        continue;
      }

      if (line.rfind("# rows=", 0) == 0) {
        std::uint64_t n = 0;
        if (!parse_number(line.substr(7), n) || n != rec_.rows()) fail("row-count trailer disagrees with the data");
        rec_.finalized = true;
        continue;
      }
      parse_row(line, max_value);
    }
    if (!have_header_row) {
      ++line_no_;
      fail("missing header row");
    }
    rec_.marks = marks_from_codes(rec_.event_code);
    return std::move(rec_);
  }

 private:
  [[noreturn]] void fail(const std::string& why) {
    rec_.marks = marks_from_codes(rec_.event_code);
    rec_.finalized = false;
    throw CorruptRecording(line_no_, why, std::move(rec_));
  }

  void apply_metadata(std::map<std::string, std::string>& meta) {
    auto take = [&](const char* key, bool required = true) -> std::string {
      auto it = meta.find(key);
      if (it == meta.end()) {
        if (required) fail(std::string("missing metadata key ") + key);
        return {};
      }
      std::string v = std::move(it->second);
      meta.erase(it);
      return v;
    };
    if (take("format") != kFormatTag) fail("unsupported format tag");
    auto& h = rec_.header;
    h.session_id = take("session_id");
    h.participant_id = take("participant_id");
    h.condition = take("condition");
    h.group = take("group", false);
    if (!parse_number(take("fs"), h.fs)) fail("fs is not a number");
    if (!parse_number(take("adc_bits"), h.adc_bits)) fail("adc_bits is not an integer");
    try {
      h.channels = channels_from_json(json::parse(take("channels")));
    } catch (const Error& e) {
      fail(std::string("bad channels: ") + e.what());
    } catch (const std::exception& e) {
      fail(std::string("bad channels: ") + e.what());
    }
    h.start_wall = take("start_wall");
    if (!parse_number(take("start_mono_ns"), h.start_mono_ns)) fail("start_mono_ns is not an integer");
    h.config_digest = take("config_digest");
    if (!meta.empty()) fail("unknown metadata key " + meta.begin()->first);
    try {
      h.validate();
    } catch (const Error& e) {
      fail(e.what());
    }
  }

  void parse_row(std::string_view line, std::uint32_t max_value) {
    const std::size_t nch = rec_.header.channels.size();
    cells_.clear();
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      cells_.push_back(line.substr(start, comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (cells_.size() != nch + 4) fail("expected " + std::to_string(nch + 4) + " columns");
    std::uint64_t idx = 0;
    if (!parse_number(cells_[0], idx) || idx != rec_.rows()) fail("sample_idx out of sequence");
    if (cells_[1] != format_elapsed(idx, rec_.header.fs)) fail("elapsed_s does not match sample_idx");
    const std::size_t before = rec_.values.size();
    for (std::size_t c = 0; c < nch; ++c) {
      std::uint32_t v = 0;
      if (!parse_number(cells_[2 + c], v) || v > max_value) {
        rec_.values.resize(before);
        fail("bad ADC value in column " + std::to_string(3 + c));
      }
      rec_.values.push_back(v);
    }
    int sqi = 0;
    std::int32_t code = 0;
    if (!parse_number(cells_[2 + nch], sqi) || sqi < -1 || sqi > 1) {
      rec_.values.resize(before);
      fail("bad sqi");
    }
    if (!parse_number(cells_[3 + nch], code) || code < 0) {
      rec_.values.resize(before);
      fail("bad event_code");
    }
    rec_.sqi.push_back(static_cast<std::int8_t>(sqi));
    rec_.event_code.push_back(code);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
  Recording rec_;
  std::vector<std::string_view> cells_;
};

}  // namespace

Recording parse_recording(std::string_view text) { return Parser(text).run(); }

Recording read_recording(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(Errc::IoFailure, "read of " + path.string() + " failed");
  return parse_recording(ss.str());
}

std::filesystem::path session_layout(const std::filesystem::path& data_dir, std::string_view participant_id,
                                     std::string_view condition) {
  require_id(participant_id, "participant_id");
  require_id(condition, "condition");
  const auto dir = data_dir / std::string(participant_id);
  auto candidate = dir / (std::string(condition) + ".csv");
  for (int n = 2; std::filesystem::exists(candidate); ++n) {
    candidate = dir / (std::string(condition) + "_" + std::to_string(n) + ".csv");
  }
  return candidate;
}

std::vector<std::filesystem::path> list_sessions(const std::filesystem::path& data_dir) {
  std::vector<std::filesystem::path> out;
  std::error_code ec;
  if (!std::filesystem::is_directory(data_dir, ec)) return out;
  for (const auto& p : std::filesystem::directory_iterator(data_dir)) {
    if (!p.is_directory()) continue;
    for (const auto& f : std::filesystem::directory_iterator(p.path())) {
      if (f.is_regular_file() && f.path().extension() == ".csv") out.push_back(f.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace physiort::store
