#include "ranids/kpm.hpp"

#include "ranids/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ranids {

namespace {

constexpr std::array<std::string_view, kNumClasses> kClassNames{"web", "voip", "ddos_ripper",
                                                                "dos_hulk", "slowloris"};

constexpr std::array<std::string_view, 13> kColumns{
    "timestamp_ms", "bs_id",        "ue_id",        "cqi",        "dl_mcs",
    "ul_mcs",       "pusch_sinr_db", "pucch_sinr_db", "dl_brate_bps", "ul_brate_bps",
    "ul_pkts_ok",   "ul_pkts_nok",  "label"};

[[noreturn]] void row_error(std::size_t line_no, std::size_t col, const std::string& msg) {
  std::ostringstream os;
  os << "dataset line " << line_no << ", column " << col << " (" << kColumns[col - 1]
     << "): " << msg;
  fail(ErrorKind::Parse, os.str());
}

template <typename T>
T parse_number(std::string_view field, std::size_t line_no, std::size_t col) {
  T value{};
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || field.empty()) {
    row_error(line_no, col, "cannot parse '" + std::string(field) + "'");
  }
  return value;
}

} // namespace

std::optional<std::string> validate(const KpmSample& s) {
  if (s.cqi < 0 || s.cqi > kMaxCqi) return "cqi out of range [0,15]: " + std::to_string(s.cqi);
  if (s.dl_mcs < 0 || s.dl_mcs > kMaxMcs) return "dl_mcs out of range [0,28]: " + std::to_string(s.dl_mcs);
  if (s.ul_mcs < 0 || s.ul_mcs > kMaxMcs) return "ul_mcs out of range [0,28]: " + std::to_string(s.ul_mcs);
  if (!std::isfinite(s.pusch_sinr_db)) return "pusch_sinr_db is not finite";
  if (!std::isfinite(s.pucch_sinr_db)) return "pucch_sinr_db is not finite";
  if (!(s.dl_brate_bps >= 0.0) || !std::isfinite(s.dl_brate_bps)) return "dl_brate_bps must be finite and >= 0";
  if (!(s.ul_brate_bps >= 0.0) || !std::isfinite(s.ul_brate_bps)) return "ul_brate_bps must be finite and >= 0";
  if (s.ul_pkts_ok < 0) return "ul_pkts_ok must be >= 0";
  if (s.ul_pkts_nok < 0) return "ul_pkts_nok must be >= 0";
  return std::nullopt;
}

TrafficClass class_from_index(int index) {
  if (index < 0 || index >= kNumClasses) {
    fail(ErrorKind::InvalidArgument, "traffic class index out of range: " + std::to_string(index));
  }
  return static_cast<TrafficClass>(index);
}

std::string_view to_string(TrafficClass c) noexcept { return kClassNames[class_index(c)]; }

std::string_view to_string(TrafficCategory c) noexcept {
  return c == TrafficCategory::Benign ? "benign" : "attack";
}

std::optional<TrafficClass> parse_traffic_class(std::string_view name) noexcept {
  for (int i = 0; i < kNumClasses; ++i) {
    if (kClassNames[i] == name) return static_cast<TrafficClass>(i);
  }
  return std::nullopt;
}

FeatureVector feature_vector(const KpmSample& s) noexcept {
  const double ok = static_cast<double>(s.ul_pkts_ok);
  const double nok = static_cast<double>(s.ul_pkts_nok);
  return {static_cast<double>(s.cqi),
          static_cast<double>(s.dl_mcs),
          static_cast<double>(s.ul_mcs),
          s.pusch_sinr_db,
          s.pucch_sinr_db,
          s.dl_brate_bps,
          s.ul_brate_bps,
          ok,
          nok,
          nok / std::max(1.0, ok + nok)};
}

const std::array<std::string_view, kNumFeatures>& feature_names() noexcept {
  static constexpr std::array<std::string_view, kNumFeatures> names{
      "cqi",          "dl_mcs",       "ul_mcs",     "pusch_sinr_db", "pucch_sinr_db",
      "dl_brate_bps", "ul_brate_bps", "ul_pkts_ok", "ul_pkts_nok",   "ul_drop_ratio"};
  return names;
}

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string format_dataset_row(const LabeledSample& ls) {
  const KpmSample& s = ls.sample;
  std::string row;
  row.reserve(128);
  auto add_int = [&row](std::int64_t v) {
    row += std::to_string(v);
    row += ',';
  };
  auto add_real = [&row](double v) {
    row += format_real(v);
    row += ',';
  };
  add_int(s.timestamp_ms);
  add_int(s.bs_id);
  add_int(s.ue_id);
  add_int(s.cqi);
  add_int(s.dl_mcs);
  add_int(s.ul_mcs);
  add_real(s.pusch_sinr_db);
  add_real(s.pucch_sinr_db);
  add_real(s.dl_brate_bps);
  add_real(s.ul_brate_bps);
  add_int(s.ul_pkts_ok);
  add_int(s.ul_pkts_nok);
  row += to_string(ls.label);
  return row;
}

LabeledSample parse_dataset_row(std::string_view line, std::size_t line_no) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

  std::array<std::string_view, kColumns.size()> fields;
  std::size_t n = 0;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    const std::string_view field =
        line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    if (n == fields.size()) {
      row_error(line_no, fields.size(), "too many columns");
    }
    fields[n++] = field;
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (n != fields.size()) {
    row_error(line_no, n, "expected " + std::to_string(fields.size()) + " columns, found " +
                              std::to_string(n));
  }

  LabeledSample out;
  KpmSample& s = out.sample;
  s.timestamp_ms = parse_number<std::int64_t>(fields[0], line_no, 1);
  s.bs_id = parse_number<std::uint16_t>(fields[1], line_no, 2);
  s.ue_id = parse_number<std::uint16_t>(fields[2], line_no, 3);
  s.cqi = parse_number<int>(fields[3], line_no, 4);
  s.dl_mcs = parse_number<int>(fields[4], line_no, 5);
  s.ul_mcs = parse_number<int>(fields[5], line_no, 6);
  s.pusch_sinr_db = parse_number<double>(fields[6], line_no, 7);
  s.pucch_sinr_db = parse_number<double>(fields[7], line_no, 8);
  s.dl_brate_bps = parse_number<double>(fields[8], line_no, 9);
  s.ul_brate_bps = parse_number<double>(fields[9], line_no, 10);
  s.ul_pkts_ok = parse_number<std::int64_t>(fields[10], line_no, 11);
  s.ul_pkts_nok = parse_number<std::int64_t>(fields[11], line_no, 12);

  auto label = parse_traffic_class(fields[12]);
  if (!label) row_error(line_no, 13, "unknown label '" + std::string(fields[12]) + "'");
  out.label = *label;

  if (auto err = validate(s)) {
    fail(ErrorKind::Parse, "dataset line " + std::to_string(line_no) + ": " + *err);
  }
  return out;
}

std::vector<LabeledSample> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open dataset '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Parse, "dataset '" + path.string() + "' has no header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kDatasetHeader) {
    fail(ErrorKind::Parse, "dataset line 1: unexpected header '" + line + "'");
  }

  std::vector<LabeledSample> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    out.push_back(parse_dataset_row(line, line_no));
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, const std::vector<LabeledSample>& samples) {
  if (samples.empty()) fail(ErrorKind::InvalidArgument, "refusing to write an empty dataset");
  DatasetWriter w(path);
  for (const auto& s : samples) w.append(s);
  w.close();
}

struct DatasetWriter::Impl {
  std::ofstream out;
  std::filesystem::path path;
};

DatasetWriter::DatasetWriter(const std::filesystem::path& path) : impl_(std::make_unique<Impl>()) {
  impl_->path = path;
  impl_->out.open(path, std::ios::trunc);
  if (!impl_->out) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  impl_->out << kDatasetHeader << '\n';
}

DatasetWriter::~DatasetWriter() = default;

void DatasetWriter::append(const LabeledSample& s) {
  if (auto err = validate(s.sample)) fail(ErrorKind::InvalidArgument, "invalid sample: " + *err);
  impl_->out << format_dataset_row(s) << '\n';
  ++rows_;
}

void DatasetWriter::close() {
  impl_->out.flush();
  if (!impl_->out) fail(ErrorKind::Io, "write to '" + impl_->path.string() + "' failed");
  impl_->out.close();
}

} // namespace ranids
