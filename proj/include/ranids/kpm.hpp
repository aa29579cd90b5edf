#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ranids {

// One measurement record per UE per reporting interval, as exported by the
// base station MAC/PHY. No packet headers or payload information.
struct KpmSample {
  std::int64_t timestamp_ms = 0;
  std::uint16_t bs_id = 0;
  std::uint16_t ue_id = 0;
  int cqi = 0;      // [0, 15], wideband
  int dl_mcs = 0;   // [0, 28]
  int ul_mcs = 0;   // [0, 28]
  double pusch_sinr_db = 0.0;
  double pucch_sinr_db = 0.0;
  double dl_brate_bps = 0.0;
  double ul_brate_bps = 0.0;
  std::int64_t ul_pkts_ok = 0;
  std::int64_t ul_pkts_nok = 0;

  bool operator==(const KpmSample&) const = default;
};

inline constexpr int kMaxCqi = 15;
inline constexpr int kMaxMcs = 28;

// Returns a description of the first violated field invariant, if any.
std::optional<std::string> validate(const KpmSample& s);

enum class TrafficClass : std::uint8_t { Web = 0, Voip, DdosRipper, DosHulk, Slowloris };
enum class TrafficCategory : std::uint8_t { Benign = 0, Attack };

inline constexpr int kNumClasses = 5;
inline constexpr int kNumCategories = 2;
inline constexpr std::array<TrafficClass, kNumClasses> kAllClasses{
    TrafficClass::Web, TrafficClass::Voip, TrafficClass::DdosRipper, TrafficClass::DosHulk,
    TrafficClass::Slowloris};

constexpr TrafficCategory category_of(TrafficClass c) noexcept {
  switch (c) {
  case TrafficClass::Web:
  case TrafficClass::Voip:
    return TrafficCategory::Benign;
  case TrafficClass::DdosRipper:
  case TrafficClass::DosHulk:
  case TrafficClass::Slowloris:
    return TrafficCategory::Attack;
  }
  return TrafficCategory::Attack;
}

constexpr int class_index(TrafficClass c) noexcept { return static_cast<int>(c); }
TrafficClass class_from_index(int index);

// Lowercase names used in CSV files, configs and wire payloads.
std::string_view to_string(TrafficClass c) noexcept;
std::string_view to_string(TrafficCategory c) noexcept;
std::optional<TrafficClass> parse_traffic_class(std::string_view name) noexcept;

struct LabeledSample {
  KpmSample sample;
  TrafficClass label = TrafficClass::Web;

  bool operator==(const LabeledSample&) const = default;
};

inline constexpr std::size_t kNumFeatures = 10;
using FeatureVector = std::array<double, kNumFeatures>;

// [cqi, dl_mcs, ul_mcs, pusch_sinr_db, pucch_sinr_db, dl_brate_bps,
//  ul_brate_bps, ul_pkts_ok, ul_pkts_nok, ul_drop_ratio]
FeatureVector feature_vector(const KpmSample& s) noexcept;
const std::array<std::string_view, kNumFeatures>& feature_names() noexcept;

// Dataset CSV with a fixed header; reals are written in shortest round-trip form.
inline constexpr std::string_view kDatasetHeader =
    "timestamp_ms,bs_id,ue_id,cqi,dl_mcs,ul_mcs,pusch_sinr_db,pucch_sinr_db,"
    "dl_brate_bps,ul_brate_bps,ul_pkts_ok,ul_pkts_nok,label";

std::vector<LabeledSample> read_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, const std::vector<LabeledSample>& samples);

std::string format_dataset_row(const LabeledSample& s);
LabeledSample parse_dataset_row(std::string_view line, std::size_t line_no);

// Streaming writer used by the collector; the header is written on open so a
// run that produces no samples still leaves a valid, empty dataset.
class DatasetWriter {
public:
  explicit DatasetWriter(const std::filesystem::path& path);
  ~DatasetWriter();
  DatasetWriter(const DatasetWriter&) = delete;
  DatasetWriter& operator=(const DatasetWriter&) = delete;

  void append(const LabeledSample& s);
  void close();
  std::size_t rows() const noexcept { return rows_; }

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::size_t rows_ = 0;
};

// Shortest decimal representation that parses back to the same double.
std::string format_real(double v);

} // namespace ranids
