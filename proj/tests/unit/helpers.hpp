#pragma once

#include "ranids/kpm.hpp"
#include "ranids/traffic.hpp"

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("ranids_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Arbitrary valid sample, including awkward reals.
inline ranids::KpmSample random_sample(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> cqi(0, 15), mcs(0, 28);
  std::uniform_real_distribution<double> sinr(-20.0, 40.0), rate(0.0, 5e7);
  std::uniform_int_distribution<std::int64_t> pkts(0, 5000), ts(0, 1'000'000);
  ranids::KpmSample s;
  s.timestamp_ms = ts(rng) * 100;
  s.bs_id = static_cast<std::uint16_t>(rng() % 4 + 1);
  s.ue_id = static_cast<std::uint16_t>(rng() % 50 + 1);
  s.cqi = cqi(rng);
  s.dl_mcs = mcs(rng);
  s.ul_mcs = mcs(rng);
  s.pusch_sinr_db = sinr(rng);
  s.pucch_sinr_db = sinr(rng) / 3.0;
  s.dl_brate_bps = rate(rng);
  s.ul_brate_bps = rate(rng) * 1e-3;
  s.ul_pkts_ok = pkts(rng);
  s.ul_pkts_nok = pkts(rng) / 7;
  return s;
}

} // namespace testing
