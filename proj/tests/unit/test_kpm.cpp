#include "helpers.hpp"

#include "ranids/error.hpp"
#include "ranids/kpm.hpp"
#include "ranids/traffic.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>

using namespace ranids;

TEST_SUITE("kpm") {

TEST_CASE("validate accepts a plain sample and names the broken field") {
  KpmSample s;
  CHECK_FALSE(validate(s).has_value());
  s.cqi = 16;
  REQUIRE(validate(s).has_value());
  CHECK(validate(s)->find("cqi") != std::string::npos);
  s.cqi = 3;
  s.ul_mcs = 29;
  CHECK(validate(s)->find("ul_mcs") != std::string::npos);
  s.ul_mcs = 0;
  s.ul_brate_bps = -1.0;
  CHECK(validate(s).has_value());
  s.ul_brate_bps = 0.0;
  s.ul_pkts_nok = -2;
  CHECK(validate(s).has_value());
}

TEST_CASE("categories") {
  CHECK(category_of(TrafficClass::Voip) == TrafficCategory::Benign);
  CHECK(category_of(TrafficClass::Web) == TrafficCategory::Benign);
  CHECK(category_of(TrafficClass::Slowloris) == TrafficCategory::Attack);
  CHECK(category_of(TrafficClass::DdosRipper) == TrafficCategory::Attack);
  CHECK(category_of(TrafficClass::DosHulk) == TrafficCategory::Attack);
  bool seen[2] = {false, false};
  for (auto c : kAllClasses) seen[static_cast<int>(category_of(c))] = true;
  CHECK((seen[0] && seen[1]));
}

TEST_CASE("class names round-trip and reject unknown names") {
  for (auto c : kAllClasses) {
    CHECK(parse_traffic_class(to_string(c)) == c);
    CHECK(class_from_index(class_index(c)) == c);
  }
  CHECK_FALSE(parse_traffic_class("Web").has_value());
  CHECK_FALSE(parse_traffic_class("").has_value());
  CHECK_THROWS_AS(class_from_index(5), Error);
}

TEST_CASE("feature vector of the zero sample is all zeros") {
  const auto v = feature_vector(KpmSample{});
  for (double x : v) CHECK(x == 0.0);
}

TEST_CASE("drop ratio is nok over total packets") {
  KpmSample s;
  s.ul_pkts_ok = 9;
  s.ul_pkts_nok = 1;
  CHECK(feature_vector(s)[9] == doctest::Approx(0.1));
}

TEST_CASE("feature vector projects generated fields in order") {
  ExecutionOptions opts;
  auto samples = schedule_execution({{TrafficClass::Web, 3000}}, 42, opts);
  for (const auto& ls : samples) {
    const auto& s = ls.sample;
    const auto v = feature_vector(s);
    const double total = static_cast<double>(s.ul_pkts_ok + s.ul_pkts_nok);
    const FeatureVector expect{static_cast<double>(s.cqi),       static_cast<double>(s.dl_mcs),
                               static_cast<double>(s.ul_mcs),    s.pusch_sinr_db,
                               s.pucch_sinr_db,                  s.dl_brate_bps,
                               s.ul_brate_bps,                   static_cast<double>(s.ul_pkts_ok),
                               static_cast<double>(s.ul_pkts_nok), static_cast<double>(s.ul_pkts_nok) / std::max(1.0, total)};
    CHECK(v == expect);
  }
  CHECK(feature_names()[0] == "cqi");
  CHECK(feature_names()[9] == "ul_drop_ratio");
}

TEST_CASE("header-only file reads as an empty dataset") {
  testing::TempDir dir;
  testing::spit(dir / "d.csv", std::string(kDatasetHeader) + "\n");
  CHECK(read_dataset(dir / "d.csv").empty());
}

TEST_CASE("a row with cqi 16 is rejected with its line number") {
  testing::TempDir dir;
  LabeledSample ls;
  ls.sample.cqi = 15;
  std::string row = format_dataset_row(ls);
  row.replace(row.find(",15,"), 4, ",16,");
  testing::spit(dir / "d.csv", std::string(kDatasetHeader) + "\n" + row + "\n");
  try {
    read_dataset(dir / "d.csv");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parse);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("malformed rows name line and column") {
  testing::TempDir dir;
  const std::string good = format_dataset_row(LabeledSample{});
  testing::spit(dir / "d.csv", std::string(kDatasetHeader) + "\n" + good + "\n0,1,1,x,0,0,0,0,0,0,0,0,web\n");
  try {
    read_dataset(dir / "d.csv");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("cqi") != std::string::npos);
  }
}

TEST_CASE("unknown labels and wrong headers are errors") {
  testing::TempDir dir;
  std::string row = format_dataset_row(LabeledSample{});
  row.replace(row.rfind("web"), 3, "ftp");
  testing::spit(dir / "a.csv", std::string(kDatasetHeader) + "\n" + row + "\n");
  CHECK_THROWS_AS(read_dataset(dir / "a.csv"), Error);
  testing::spit(dir / "b.csv", "timestamp_ms,cqi\n");
  CHECK_THROWS_AS(read_dataset(dir / "b.csv"), Error);
  CHECK_THROWS_AS(read_dataset(dir / "missing.csv"), Error);
}

} // TEST_SUITE kpm

TEST_SUITE("property") {

TEST_CASE("dataset round-trip is the identity on 1000 samples") {
  testing::TempDir dir;
  std::mt19937_64 rng(1234);
  std::vector<LabeledSample> data;
  for (int i = 0; i < 1000; ++i) {
    LabeledSample ls{testing::random_sample(rng), kAllClasses[static_cast<std::size_t>(i % kNumClasses)]};
    if (i == 7) ls.sample.ul_brate_bps = 0.1 + 0.2; // not exactly representable
    if (i == 8) ls.sample.pusch_sinr_db = -1e-300;
    data.push_back(ls);
  }
  write_dataset(dir / "rt.csv", data);
  CHECK(read_dataset(dir / "rt.csv") == data);
}

TEST_CASE("generated datasets round-trip") {
  testing::TempDir dir;
  ExecutionOptions opts;
  auto data = schedule_execution(random_script(11, 20'000, 1000, 4000, 100), 5, opts);
  write_dataset(dir / "g.csv", data);
  CHECK(read_dataset(dir / "g.csv") == data);
}

TEST_CASE("format_real round-trips arbitrary doubles") {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 2000; ++i) {
    double v;
    const std::uint64_t bits = rng();
    std::memcpy(&v, &bits, sizeof v);
    if (!std::isfinite(v)) continue;
    CHECK(std::strtod(format_real(v).c_str(), nullptr) == v);
  }
}

} // TEST_SUITE property
