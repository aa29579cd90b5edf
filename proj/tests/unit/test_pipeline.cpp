#include "helpers.hpp"

#include "ranids/error.hpp"
#include "ranids/pipeline.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace ranids;
using namespace ranids::pipeline;

namespace {

// One forest shared by the closed-loop cases. Shorter training runs leave too
// few attack rows at this channel quality.
const ml::Model& forest() {
  static const ml::Model model = [] {
    testing::TempDir dir;
    collect(preset("one-ue", 1), dir / "train.csv");
    TrainOptions opts;
    opts.forest.n_trees = 30;
    opts.forest.threads = 1;
    opts.seed = 1;
    return train(read_dataset(dir / "train.csv"), opts);
  }();
  return model;
}

sim::ScenarioConfig attack_scenario(TrafficClass attack, std::uint64_t seed) {
  sim::ScenarioConfig sc;
  sc.seed = seed;
  sc.duration_ms = 20'000;
  sc.ues[0].ue_id = 1;
  sc.ues[0].sinr_base_db = 18.0;
  sc.ues[0].script = {{TrafficClass::Web, 6000}, {attack, 14'000}};
  return sc;
}

ClosedLoopReport run_loop(sim::ScenarioConfig sc, bool mitigation = true) {
  ClosedLoopConfig cfg;
  cfg.scenario = std::move(sc);
  cfg.model = forest();
  cfg.mitigation = mitigation;
  return closed_loop(cfg);
}

} // namespace

TEST_SUITE("pipeline") {

TEST_CASE("presets") {
  for (const auto& name : preset_names()) CHECK_NOTHROW(preset(name, 3).validate());
  CHECK(preset("one-ue", 1).ues.size() == 1);
  CHECK(preset("two-ue", 1).ues.size() == 2);
  CHECK_THROWS_AS(preset("three-ue", 1), Error);
}

TEST_CASE("one-ue collection writes one row per interval") {
  testing::TempDir dir;
  const auto r = collect(preset("one-ue", 1), dir / "d.csv");
  CHECK(r.rows == 6000);
  CHECK(r.ue_ids == std::vector<std::uint16_t>{1});
  const auto data = read_dataset(dir / "d.csv");
  CHECK(data.size() == 6000);
  std::set<TrafficClass> seen;
  for (const auto& ls : data) seen.insert(ls.label);
  CHECK(seen.size() == kNumClasses);
}

TEST_CASE("two-ue collection keeps both UEs apart") {
  testing::TempDir dir;
  auto sc = preset("two-ue", 2);
  sc.duration_ms = 10'000;
  const auto r = collect(sc, dir / "d.csv");
  CHECK(r.ue_ids == std::vector<std::uint16_t>{1, 2});
  CHECK(r.rows == 200);
  std::map<int, int> per_ue;
  for (const auto& ls : read_dataset(dir / "d.csv")) ++per_ue[ls.sample.ue_id];
  CHECK(per_ue[1] == 100);
  CHECK(per_ue[2] == 100);
}

TEST_CASE("zero duration writes only the header") {
  testing::TempDir dir;
  auto sc = preset("one-ue", 1);
  sc.duration_ms = 0;
  CHECK(collect(sc, dir / "d.csv").rows == 0);
  CHECK(testing::slurp(dir / "d.csv") == std::string(kDatasetHeader) + "\n");
}

TEST_CASE("a failed collection leaves no partial file") {
  testing::TempDir dir;
  // More UEs than the collector queue holds in one tick.
  sim::ScenarioConfig sc;
  sc.duration_ms = 300;
  sc.ues.clear();
  for (std::uint16_t id = 1; id <= 1100; ++id) {
    sim::UeSetup ue;
    ue.ue_id = id;
    ue.script = {{TrafficClass::Web, 300}};
    sc.ues.push_back(ue);
  }
  CHECK_THROWS_AS(collect(sc, dir / "d.csv"), Error);
  CHECK_FALSE(std::filesystem::exists(dir / "d.csv"));
}

TEST_CASE("perfect predictions give a diagonal confusion matrix") {
  // cqi carries the label; a tree on it is exact.
  std::vector<LabeledSample> data;
  for (int i = 0; i < 500; ++i) {
    LabeledSample ls;
    ls.label = kAllClasses[static_cast<std::size_t>(i % kNumClasses)];
    ls.sample.cqi = class_index(ls.label);
    data.push_back(ls);
  }
  TrainOptions opts;
  opts.algo = ml::Algorithm::DecisionTree;
  const auto r = evaluate(train(data, opts), data, 0);
  for (int t = 0; t < kNumClasses; ++t)
    for (int p = 0; p < kNumClasses; ++p) CHECK(r.five.at(t, p) == (t == p ? 100U : 0U));
  CHECK(r.five.accuracy() == 1.0);
  CHECK(r.binary.accuracy() == 1.0);
}

TEST_CASE("binary metrics equal a direct binary count") {
  testing::TempDir dir;
  auto sc = preset("two-ue", 2);
  sc.duration_ms = 60'000;
  collect(sc, dir / "t.csv");
  const auto test = read_dataset(dir / "t.csv");
  const auto r = evaluate(forest(), test, 0);
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (const auto& ls : test) {
    const bool truth = category_of(ls.label) == TrafficCategory::Attack;
    const bool pred = category_of(ml::predict_class(forest(), feature_vector(ls.sample))) == TrafficCategory::Attack;
    tp += truth && pred;
    fp += !truth && pred;
    fn += truth && !pred;
    tn += !truth && !pred;
  }
  CHECK(r.binary.at(1, 1) == tp);
  CHECK(r.binary.at(0, 1) == fp);
  CHECK(r.binary.at(1, 0) == fn);
  CHECK(r.binary.at(0, 0) == tn);
  const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double rc = static_cast<double>(tp) / static_cast<double>(tp + fn);
  CHECK(r.binary.class_metrics(1).f1 == doctest::Approx(2 * p * rc / (p + rc)));
}

TEST_CASE("evaluation reports are written") {
  testing::TempDir dir;
  std::vector<LabeledSample> data(50);
  const auto r = evaluate(forest(), data, 20);
  CHECK(r.bench_n == 20);
  write_eval_report(r, dir.path());
  for (const char* f : {"confusion_5class.csv", "confusion_binary.csv", "metrics.csv", "summary.txt", "bench.txt"}) {
    CHECK(std::filesystem::exists(dir / f));
  }
  CHECK(testing::slurp(dir / "metrics.csv").rfind("scope,class,precision,recall,f1,support\n", 0) == 0);
}

TEST_CASE("benign-only traffic triggers no mitigation") {
  const auto r = run_loop(preset("benign", 4));
  CHECK_FALSE(r.aborted);
  CHECK(r.xapp.commands == 0);
  CHECK(r.releases() == 0);
  CHECK(r.final_rrc.at(1) == RrcState::Connected);
}

TEST_CASE("a hulk episode is terminated and the UE goes idle") {
  const auto r = run_loop(attack_scenario(TrafficClass::DosHulk, 7));
  REQUIRE_FALSE(r.aborted);
  REQUIRE(r.episodes.size() == 1);
  CHECK(r.episodes[0].cls == TrafficClass::DosHulk);
  CHECK(r.episodes[0].terminated());
  CHECK(r.false_mitigations == 0);
  CHECK(r.final_rrc.at(1) == RrcState::Idle);
  // nothing is reported once the UE is idle
  const auto applied = *r.episodes[0].applied_at_ms;
  for (const auto& d : r.decisions) CHECK(d.timestamp_ms <= applied);
}

TEST_CASE("detection latency follows the first attack verdict plus the dwell") {
  for (auto attack : {TrafficClass::DdosRipper, TrafficClass::DosHulk, TrafficClass::Slowloris}) {
    const auto r = run_loop(attack_scenario(attack, 11));
    REQUIRE(r.episodes.size() == 1);
    const auto& e = r.episodes[0];
    REQUIRE(e.first_attack_ms.has_value());
    REQUIRE(e.detection_latency_ms.has_value());
    // virtual time: every leg takes 0 us
    const auto& pol = r.policy;
    CHECK(*e.detection_latency_ms ==
          doctest::Approx(static_cast<double>(*e.first_attack_ms + (pol.dwell - 1) * r.period_ms)));
    CHECK(*e.applied_at_ms == e.start_ms + *e.first_attack_ms + (pol.dwell - 1) * r.period_ms);
  }
}

TEST_CASE("with mitigation off the attack runs to the end") {
  const auto r = run_loop(attack_scenario(TrafficClass::Slowloris, 3), false);
  CHECK(r.xapp.commands == 0);
  CHECK(r.decisions.size() == 200);
  CHECK(r.final_rrc.at(1) == RrcState::Connected);
  REQUIRE(r.episodes.size() == 1);
  CHECK_FALSE(r.episodes[0].terminated());
}

TEST_CASE("closed-loop reports are written") {
  testing::TempDir dir;
  const auto r = run_loop(attack_scenario(TrafficClass::DdosRipper, 2));
  write_closed_loop_report(r, dir.path());
  for (const char* f : {"summary.txt", "predictions.csv", "latency.csv", "ttc_cdf.csv", "events.csv", "episodes.csv"}) {
    CHECK(std::filesystem::exists(dir / f));
  }
  CHECK(testing::slurp(dir / "ttc_cdf.csv").rfind("time_ms,fraction\n", 0) == 0);
}

} // TEST_SUITE pipeline

TEST_SUITE("property") {

TEST_CASE("closed-loop reports are bit-for-bit reproducible in virtual time") {
  testing::TempDir a, b;
  auto sc = preset("closed-loop", 5);
  write_closed_loop_report(run_loop(sc), a.path());
  write_closed_loop_report(run_loop(sc), b.path());
  for (const auto& entry : std::filesystem::directory_iterator(a.path())) {
    const auto name = entry.path().filename().string();
    REQUIRE(std::filesystem::exists(b / name));
    CHECK_MESSAGE(testing::slurp(entry.path()) == testing::slurp(b / name), name);
  }
}

TEST_CASE("every virtual-time decision satisfies the delay identity") {
  const auto r = run_loop(preset("closed-loop", 8));
  REQUIRE(r.latency.has_value());
  CHECK(r.latency->n == r.decisions.size());
  CHECK(r.latency->identity_failures == 0);
  CHECK(r.latency->non_monotone == 0);
  CHECK(r.latency->T_d_us.max == 0.0);
}

} // TEST_SUITE property
