#include "helpers.hpp"

#include "ranids/error.hpp"
#include "ranids/xapp.hpp"

#include <doctest.h>

#include <algorithm>

using namespace ranids;
using namespace ranids::xapp;

namespace {

// A tree that maps cqi == class index to that class, so tests can dictate
// predictions through the measurement itself.
ml::Model coded_model() {
  ml::LabeledVectors v(kNumFeatures, kNumClasses);
  for (int rep = 0; rep < 4; ++rep) {
    for (int c = 0; c < kNumClasses; ++c) {
      FeatureVector x{};
      x[0] = c;
      v.add(x, c);
    }
  }
  ml::TreeParams p;
  p.min_samples_split = 2;
  return ml::train_tree(v, p);
}

bus::Frame frame_for(TrafficClass predicted, std::int64_t ts_ms, std::uint16_t ue = 1,
                     std::optional<TrafficClass> truth = std::nullopt) {
  KpmSample s;
  s.bs_id = 1;
  s.ue_id = ue;
  s.timestamp_ms = ts_ms;
  s.cqi = class_index(predicted);
  return make_measurement_frame(s, truth.value_or(predicted), static_cast<std::uint64_t>(ts_ms) * 1000);
}

struct Feed {
  VirtualClock clock;
  XappEngine engine;
  std::int64_t t = 0;
  std::vector<Outgoing> sent;

  explicit Feed(PolicyMap p = {}) : engine(coded_model(), p, clock) {}

  void push(TrafficClass c, int n = 1, std::uint16_t ue = 1) {
    for (int i = 0; i < n; ++i) {
      clock.set_ms(t);
      if (auto o = engine.on_measurement(frame_for(c, t, ue))) sent.push_back(*o);
      t += 100;
    }
  }
};

// Plurality with ties broken by recency, recomputed from scratch.
TrafficClass recount(const std::deque<TrafficClass>& w) {
  int best_count = -1;
  int best_pos = -1;
  TrafficClass best = w.back();
  for (auto c : kAllClasses) {
    int count = 0;
    int pos = -1;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (w[i] == c) {
        ++count;
        pos = static_cast<int>(i);
      }
    }
    if (count > best_count || (count == best_count && pos > best_pos)) {
      best_count = count;
      best_pos = pos;
      best = c;
    }
  }
  return best;
}

Decision decided(std::uint16_t ue, std::int64_t ts, TrafficClass smoothed) {
  Decision d;
  d.ue_id = ue;
  d.timestamp_ms = ts;
  d.smoothed = smoothed;
  d.predicted = smoothed;
  return d;
}

} // namespace

TEST_SUITE("xapp") {

TEST_CASE("control-loop delay from the reference legs") {
  // t_n = 670, delta_d = 45, delta_i = 2860 -> 3620
  LatencyTrace t;
  t.t_bs_send_us = 0;
  t.t_bus_in_us = 300;      // bd_up 300
  t.t_bus_out_us = 345;     // d_up 45
  t.t_xapp_recv_us = 380;   // dr_up 35
  t.t_infer_start_us = 380;
  t.t_infer_end_us = 3240;  // delta_i 2860
  t.has_command = true;
  t.t_cmd_sent_us = 3240;
  t.command_leg = true;
  t.t_cmd_bus_in_us = 3275; // dr_down 35
  t.t_cmd_bus_out_us = 3320; // d_down 45
  t.t_cmd_applied_us = 3620; // bd_down 300
  CHECK(t.t_n_us() == 670);
  CHECK(t.delta_d_us() == 45.0);
  CHECK(t.delta_i_us() == 2860);
  CHECK(t.T_d_us() == 3620);
  CHECK(t.monotone());
}

TEST_CASE("an all-zero trace leaves the full budget") {
  LatencyTrace t;
  CHECK(t.T_d_us() == 0);
  const auto r = latency_report({t});
  CHECK(r.margin_median_us == static_cast<double>(kBudgetUs));
  CHECK(r.over_budget == 0);
  CHECK(r.identity_failures == 0);
}

TEST_CASE("without a command leg the downlink mirrors the uplink") {
  LatencyTrace t;
  t.t_bus_in_us = 10;
  t.t_bus_out_us = 17;
  t.t_xapp_recv_us = 20;
  t.t_infer_start_us = 25;
  t.t_infer_end_us = 30;
  CHECK(t.dr_down_us() == t.dr_up_us());
  CHECK(t.d_down_us() == t.d_up_us());
  CHECK(t.bd_down_us() == t.bd_up_us());
  CHECK(t.T_d_us() == 2 * 20 + 5);
}

TEST_CASE("non-monotone stamps are flagged") {
  LatencyTrace t;
  t.t_bs_send_us = 10;
  t.t_bus_in_us = 5;
  t.t_bus_out_us = 12;
  t.t_xapp_recv_us = 12;
  t.t_infer_start_us = 12;
  t.t_infer_end_us = 12;
  CHECK_FALSE(t.monotone());
  CHECK(latency_report({t}).non_monotone == 1);
}

TEST_CASE("quantiles interpolate between ranks") {
  CHECK(quantile({1, 2, 3, 4}, 0.5) == doctest::Approx(2.5));
  CHECK(quantile({5}, 0.99) == 5.0);
  CHECK(quantile({4, 1, 3, 2}, 1.0) == 4.0);
  CHECK(quantile({0, 10}, 0.99) == doctest::Approx(9.9));
  CHECK_THROWS_AS(latency_report({}), Error);
}

TEST_CASE("window vote examples") {
  using C = TrafficClass;
  CHECK(window_vote({C::Web, C::Web, C::Slowloris}) == C::Web);
  CHECK(window_vote({C::Web, C::Slowloris}) == C::Slowloris);
  CHECK(window_vote({C::Slowloris, C::Web, C::Web, C::Slowloris, C::Voip}) == C::Slowloris);
  CHECK_THROWS_AS(window_vote({}), Error);
}

TEST_CASE("window 1 and dwell 1 pass raw predictions through") {
  PolicyMap p;
  p.window = 1;
  p.dwell = 1;
  Feed f(p);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) f.push(kAllClasses[rng() % kNumClasses]);
  for (const auto& d : f.engine.decisions()) {
    CHECK(d.smoothed == d.predicted);
    CHECK(d.window_full);
  }
}

TEST_CASE("a slowloris run of dwell full windows yields one release") {
  Feed f;
  f.push(TrafficClass::Web, 10);
  CHECK(f.sent.empty());
  // the vote flips on the 3rd attack sample and the dwell is met on the 5th
  f.push(TrafficClass::Slowloris, 4);
  CHECK(f.sent.empty());
  f.push(TrafficClass::Slowloris, 1);
  REQUIRE(f.sent.size() == 1);
  CHECK(f.sent[0].command.action == CommandAction::RrcRelease);
  CHECK(f.sent[0].command.ue_id == 1);
  CHECK(f.sent[0].command.decision_ts_ms == 1400);
  CHECK(f.sent[0].command.command_id == 1);
  f.push(TrafficClass::Slowloris, 50);
  CHECK(f.sent.size() == 1);
}

TEST_CASE("no command before the window is full") {
  PolicyMap p;
  p.window = 5;
  p.dwell = 1;
  Feed f(p);
  f.push(TrafficClass::DosHulk, 4);
  CHECK(f.sent.empty());
  f.push(TrafficClass::DosHulk, 1);
  CHECK(f.sent.size() == 1);
}

TEST_CASE("benign traffic never commands under the default policy") {
  Feed f;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 500; ++i) f.push(rng() % 2 ? TrafficClass::Web : TrafficClass::Voip);
  CHECK(f.sent.empty());
  CHECK(f.engine.stats().commands == 0);
}

TEST_CASE("benign dwell re-arms; non-forward benign actions are sent once") {
  PolicyMap p;
  p.action[class_index(TrafficClass::Voip)] = CommandAction::Prioritize;
  p.action[class_index(TrafficClass::DosHulk)] = CommandAction::Drop;
  Feed f(p);
  f.push(TrafficClass::Voip, 20);
  REQUIRE(f.sent.size() == 1);
  CHECK(f.sent[0].command.action == CommandAction::Prioritize);
  f.push(TrafficClass::DosHulk, 20);
  REQUIRE(f.sent.size() == 2);
  CHECK(f.sent[1].command.action == CommandAction::Drop);
  f.push(TrafficClass::Voip, 20);
  REQUIRE(f.sent.size() == 3);
  CHECK(f.sent[2].command.action == CommandAction::Prioritize);
  f.push(TrafficClass::DosHulk, 20);
  CHECK(f.sent.size() == 4);
}

TEST_CASE("mitigation off classifies but never commands") {
  Feed f;
  f.engine.set_mitigation(false);
  f.push(TrafficClass::DdosRipper, 30);
  CHECK(f.sent.empty());
  CHECK(f.engine.stats().decisions == 30);
}

TEST_CASE("UEs are smoothed independently") {
  Feed f;
  for (int i = 0; i < 10; ++i) {
    f.push(TrafficClass::Web, 1, 1);
    f.t -= 100;
    f.push(TrafficClass::DosHulk, 1, 2);
  }
  REQUIRE(f.sent.size() == 1);
  CHECK(f.sent[0].command.ue_id == 2);
}

TEST_CASE("malformed frames and a missing model are counted") {
  VirtualClock clock;
  XappEngine e(std::nullopt, {}, clock);
  CHECK_FALSE(e.has_model());
  e.on_measurement(frame_for(TrafficClass::Web, 0));
  CHECK(e.stats().dropped_no_model == 1);
  auto bad = frame_for(TrafficClass::Web, 100);
  bad.payload["cqi"] = 99;
  e.on_measurement(bad);
  CHECK(e.stats().malformed == 1);
  e.set_model(coded_model());
  e.on_measurement(frame_for(TrafficClass::Web, 200));
  CHECK(e.stats().decisions == 1);
  CHECK(e.stats().frames == 3);

  ml::LabeledVectors narrow(3, 2);
  narrow.add(std::vector<double>{0, 0, 0}, 0);
  CHECK_THROWS_AS(e.set_model(ml::train_tree(narrow, {})), Error);
}

TEST_CASE("events complete the command leg of their decision") {
  Feed f;
  f.push(TrafficClass::Slowloris, 8);
  REQUIRE(f.sent.size() == 1);
  CommandEvent ev;
  ev.bs_id = 1;
  ev.ue_id = 1;
  ev.command_id = f.sent[0].command.command_id;
  ev.action = CommandAction::RrcRelease;
  ev.rrc_after = RrcState::Idle;
  ev.t_cmd_sent_us = f.sent[0].command.issued_at_us;
  ev.t_cmd_bus_in_us = ev.t_cmd_sent_us + 10;
  ev.t_cmd_bus_out_us = ev.t_cmd_sent_us + 20;
  ev.t_cmd_applied_us = ev.t_cmd_sent_us + 35;
  f.engine.on_event(make_event_frame(ev, 0));
  const auto log = f.engine.decisions();
  const auto it = std::find_if(log.begin(), log.end(), [](const Decision& d) { return d.command.has_value(); });
  REQUIRE(it != log.end());
  CHECK(it->trace.command_leg);
  CHECK(it->trace.bd_down_us() == 15);
  CHECK(it->trace.d_down_us() == 10);

  ev.command_id = 999;
  f.engine.on_event(make_event_frame(ev, 0));
  CHECK(f.engine.stats().unmatched_events == 1);
}

TEST_CASE("time to correct: a correct first sample settles at 0") {
  const Segment seg{1, TrafficClass::Web, 0, 1000};
  std::vector<Decision> log;
  for (std::int64_t t = 0; t < 1000; t += 100) log.push_back(decided(1, t, TrafficClass::Web));
  const auto r = time_to_correct(log, {seg});
  CHECK(r.covered == 1);
  CHECK(r.segments[0].time_ms == 0);
  CHECK(r.fraction_at(0) == 1.0);
}

TEST_CASE("time to correct: settling on sample index 5 gives 500 ms") {
  const Segment seg{1, TrafficClass::Slowloris, 2000, 4000};
  std::vector<Decision> log;
  for (int i = 0; i < 20; ++i) {
    log.push_back(decided(1, 2000 + i * 100, i < 5 ? TrafficClass::Web : TrafficClass::Slowloris));
  }
  const auto r = time_to_correct(log, {seg});
  CHECK(r.segments[0].time_ms == 500);
  CHECK(r.fraction_at(499) == 0.0);
  CHECK(r.fraction_at(500) == 1.0);
}

TEST_CASE("time to correct: a relapse pushes the settle time out") {
  const Segment seg{1, TrafficClass::Voip, 0, 1000};
  std::vector<Decision> log;
  const char* pattern = "vvwvvvvvvv"; // wrong at index 2
  for (int i = 0; i < 10; ++i) log.push_back(decided(1, i * 100, pattern[i] == 'v' ? TrafficClass::Voip : TrafficClass::Web));
  CHECK(time_to_correct(log, {seg}).segments[0].time_ms == 300);
}

TEST_CASE("time to correct: hand-traced CDF") {
  // Four segments: settle at 0, 200, 200 and never; one more has no samples.
  std::vector<Segment> segs{{1, TrafficClass::Web, 0, 500},
                            {1, TrafficClass::Voip, 500, 1000},
                            {2, TrafficClass::DosHulk, 0, 500},
                            {2, TrafficClass::Web, 500, 1000},
                            {3, TrafficClass::Web, 0, 500}};
  std::vector<Decision> log;
  for (int i = 0; i < 5; ++i) {
    log.push_back(decided(1, i * 100, TrafficClass::Web));
    log.push_back(decided(1, 500 + i * 100, i < 2 ? TrafficClass::Web : TrafficClass::Voip));
    log.push_back(decided(2, i * 100, i < 2 ? TrafficClass::Web : TrafficClass::DosHulk));
    log.push_back(decided(2, 500 + i * 100, TrafficClass::DosHulk));
  }
  const auto r = time_to_correct(log, segs);
  CHECK(r.covered == 4);
  CHECK(r.never == 1);
  REQUIRE(r.cdf.size() == 2);
  CHECK(r.cdf[0] == std::pair<std::int64_t, double>{0, 0.25});
  CHECK(r.cdf[1] == std::pair<std::int64_t, double>{200, 0.75});
  CHECK(r.fraction_at(100) == 0.25);
  CHECK(r.fraction_at(10'000) == 0.75);
}

TEST_CASE("segments recovered from logged truth") {
  std::vector<Decision> log;
  for (int i = 0; i < 10; ++i) {
    auto d = decided(4, i * 100, TrafficClass::Web);
    d.truth = i < 6 ? TrafficClass::Web : TrafficClass::DosHulk;
    log.push_back(d);
  }
  const auto segs = segments_from_log(log, 100);
  REQUIRE(segs.size() == 2);
  CHECK(segs[0] == Segment{4, TrafficClass::Web, 0, 600});
  CHECK(segs[1] == Segment{4, TrafficClass::DosHulk, 600, 1000});
}

TEST_CASE("policy files") {
  const auto p = policy_from_config(KeyValueConfig::parse("window = 7\ndwell = 2\nslowloris = drop\nvoip = prioritize\n"));
  CHECK(p.window == 7);
  CHECK(p.dwell == 2);
  CHECK(p[TrafficClass::Slowloris] == CommandAction::Drop);
  CHECK(p[TrafficClass::Voip] == CommandAction::Prioritize);
  CHECK(p[TrafficClass::DosHulk] == CommandAction::RrcRelease);
  const auto back = policy_from_config(KeyValueConfig::parse(policy_to_text(p)));
  CHECK(back.action == p.action);
  CHECK(back.window == 7);
  CHECK_THROWS_AS(policy_from_config(KeyValueConfig::parse("window = 0\n")), Error);
  CHECK_THROWS_AS(policy_from_config(KeyValueConfig::parse("web = explode\n")), Error);
  CHECK_THROWS_AS(policy_from_config(KeyValueConfig::parse("windw = 3\n")), Error);
}

TEST_CASE("prediction log format") {
  testing::TempDir dir;
  Feed f;
  f.push(TrafficClass::Slowloris, 7); // window full at 5, dwell met at 7
  write_prediction_log(f.engine.decisions(), dir / "p.csv");
  const auto text = testing::slurp(dir / "p.csv");
  CHECK(text.rfind(std::string(kPredictionLogHeader) + "\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 8);
  CHECK(text.find("rrc_release") != std::string::npos);
}

} // TEST_SUITE xapp

TEST_SUITE("property") {

TEST_CASE("T_d identity and end-to-end oracle on 1000 random traces") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::uint64_t> gap(0, 5000);
  for (int i = 0; i < 1000; ++i) {
    LatencyTrace t;
    std::uint64_t now = gap(rng);
    t.t_bs_send_us = now;
    t.t_bus_in_us = now += gap(rng);
    t.t_bus_out_us = now += gap(rng);
    t.t_xapp_recv_us = now += gap(rng);
    const std::uint64_t queue_gap = i % 3 == 0 ? gap(rng) : 0;
    t.t_infer_start_us = now += queue_gap;
    t.t_infer_end_us = now += gap(rng);
    const bool leg = i % 2 == 0;
    t.has_command = leg;
    t.command_leg = leg;
    if (leg) {
      t.t_cmd_sent_us = now;
      t.t_cmd_bus_in_us = now += gap(rng);
      t.t_cmd_bus_out_us = now += gap(rng);
      t.t_cmd_applied_us = now += gap(rng);
    }
    const auto T = t.T_d_us();
    REQUIRE(static_cast<double>(T) == static_cast<double>(t.t_n_us()) + 2.0 * t.delta_d_us() + static_cast<double>(t.delta_i_us()));
    if (leg) {
      // wall time from send to apply, minus the wait before inference
      REQUIRE(T == static_cast<std::int64_t>(t.t_cmd_applied_us - t.t_bs_send_us - queue_gap));
    } else {
      REQUIRE(T == static_cast<std::int64_t>(2 * (t.t_xapp_recv_us - t.t_bs_send_us) +
                                             (t.t_infer_end_us - t.t_infer_start_us)));
    }
    REQUIRE(t.monotone());
  }
}

TEST_CASE("window vote matches a recount on random windows") {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 5000; ++i) {
    std::deque<TrafficClass> w;
    const std::size_t n = 1 + rng() % 9;
    for (std::size_t j = 0; j < n; ++j) w.push_back(kAllClasses[rng() % (1 + i % kNumClasses)]);
    REQUIRE(window_vote(w) == recount(w));
  }
}

TEST_CASE("commands never outnumber benign-to-attack transitions") {
  std::mt19937_64 rng(31);
  for (int run = 0; run < 20; ++run) {
    Feed f;
    // runs of random classes with random lengths
    while (f.t < 60'000) {
      const auto c = kAllClasses[rng() % kNumClasses];
      f.push(c, static_cast<int>(1 + rng() % 12));
    }
    std::size_t transitions = 0;
    std::optional<TrafficCategory> prev;
    for (const auto& d : f.engine.decisions()) {
      if (!d.window_full) continue;
      const auto cat = category_of(d.smoothed);
      if (cat == TrafficCategory::Attack && prev != TrafficCategory::Attack) ++transitions;
      prev = cat;
    }
    REQUIRE(f.sent.size() <= transitions);
    for (const auto& o : f.sent) REQUIRE(o.command.action == CommandAction::RrcRelease);
  }
}

TEST_CASE("every commanded decision carries a complete, monotone trace") {
  Feed f;
  std::mt19937_64 rng(41);
  while (f.t < 30'000) f.push(kAllClasses[rng() % kNumClasses], static_cast<int>(1 + rng() % 15));
  for (const auto& d : f.engine.decisions()) {
    REQUIRE(d.trace.monotone());
    if (d.command) {
      REQUIRE(d.trace.has_command);
      REQUIRE(d.trace.t_cmd_sent_us >= d.trace.t_infer_end_us);
      REQUIRE(d.command->decision_ts_ms == d.timestamp_ms);
    }
  }
}

} // TEST_SUITE property
