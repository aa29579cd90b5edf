// End-to-end acceptance run against the shared library. Prints one PASS/FAIL
// line per criterion and exits non-zero if any fail.
#include "ranids/ranids.h"

#include <CLI11.hpp>

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  int id;
  std::string title;
  bool pass;
  std::string detail;
};

std::vector<Verdict> g_verdicts;

void report(int id, const std::string& title, bool pass, const std::string& detail) {
  g_verdicts.push_back({id, title, pass, detail});
  std::printf("%s [%d] %s: %s\n", pass ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// Throws with the library's message on any non-OK status.
void ok(ranids_status s, const char* what) {
  if (s != RANIDS_OK) {
    throw std::runtime_error(std::string(what) + ": " + ranids_status_name(s) + ": " + ranids_last_error());
  }
}

struct Scenario {
  ranids_scenario* h = nullptr;
  Scenario(const char* preset, uint64_t seed) { ok(ranids_scenario_preset(preset, seed, &h), preset); }
  ~Scenario() { ranids_scenario_free(h); }
};

struct Model {
  ranids_model* h = nullptr;
  ~Model() { ranids_model_free(h); }
};

struct Policy {
  ranids_policy* h = nullptr;
  Policy() { ok(ranids_policy_default(&h), "policy"); }
  ~Policy() { ranids_policy_free(h); }
};

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return v[lo] + (v[hi] - v[lo]) * (pos - static_cast<double>(lo));
}

struct LatencyCheck {
  std::size_t rows = 0;
  std::size_t mismatches = 0;
  double p99_T_d_us = 0.0;
  double max_T_d_us = 0.0;
};

// Recomputes the delay identity from the per-leg columns of latency.csv.
LatencyCheck check_latency_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "timestamp_ms,ue_id,bd_up_us,d_up_us,dr_up_us,delta_i_us,dr_down_us,d_down_us,bd_down_us,t_n_us,T_d_us,"
              "command_leg") {
    throw std::runtime_error("unexpected latency header: " + line);
  }
  LatencyCheck c;
  std::vector<double> td;
  while (std::getline(in, line)) {
    std::vector<long long> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(std::stoll(cell));
    if (f.size() != 12) throw std::runtime_error("bad latency row: " + line);
    const long long bd_up = f[2], d_up = f[3], dr_up = f[4], di = f[5], dr_down = f[6], d_down = f[7],
                    bd_down = f[8], t_n = f[9], T_d = f[10];
    const long long t_n_re = bd_up + dr_up + dr_down + bd_down;
    const double delta_d = static_cast<double>(d_up + d_down) / 2.0;
    const double T_d_re = static_cast<double>(t_n_re) + 2.0 * delta_d + static_cast<double>(di);
    if (t_n_re != t_n || T_d_re != static_cast<double>(T_d)) ++c.mismatches;
    td.push_back(static_cast<double>(T_d));
    ++c.rows;
  }
  if (!td.empty()) {
    c.p99_T_d_us = quantile(td, 0.99);
    c.max_T_d_us = *std::max_element(td.begin(), td.end());
  }
  return c;
}

ranids_model* train(const std::string& csv, const char* algo, uint64_t seed) {
  ranids_train_params p;
  ranids_train_params_default(&p);
  p.n_trees = 100;
  p.max_depth = 15;
  p.min_samples_split = 5;
  p.min_samples_leaf = 1;
  ranids_model* m = nullptr;
  ok(ranids_train(csv.c_str(), algo, &p, seed, &m), algo);
  return m;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"ranids acceptance run"};
  uint64_t seed = 1;
  std::string out_dir;
  std::string unit_bin = RANIDS_UNIT_TESTS;
  int loop_runs = 20;
  app.add_option("--seed", seed, "Base seed");
  app.add_option("--out", out_dir, "Keep artifacts here (default: a temp dir that is removed)");
  app.add_option("--unit-tests", unit_bin, "Path of the unit test binary");
  app.add_option("--loop-runs", loop_runs, "Seeded closed-loop runs")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  const bool keep = !out_dir.empty();
  const fs::path work = keep ? fs::path(out_dir)
                             : fs::temp_directory_path() / ("ranids_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(work);
  const std::string train_csv = (work / "train_1ue.csv").string();
  const std::string test_csv = (work / "test_2ue.csv").string();

  std::printf("ranids %s acceptance, seed %llu, artifacts in %s\n", ranids_version(),
              static_cast<unsigned long long>(seed), work.string().c_str());

  Model rf, dt, knn, ada;
  ranids_eval_result e_rf{}, e_dt{}, e_knn{}, e_ada{};
  bool have_models = false;

  // 1. classifier quality
  try {
    const auto t0 = Clock::now();
    size_t rows = 0, ues = 0, test_rows = 0;
    {
      Scenario s("one-ue", seed);
      ok(ranids_collect(s.h, train_csv.c_str(), &rows, &ues), "collect train");
      Scenario t("two-ue", seed + 1);
      ok(ranids_collect(t.h, test_csv.c_str(), &test_rows, &ues), "collect test");
    }
    rf.h = train(train_csv, "rf", seed);
    ok(ranids_evaluate(rf.h, test_csv.c_str(), (work / "eval_rf").c_str(), 0, &e_rf), "evaluate rf");
    const double secs = seconds_since(t0);
    const bool pass = rows >= 6000 && ues == 2 && e_rf.accuracy >= 0.90 && e_rf.binary_f1_attack >= 0.93 && secs < 120.0;
    report(1, "RF classifier quality", pass,
           fmt("train %zu rows, test %zu rows, accuracy %.4f (>= 0.90), binary F1 %.4f (>= 0.93), %.1f s (< 120)",
               rows, test_rows, e_rf.accuracy, e_rf.binary_f1_attack, secs));
    have_models = true;
  } catch (const std::exception& ex) {
    report(1, "RF classifier quality", false, ex.what());
  }

  // 2. model ranking
  if (have_models) {
    try {
      dt.h = train(train_csv, "dt", seed);
      knn.h = train(train_csv, "knn", seed);
      ada.h = train(train_csv, "ada", seed);
      ok(ranids_evaluate(dt.h, test_csv.c_str(), (work / "eval_dt").c_str(), 0, &e_dt), "evaluate dt");
      ok(ranids_evaluate(knn.h, test_csv.c_str(), (work / "eval_knn").c_str(), 0, &e_knn), "evaluate knn");
      ok(ranids_evaluate(ada.h, test_csv.c_str(), (work / "eval_ada").c_str(), 0, &e_ada), "evaluate ada");
      const double tol = 0.05;
      const bool pass = e_rf.accuracy >= e_dt.accuracy - tol && e_dt.accuracy >= e_knn.accuracy - tol &&
                        e_dt.accuracy >= e_ada.accuracy - tol;
      report(2, "model ranking", pass,
             fmt("rf %.4f, dt %.4f, knn %.4f, ada %.4f (rf >= dt - 0.05, dt >= knn/ada - 0.05)", e_rf.accuracy,
                 e_dt.accuracy, e_knn.accuracy, e_ada.accuracy));
    } catch (const std::exception& ex) {
      report(2, "model ranking", false, ex.what());
    }
  } else {
    report(2, "model ranking", false, "skipped: training failed");
  }

  // 3. inference latency
  if (have_models && dt.h) {
    try {
      const auto t0 = Clock::now();
      double rf_us = 0.0, dt_us = 0.0;
      ok(ranids_bench_inference(rf.h, test_csv.c_str(), 10'000, &rf_us), "bench rf");
      ok(ranids_bench_inference(dt.h, test_csv.c_str(), 10'000, &dt_us), "bench dt");
      const double secs = seconds_since(t0);
      const bool pass = rf_us <= 10'000.0 && dt_us <= 3'000.0 && secs < 60.0;
      report(3, "inference latency", pass,
             fmt("median over 10^4: rf %.2f us (<= 10 ms), dt %.2f us (<= 3 ms), %.1f s", rf_us, dt_us, secs));
    } catch (const std::exception& ex) {
      report(3, "inference latency", false, ex.what());
    }
  } else {
    report(3, "inference latency", false, "skipped: training failed");
  }

  // 4. delay identity, virtual and loopback
  if (have_models) {
    try {
      Scenario s("closed-loop", seed);
      ok(ranids_scenario_set_duration_ms(s.h, 12'000), "duration");
      ranids_loop_result lr{};
      const fs::path dir = work / "loopback";
      ok(ranids_closed_loop(s.h, rf.h, nullptr, 1, RANIDS_LOOPBACK, dir.c_str(), &lr), "loopback run");
      const auto c = check_latency_csv(dir / "latency.csv");
      ranids_loop_result vr{};
      const fs::path vdir = work / "virtual";
      ok(ranids_closed_loop(s.h, rf.h, nullptr, 1, RANIDS_INPROCESS, vdir.c_str(), &vr), "virtual run");
      const auto v = check_latency_csv(vdir / "latency.csv");
      const bool pass = c.rows > 0 && c.rows == lr.decisions && c.mismatches == 0 && lr.identity_failures == 0 &&
                        c.p99_T_d_us < 50'000.0 && lr.non_monotone == 0 && v.rows == vr.decisions &&
                        v.mismatches == 0 && v.max_T_d_us == 0.0;
      report(4, "delay identity and loopback budget", pass,
             fmt("%zu decisions, %zu identity mismatches, %zu non-monotone, T_d p99 %.0f us (< 50 ms), max %.0f us, "
                 "margin %.3f s of 1 s; virtual %zu decisions, %zu mismatches, T_d max %.0f us",
                 c.rows, c.mismatches, lr.non_monotone, c.p99_T_d_us, c.max_T_d_us, 1.0 - c.p99_T_d_us / 1e6, v.rows, v.mismatches, v.max_T_d_us));
    } catch (const std::exception& ex) {
      report(4, "delay identity and loopback budget", false, ex.what());
    }
  } else {
    report(4, "delay identity and loopback budget", false, "skipped: training failed");
  }

  // 5. time-to-correct
  if (have_models) {
    try {
      const auto t0 = Clock::now();
      Scenario s("two-ue", seed + 1);
      ok(ranids_scenario_set_duration_ms(s.h, 600'000), "duration");
      ok(ranids_scenario_set_transient_ms(s.h, 500), "transient");
      Policy p;
      ok(ranids_policy_set_window(p.h, 5), "window");
      ranids_loop_result lr{};
      const fs::path dir = work / "ttc";
      ok(ranids_closed_loop(s.h, rf.h, p.h, 0, RANIDS_INPROCESS, dir.c_str(), &lr), "ttc run");
      const auto c = check_latency_csv(dir / "latency.csv");
      const double secs = seconds_since(t0);
      const bool pass = lr.segments_covered >= 100 && lr.fraction_correct_500ms >= 0.90 && c.mismatches == 0 &&
                        secs < 120.0;
      report(5, "time-to-correct", pass,
             fmt("%zu segments, %.4f correct by 500 ms (>= 0.90), per-interval accuracy %.4f, smoothed %.4f, "
                 "%zu identity mismatches, %.1f s",
                 lr.segments_covered, lr.fraction_correct_500ms, lr.per_interval_accuracy, lr.smoothed_accuracy,
                 c.mismatches, secs));
    } catch (const std::exception& ex) {
      report(5, "time-to-correct", false, ex.what());
    }
  } else {
    report(5, "time-to-correct", false, "skipped: training failed");
  }

  // 6. closed-loop mitigation over seeded runs
  if (have_models) {
    try {
      int good = 0;
      std::size_t false_mit = 0, episodes = 0, terminated = 0;
      std::string first_bad;
      for (int i = 0; i < loop_runs; ++i) {
        const uint64_t run_seed = seed * 1000 + static_cast<uint64_t>(i);
        Scenario s("closed-loop", run_seed);
        ranids_loop_result lr{};
        ok(ranids_closed_loop(s.h, rf.h, nullptr, 1, RANIDS_INPROCESS, nullptr, &lr), "closed loop");
        false_mit += lr.false_mitigations;
        episodes += lr.episodes;
        terminated += lr.episodes_terminated;
        // one attacker that must go idle, one benign UE that must stay connected
        const bool run_ok = lr.episodes >= 1 && lr.episodes_terminated == lr.episodes && lr.releases == lr.episodes &&
                            lr.false_mitigations == 0 && lr.ues_idle == 1;
        if (run_ok) {
          ++good;
        } else if (first_bad.empty()) {
          first_bad = fmt("; seed %llu: episodes %zu, terminated %zu, releases %zu, false %zu, idle %zu",
                          static_cast<unsigned long long>(run_seed), lr.episodes, lr.episodes_terminated,
                          lr.releases, lr.false_mitigations, lr.ues_idle);
        }
      }
      report(6, "closed-loop mitigation", good == loop_runs,
             fmt("%d/%d runs clean, %zu/%zu episodes terminated by one release, %zu false mitigations%s", good,
                 loop_runs, terminated, episodes, false_mit, first_bad.c_str()));
    } catch (const std::exception& ex) {
      report(6, "closed-loop mitigation", false, ex.what());
    }
  } else {
    report(6, "closed-loop mitigation", false, "skipped: training failed");
  }

  // 7. oracle and property suites
  {
    const std::string cmd = "\"" + unit_bin + "\" -ts=property,ml,databus -nv > \"" + (work / "unit.log").string() + "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    std::ifstream log(work / "unit.log");
    std::string line, summary;
    while (std::getline(log, line)) {
      if (line.find("test cases:") != std::string::npos) summary = line;
    }
    report(7, "oracle and property suites", rc == 0, summary.empty() ? "no summary from " + unit_bin : summary);
  }

  const auto failed = std::count_if(g_verdicts.begin(), g_verdicts.end(), [](const Verdict& v) { return !v.pass; });
  std::printf("%zu/%zu criteria passed\n", g_verdicts.size() - static_cast<std::size_t>(failed), g_verdicts.size());
  if (!keep) {
    std::error_code ec;
    fs::remove_all(work, ec);
  }
  return failed == 0 ? 0 : 1;
}
