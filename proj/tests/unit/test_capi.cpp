// Exercises the shared library through its C header only.
#include "ranids/ranids.h"

#include <doctest.h>

#include <unistd.h>

#include <atomic>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

namespace {

struct TmpDir {
  std::filesystem::path path;
  TmpDir() {
    static int n = 0;
    path = std::filesystem::temp_directory_path() / ("ranids_capi_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
    std::filesystem::create_directories(path);
  }
  ~TmpDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string operator/(const char* name) const { return (path / name).string(); }
};

// Dataset and model shared across cases.
struct Trained {
  TmpDir dir;
  std::string train_csv = dir / "train.csv";
  std::string test_csv = dir / "test.csv";
  ranids_model* model = nullptr;

  Trained() {
    ranids_scenario* s = nullptr;
    REQUIRE(ranids_scenario_preset("one-ue", 1, &s) == RANIDS_OK);
    size_t rows = 0, ues = 0;
    REQUIRE(ranids_collect(s, train_csv.c_str(), &rows, &ues) == RANIDS_OK);
    ranids_scenario_free(s);
    REQUIRE(ranids_scenario_preset("two-ue", 2, &s) == RANIDS_OK);
    REQUIRE(ranids_scenario_set_duration_ms(s, 60'000) == RANIDS_OK);
    REQUIRE(ranids_collect(s, test_csv.c_str(), &rows, &ues) == RANIDS_OK);
    ranids_scenario_free(s);
    ranids_train_params p;
    ranids_train_params_default(&p);
    p.n_trees = 20;
    p.threads = 1;
    REQUIRE(ranids_train(train_csv.c_str(), "rf", &p, 1, &model) == RANIDS_OK);
  }
  ~Trained() { ranids_model_free(model); }
};

Trained& trained() {
  static Trained t;
  return t;
}

} // namespace

TEST_SUITE("capi") {

TEST_CASE("version and status names") {
  CHECK(std::strlen(ranids_version()) > 0);
  CHECK(std::string(ranids_status_name(RANIDS_OK)) == "ok");
  CHECK(std::string(ranids_status_name(RANIDS_E_PARSE)) == "parse error");
  CHECK(std::string(ranids_status_name(static_cast<ranids_status>(99))) == "unknown status");
  CHECK(ranids_feature_count() == 10);
  CHECK(std::string(ranids_class_name(0)) == "web");
  CHECK(std::string(ranids_class_name(4)) == "slowloris");
  CHECK(std::string(ranids_class_name(5)).empty());
}

TEST_CASE("NULL handles are rejected with a message") {
  ranids_scenario* s = nullptr;
  CHECK(ranids_scenario_preset(nullptr, 1, &s) == RANIDS_E_INVALID);
  CHECK(std::string(ranids_last_error()).find("NULL") != std::string::npos);
  CHECK(ranids_scenario_set_seed(nullptr, 1) == RANIDS_E_INVALID);
  int cls = -1;
  double x[10] = {};
  CHECK(ranids_model_predict(nullptr, x, 10, &cls) == RANIDS_E_INVALID);
  CHECK(ranids_policy_set_window(nullptr, 3) == RANIDS_E_INVALID);
  ranids_loop_result lr;
  CHECK(ranids_closed_loop(nullptr, nullptr, nullptr, 1, RANIDS_INPROCESS, nullptr, &lr) == RANIDS_E_INVALID);
  CHECK(std::string(ranids_model_algo(nullptr)).empty());
  // freeing NULL is a no-op
  ranids_scenario_free(nullptr);
  ranids_model_free(nullptr);
  ranids_policy_free(nullptr);
}

TEST_CASE("errors map to status codes and success clears the message") {
  ranids_scenario* s = nullptr;
  CHECK(ranids_scenario_preset("nope", 1, &s) == RANIDS_E_INVALID);
  CHECK(std::strlen(ranids_last_error()) > 0);
  CHECK(ranids_scenario_parse("duration_ms = soon\n", &s) != RANIDS_OK);
  CHECK(ranids_scenario_load("/nonexistent/scenario.cfg", &s) == RANIDS_E_IO);
  ranids_model* m = nullptr;
  CHECK(ranids_model_load("/nonexistent/model.json", &m) == RANIDS_E_IO);
  CHECK(ranids_train("/nonexistent.csv", "rf", nullptr, 1, &m) == RANIDS_E_IO);
  CHECK(ranids_scenario_preset("benign", 1, &s) == RANIDS_OK);
  CHECK(std::string(ranids_last_error()).empty());
  CHECK(ranids_scenario_set_duration_ms(s, -5) == RANIDS_E_INVALID);
  ranids_scenario_free(s);
}

TEST_CASE("scenario text uses the needed-size protocol") {
  ranids_scenario* s = nullptr;
  REQUIRE(ranids_scenario_preset("two-ue", 3, &s) == RANIDS_OK);
  size_t n = 0;
  CHECK(ranids_scenario_ue_count(s, &n) == RANIDS_OK);
  CHECK(n == 2);
  size_t needed = 0;
  CHECK(ranids_scenario_to_text(s, nullptr, 0, &needed) == RANIDS_OK);
  REQUIRE(needed > 1);
  std::vector<char> buf(needed);
  CHECK(ranids_scenario_to_text(s, buf.data(), buf.size(), &needed) == RANIDS_OK);
  CHECK(std::strlen(buf.data()) + 1 == needed);
  ranids_scenario* back = nullptr;
  CHECK(ranids_scenario_parse(buf.data(), &back) == RANIDS_OK);
  ranids_scenario_free(back);
  ranids_scenario_free(s);
}

TEST_CASE("train, predict, save and reload") {
  auto& t = trained();
  CHECK(std::string(ranids_model_algo(t.model)) == "rf");
  double x[10] = {12, 20, 20, 18, 16, 5e6, 2.5e7, 800, 20, 0.024};
  int before = -1, after = -1;
  CHECK(ranids_model_predict(t.model, x, 10, &before) == RANIDS_OK);
  CHECK(before >= 0);
  CHECK(before < 5);
  CHECK(ranids_model_predict(t.model, x, 9, &before) == RANIDS_E_INVALID);

  const std::string path = t.dir / "m.json";
  CHECK(ranids_model_save(t.model, path.c_str()) == RANIDS_OK);
  ranids_model* m = nullptr;
  REQUIRE(ranids_model_load(path.c_str(), &m) == RANIDS_OK);
  CHECK(ranids_model_predict(m, x, 10, &after) == RANIDS_OK);
  CHECK(after == before);
  ranids_model_free(m);

  std::ofstream(t.dir / "bad.json") << "{\"format\":\"ranids-model\"";
  CHECK(ranids_model_load((t.dir / "bad.json").c_str(), &m) != RANIDS_OK);
  CHECK(ranids_train(t.train_csv.c_str(), "svm", nullptr, 1, &m) == RANIDS_E_INVALID);
}

TEST_CASE("evaluate fills the result struct") {
  auto& t = trained();
  ranids_eval_result r;
  REQUIRE(ranids_evaluate(t.model, t.test_csv.c_str(), nullptr, 100, &r) == RANIDS_OK);
  CHECK(r.samples == 1200);
  std::uint64_t total = 0, diag = 0;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      total += r.confusion[i][j];
      if (i == j) diag += r.confusion[i][j];
    }
  CHECK(total == r.samples);
  CHECK(r.accuracy == doctest::Approx(static_cast<double>(diag) / static_cast<double>(total)));
  CHECK(r.bench_n == 100);
  CHECK(r.delta_i_median_us > 0.0);
  double med = 0.0;
  CHECK(ranids_bench_inference(t.model, t.test_csv.c_str(), 50, &med) == RANIDS_OK);
  CHECK(med > 0.0);
}

TEST_CASE("policy setters validate") {
  ranids_policy* p = nullptr;
  REQUIRE(ranids_policy_default(&p) == RANIDS_OK);
  CHECK(ranids_policy_set_window(p, 0) == RANIDS_E_INVALID);
  CHECK(ranids_policy_set_dwell(p, 2) == RANIDS_OK);
  CHECK(ranids_policy_set_action(p, "slowloris", "drop") == RANIDS_OK);
  CHECK(ranids_policy_set_action(p, "ftp", "drop") == RANIDS_E_INVALID);
  CHECK(ranids_policy_set_action(p, "web", "launch") == RANIDS_E_INVALID);
  ranids_policy_free(p);
}

TEST_CASE("in-process closed loop releases the attacker") {
  auto& t = trained();
  ranids_scenario* s = nullptr;
  REQUIRE(ranids_scenario_preset("closed-loop", 3, &s) == RANIDS_OK);
  ranids_loop_result r;
  REQUIRE(ranids_closed_loop(s, t.model, nullptr, 1, RANIDS_INPROCESS, nullptr, &r) == RANIDS_OK);
  CHECK(r.aborted == 0);
  CHECK(r.releases == 1);
  CHECK(r.episodes == 1);
  CHECK(r.episodes_terminated == 1);
  CHECK(r.false_mitigations == 0);
  CHECK(r.ues_idle == 1);
  CHECK(r.identity_failures == 0);
  ranids_scenario_free(s);
}

TEST_CASE("broker, simulator and xapp over TCP") {
  auto& t = trained();
  TmpDir logs;
  ranids_clear_stop();
  std::atomic<uint16_t> port{0};
  std::thread broker([&] {
    ranids_serve_broker(
        "127.0.0.1:0", [](uint16_t p, void* user) { static_cast<std::atomic<uint16_t>*>(user)->store(p); }, &port);
  });
  while (port.load() == 0) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  const std::string ep = "127.0.0.1:" + std::to_string(port.load());

  uint64_t decisions = 0;
  ranids_status xs = RANIDS_E_INTERNAL;
  std::thread xapp([&] { xs = ranids_run_xapp(t.model, nullptr, ep.c_str(), logs.path.c_str(), 2500, &decisions); });
  std::this_thread::sleep_for(std::chrono::milliseconds(200));

  ranids_scenario* s = nullptr;
  REQUIRE(ranids_scenario_parse("duration_ms = 1500\ntime_mode = realtime\nues = 1\nue.1.script = web:1500\n", &s) ==
          RANIDS_OK);
  uint64_t frames = 0;
  CHECK(ranids_run_sim(s, ep.c_str(), &frames) == RANIDS_OK);
  CHECK(frames == 15);
  ranids_scenario_free(s);

  xapp.join();
  ranids_request_stop();
  broker.join();
  ranids_clear_stop();
  CHECK(xs == RANIDS_OK);
  CHECK(decisions == 15);
  CHECK(std::filesystem::exists(logs.path / "predictions.csv"));
}

} // TEST_SUITE capi
