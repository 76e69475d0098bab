#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "mgcs/orchestrator.hpp"

using namespace mgcs;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const char* name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

ScenarioConfig short_scenario(double hours) {
  auto cfg = default_scenario();
  cfg.duration_hours = hours;
  return cfg;
}

}  // namespace

TEST_CASE("virtual run writes the full output directory") {
  const auto dir = fresh_dir("orch_virtual");
  const auto cfg = short_scenario(0.1);
  const auto m = run_scenario(cfg, {ClockMode::Virtual, dir, ""});
  for (const char* f : {"scenario.cfg", "plant_trace.csv", "plan_log.csv",
                        "delay_samples.csv", "metrics.txt", "run.log"})
    CHECK(fs::exists(fs::path(dir) / f));
  const auto loaded = load_metrics_file(dir + "/metrics.txt");
  CHECK(loaded.total_cost == m.total_cost);
  CHECK(loaded.ems_ticks == m.ems_ticks);
  CHECK(load_scenario_file(dir + "/scenario.cfg") == cfg);
  // wall time lives in run.log only
  std::ifstream metrics(dir + "/metrics.txt");
  std::string text((std::istreambuf_iterator<char>(metrics)),
                   std::istreambuf_iterator<char>());
  CHECK(text.find("wall_time") == std::string::npos);
}

TEST_CASE("compare accepts runs differing only in network settings") {
  const auto dir_a = fresh_dir("orch_cmp_a");
  const auto dir_b = fresh_dir("orch_cmp_b");
  auto cfg = short_scenario(0.1);
  run_scenario(cfg, {ClockMode::Virtual, dir_a, ""});
  cfg.traffic_class = TrafficClass::DS0;
  cfg.congestion = 0.5;
  run_scenario(cfg, {ClockMode::Virtual, dir_b, ""});

  const auto report = compare_runs(dir_a, dir_b);
  CHECK(!report.text.empty());
  CHECK(report.b.delay_up.mean_ms > report.a.delay_up.mean_ms);

  // identical directories compare with zero deltas
  const auto same = compare_runs(dir_a, dir_a);
  CHECK(same.a.total_cost == same.b.total_cost);
  CHECK(same.a.delay_up.count == same.b.delay_up.count);

  // a different seed is a different scenario
  const auto dir_c = fresh_dir("orch_cmp_c");
  cfg = short_scenario(0.1);
  cfg.rng_seed = 43;
  run_scenario(cfg, {ClockMode::Virtual, dir_c, ""});
  CHECK_THROWS_AS(compare_runs(dir_a, dir_c), OrchestratorError);
}

TEST_CASE("calibration sweep covers 20 cells and tracks the reference") {
  const auto table = calibrate_netem(4000, 5);
  REQUIRE(table.size() == 20);
  for (const auto& cell : table) {
    CHECK(cell.count == 4000);
    CHECK(cell.ref_mean_ms == reference_mean_delay_ms(cell.cls, cell.rho));
    CHECK(std::fabs(cell.rel_err) < 0.10);
  }
  CHECK(reference_mean_delay_ms(TrafficClass::DS0, 0.0) == 24.25);
  CHECK(reference_mean_delay_ms(TrafficClass::DS3, 0.75) == 2.081);
  CHECK_THROWS_AS(reference_mean_delay_ms(TrafficClass::DS0, 0.33),
                  OrchestratorError);
  const auto path =
      (fs::temp_directory_path() / "orch_calibration.csv").string();
  write_calibration_csv(path, table);
  CHECK(fs::file_size(path) > 0);
}

TEST_CASE("realtime mode runs the three-process loop") {
  const auto dir = fresh_dir("orch_realtime");
  auto cfg = short_scenario(0.1);  // 360 sim s = 0.6 wall s at x600
  const auto m =
      run_scenario(cfg, {ClockMode::Realtime, dir, MGCOSIM_BIN});
  for (const char* f : {"scenario.cfg", "plant_trace.csv", "plan_log.csv",
                        "delay_samples.csv", "metrics.txt", "run.log"})
    CHECK(fs::exists(fs::path(dir) / f));
  CHECK(m.ems_ticks >= 1);
  CHECK(m.delay_up.count > 0);
  CHECK(m.soc_violations == 0);
  const auto loaded = load_metrics_file(dir + "/metrics.txt");
  CHECK(loaded.ems_ticks == m.ems_ticks);
}

TEST_CASE("realtime mode validates its options") {
  auto cfg = short_scenario(0.1);
  CHECK_THROWS_AS(run_scenario(cfg, {ClockMode::Realtime, "", MGCOSIM_BIN}),
                  OrchestratorError);
  CHECK_THROWS_AS(
      run_scenario(cfg, {ClockMode::Realtime, fresh_dir("orch_noexe"), ""}),
      OrchestratorError);
}
