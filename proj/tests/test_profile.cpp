#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mgcs/profile.hpp"

using namespace mgcs;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("linear interpolation between samples") {
  TimeSeriesProfile p;
  p.kind = ProfileKind::PriceGrid;
  p.samples = {{0.0, 10.0}, {100.0, 20.0}, {200.0, 0.0}};
  CHECK(p.value_at(0.0) == doctest::Approx(10.0));
  CHECK(p.value_at(50.0) == doctest::Approx(15.0));
  CHECK(p.value_at(150.0) == doctest::Approx(10.0));
  CHECK(p.value_at(200.0) == doctest::Approx(0.0));
}

TEST_CASE("lookups wrap around the day") {
  TimeSeriesProfile p;
  p.samples = {{3600.0, 1.0}, {82800.0, 3.0}};
  // between the last sample (23:00) and the first (01:00) of the next day
  const double gap = 86400.0 - 82800.0 + 3600.0;  // 2 h
  CHECK(p.value_at(84600.0) == doctest::Approx(3.0 + (1800.0 / gap) * -2.0));
  CHECK(p.value_at(0.0) == doctest::Approx(2.0));  // halfway through the gap
  // querying beyond one day wraps
  CHECK(p.value_at(3600.0 + 86400.0) == doctest::Approx(1.0));
  CHECK(p.value_at(-82800.0) == doctest::Approx(1.0));  // -23 h == +1 h
}

TEST_CASE("integral matches closed form for a constant profile") {
  TimeSeriesProfile p;
  for (int h = 0; h < 24; ++h) p.samples.emplace_back(h * 3600.0, 5.0);
  CHECK(p.integral_value_hours() == doctest::Approx(5.0 * 24.0));
}

TEST_CASE("integral of the half-sine pv day matches the analytic value") {
  auto p = generate_pv_profile(1000.0, 6.0, 18.0, 60.0);
  // integral of A sin(pi t / T) over T hours = 2 A T / pi
  const double expect = 2.0 * 1000.0 * 12.0 / std::numbers::pi;
  CHECK(p.integral_value_hours() == doctest::Approx(expect).epsilon(1e-3));
}

TEST_CASE("pv profile is zero at night and peaks at the rating") {
  auto p = generate_pv_profile(1450.0, 6.0, 18.0, 300.0, 2);
  CHECK(p.bus_id == 2);
  CHECK(p.value_at(0.0) == 0.0);
  CHECK(p.value_at(5.9 * 3600.0) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(p.value_at(12.0 * 3600.0) == doctest::Approx(1450.0));
  CHECK(p.value_at(22.0 * 3600.0) == 0.0);
  for (const auto& [t, v] : p.samples) CHECK(v >= 0.0);
  CHECK_THROWS_AS(generate_pv_profile(100.0, 18.0, 6.0), ProfileError);
}

TEST_CASE("load profile respects bounds and hits the rated peak") {
  BusSpec bus;
  bus.bus_id = 3;
  bus.load_max_w = 720.0;
  bus.load_min_w = 240.0;
  auto p = generate_load_profile(bus, 8.0, 19.0, 7, 300.0);
  CHECK(p.max_value() == doctest::Approx(720.0));
  CHECK(p.min_value() >= 240.0);
  for (const auto& [t, v] : p.samples) {
    CHECK(v >= 240.0);
    CHECK(v <= 720.0);
  }
  // seeded generation is reproducible, and different seeds differ
  auto q = generate_load_profile(bus, 8.0, 19.0, 7, 300.0);
  CHECK(p.samples == q.samples);
  auto r = generate_load_profile(bus, 8.0, 19.0, 8, 300.0);
  CHECK(p.samples != r.samples);
}

TEST_CASE("csv round trip preserves exact sample values") {
  auto p = generate_load_profile({3, 0, {}, 720, 240, 1}, 8, 19, 11, 900.0);
  const auto path = temp_path("profile_roundtrip.csv");
  write_profile_csv(p, path);
  auto q = load_profile_csv(path, ProfileKind::Load, 3);
  REQUIRE(q.samples.size() == p.samples.size());
  for (std::size_t i = 0; i < p.samples.size(); ++i) {
    CHECK(q.samples[i].first == p.samples[i].first);
    CHECK(q.samples[i].second == p.samples[i].second);
  }
}

TEST_CASE("csv loader reports the offending line") {
  const auto path = temp_path("profile_bad.csv");
  {
    std::ofstream f(path);
    f << "time_s,value\n0,1\nnot-a-number\n";
  }
  try {
    load_profile_csv(path, ProfileKind::Load);
    FAIL("expected ProfileError");
  } catch (const ProfileError& e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }
}

TEST_CASE("validation rejects malformed series") {
  TimeSeriesProfile p;
  CHECK_THROWS_AS(p.validate(), ProfileError);  // empty
  p.samples = {{100.0, 1.0}, {50.0, 2.0}};
  CHECK_THROWS_AS(p.validate(), ProfileError);  // not increasing
  p.samples = {{0.0, 1.0}, {90000.0, 2.0}};
  CHECK_THROWS_AS(p.validate(), ProfileError);  // beyond one day
  p.kind = ProfileKind::Load;
  p.samples = {{0.0, -1.0}};
  CHECK_THROWS_AS(p.validate(), ProfileError);  // negative load
  p.kind = ProfileKind::PriceGrid;
  p.samples = {{0.0, -1.0}};
  CHECK_NOTHROW(p.validate());  // negative prices are legitimate
}
