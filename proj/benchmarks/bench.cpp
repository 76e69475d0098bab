#include <benchmark/benchmark.h>

#include "mgcs/ems.hpp"
#include "mgcs/modbus.hpp"
#include "mgcs/netem.hpp"
#include "mgcs/plant.hpp"
#include "mgcs/scenario.hpp"

using namespace mgcs;

namespace {

HorizonProblem day_problem() {
  const auto cfg = default_scenario();
  EmsController ems(cfg, 1.0);
  std::map<int, EmsMeasurement> meas;
  for (const auto& bus : cfg.spec.buses)
    meas[bus.bus_id] = {0.5, 0.0, true};
  return ems.build_problem(0.0, meas);
}

void bench_dp_dispatch(benchmark::State& state) {
  const auto p = day_problem();
  for (auto _ : state) benchmark::DoNotOptimize(dp_dispatch(p));
}

void bench_plant_step(benchmark::State& state) {
  Plant plant(default_scenario());
  for (auto _ : state) plant.step(1e-3);
  state.SetItemsProcessed(state.iterations());
}

void bench_delay_sample(benchmark::State& state) {
  auto m = TrafficClassModel::for_class(TrafficClass::DS0, 0.75, 1);
  m.service_noise_frac = 0.01;
  DelaySampler s(m);
  double t = 0.0;
  for (auto _ : state) {
    t += 10.0;
    benchmark::DoNotOptimize(s.sample_at(178, t));
  }
  state.SetItemsProcessed(state.iterations());
}

void bench_frame_codec(benchmark::State& state) {
  ModbusFrame f;
  f.transaction_id = 7;
  f.unit_id = 3;
  f.function = kFnReadHolding;
  f.payload = read_holding_payload(0, 12);
  for (auto _ : state)
    benchmark::DoNotOptimize(decode_frame(encode_frame(f)));
}

}  // namespace

BENCHMARK(bench_dp_dispatch);
BENCHMARK(bench_plant_step);
BENCHMARK(bench_delay_sample);
BENCHMARK(bench_frame_codec);

BENCHMARK_MAIN();
