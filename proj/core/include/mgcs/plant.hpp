#pragma once

#include <map>
#include <stdexcept>
#include <vector>

#include "mgcs/scenario.hpp"
#include "mgcs/types.hpp"

namespace mgcs {

struct PlantError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Continuous simulator state. Converter currents are battery/panel-side;
// discharge is positive for BESS currents.
struct PlantState {
  double t_s = 0.0;
  double v_dc = 0.0;
  std::vector<double> i_p;      // per PV unit
  std::vector<double> i_b;      // per BESS
  std::vector<double> e_wh;     // per BESS
  std::vector<double> pv_int;   // PI integrators
  std::vector<double> bess_int;
  double slack_int = 0.0;
  std::vector<bool> breaker_closed;  // per feeder
  std::uint64_t step_count = 0;
};

struct ConverterCommand {
  std::map<int, double> bess_setpoint_w;  // bus -> watts, discharge positive
  std::map<int, double> pv_curtail;       // bus -> [0,1], default 1
  std::map<int, bool> breaker_closed;     // feeder index -> closed
};

struct MeasurementSnapshot {
  double t_s = 0.0;
  double v_dc = 0.0;
  std::vector<double> v_bus;    // per prosumer bus, after feeder drop
  std::vector<double> p_pv;     // per PV unit, watts
  std::vector<double> p_load;   // per bus, watts
  std::vector<double> p_bess;   // per BESS, watts, discharge positive
  std::vector<double> soc;      // per BESS
  std::vector<double> e_wh;     // per BESS
  double p_pcc = 0.0;           // grid exchange, import positive
  std::vector<bool> saturated;  // per BESS, command saturation flag
  std::uint64_t step_count = 0;
};

// Fixed-step RK4 plant with PI converter loops and a stiff grid-slack branch
// holding the bus at v_nominal.
class Plant {
 public:
  explicit Plant(const ScenarioConfig& cfg);

  const PlantState& state() const { return state_; }
  const std::vector<int>& bess_buses() const { return bess_bus_ids_; }
  const std::vector<int>& pv_buses() const { return pv_bus_ids_; }

  // Map raw register commands (-1/0/+1) onto converter setpoints. Commands
  // that would push the SoC outside its bounds within lookahead_h are
  // saturated to zero and flagged. Unknown bus ids throw.
  void apply_commands(const std::vector<std::pair<int, int>>& raw,
                      double lookahead_h);
  void set_command(const ConverterCommand& cmd);
  const ConverterCommand& command() const { return cmd_; }

  // Advance to t_target_s in dt_sim steps. Profile inputs are refreshed every
  // chunk (<= 100 ms), which keeps the inner loop free of interpolation.
  void advance_to(double t_target_s);
  // Single integrator step with explicitly provided inputs (test hook).
  void step(double dt_s);

  MeasurementSnapshot snapshot() const;

  // Steady-state solution with all derivatives zero; independent oracle for
  // the dynamic simulator. Powers keyed by bus id.
  static MeasurementSnapshot solve_equilibrium(
      const MicrogridSpec& spec, const std::map<int, double>& pv_w,
      const std::map<int, double>& load_w,
      const std::map<int, double>& bess_setpoint_w);

  // PV panel / battery terminal voltages (stiff sources).
  static constexpr double kPanelVoltage = 200.0;
  static constexpr double kBatteryVoltage = 200.0;
  static constexpr double kSlackCurrentMax = 50.0;  // amps

 private:
  struct Inputs {
    std::vector<double> pv_ref_w;    // per PV unit (curtailed profile power)
    std::vector<double> load_w;      // per bus
    std::vector<double> bess_ref_w;  // per BESS (saturation applied)
  };

  void refresh_inputs(double t_s);
  void derivatives(const PlantState& s, const Inputs& in,
                   PlantState& dst) const;
  void check_finite() const;

  ScenarioConfig cfg_;
  PlantState state_;
  PlantState k1_, k2_, k3_, k4_, tmp_;  // RK4 scratch, reused across steps
  ConverterCommand cmd_;
  Inputs inputs_;
  std::vector<int> bess_bus_ids_;
  std::vector<int> pv_bus_ids_;
  std::vector<bool> saturated_;
  double lookahead_h_ = 5.0 / 60.0;

  // controller gains (documented defaults; settle < 50 ms)
  double slack_kp_ = 2.0;
  double slack_ki_ = 400.0;
  double loop_kp_ = 0.0015;
  double loop_ki_ = 0.1125;
};

}  // namespace mgcs
