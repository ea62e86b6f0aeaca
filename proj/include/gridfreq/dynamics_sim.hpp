#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "gridfreq/grid_model.hpp"

namespace gridfreq {

struct SimConfig {
  double dt = 0.005;            // s, fixed step
  double horizon = 20.0;        // s of simulated time
  double rocof_window = 0.5;    // s, sliding-mean window for reported RoCoF
  double disturbance_t0 = 1.0;  // s, snapped to the nearest step boundary
  std::string scheme = "rk4-fixed";
  bool store_traces = false;
};

struct DisturbanceEvent {
  enum class Kind { GeneratorOutage };
  Kind kind = Kind::GeneratorOutage;
  int target_gen = 5;
  // Pre-fault output of the target, filled in by simulate() from the OC.
  double magnitude_mw = 0.0;
};

// Committed machines modelled behind transient reactance against the
// constant-admittance load network, eliminated down to the machine internal
// nodes. `recovery` maps internal EMFs back to the voltage of every network
// bus, serving both load-conversion refinement and bus-frequency reporting
// where no machine survives.
struct ReducedNetwork {
  std::vector<int> machine_ids;   // committed plants, fixture order
  std::vector<int> machine_bus;   // bus of each machine, same order
  Eigen::MatrixXcd y_red;         // machine-node admittance, p.u. on system base
  std::vector<int> recovery_buses;  // every bus id, fixture order
  Eigen::MatrixXcd recovery;      // V[recovery_buses] = recovery * E
};

// Builds the constant-admittance network for the OC (each committed machine
// behind xd_transient on its effective rating) and eliminates every node
// except machine internals. `exclude_gen` drops that plant entirely, which is
// how an outage is represented. Loads and the converter injection enter as
// the per-bus shunt admittances in `bus_load_y` (system base; pass nullptr
// for the flat-voltage conversion, scheduled power over 1.0 pu). The
// equilibrium refines that vector so every load draws its schedule at the
// solved voltages; the refined vector must then be passed back in when
// rebuilding the network for integration. Throws on electrically isolated
// islands.
ReducedNetwork kron_reduce(const NetworkModel& net, const OperatingCondition& oc,
                           int exclude_gen = 0,
                           const Eigen::VectorXcd* bus_load_y = nullptr);

// Steady state the integrator starts from: machine EMFs and angles such that
// every dispatched non-slack machine injects exactly its dispatch while
// holding its terminal at 1.0 pu, committed machines at zero dispatch carry
// exactly no current, and the slack machine (largest dispatch, lowest id on
// ties) holds the angle reference at unit terminal voltage, absorbing network
// losses. load_y holds the load/converter admittances converted at the
// solved voltages, so each load bus draws exactly its scheduled power and
// the converter injects exactly its setpoint. p_m_mw holds the realized
// mechanical powers, identical to the electrical injections, so the system
// is exactly at rest.
struct Equilibrium {
  Eigen::VectorXd emf;        // |E| per machine, p.u.
  Eigen::VectorXd delta;      // rotor angle per machine, rad
  std::vector<double> p_m_mw; // realized injections, MW
  Eigen::VectorXcd load_y;    // anchored per-bus load admittance, p.u.
  int slack_id = 0;
  int iterations = 0;
  double residual = 0.0;      // max |constraint| at exit, p.u.
};

Equilibrium solve_equilibrium(const NetworkModel& net, const OperatingCondition& oc,
                              const ReducedNetwork& red);

// Raw integration product. Governor logs (machine_pm) ride along with the
// frequency traces; `event_step` marks the first step of the post-event
// phase, SIZE_MAX when no event was applied. Machines are listed in
// pre-event commitment order and keep their slots after the outage (the
// outaged machine's rows simply stop being its own rotor and are filled with
// the blended bus estimate).
struct SimTraces {
  std::vector<double> t;
  std::vector<int> monitored_buses;
  std::vector<std::vector<double>> bus_freq;    // [monitored index][step], Hz
  std::vector<int> machine_ids;
  std::vector<std::vector<double>> machine_freq;  // rotor frequency, Hz
  std::vector<std::vector<double>> machine_pm;    // mechanical power, MW
  std::vector<double> initial_rocof;  // per monitored bus, Hz/s at the event step
  int outage_machine = 0;  // 0 = none
  size_t event_step = SIZE_MAX;
  double f_n_hz = 60.0;
  double rocof_window = 0.5;
  bool diverged = false;
};

struct BusMetrics {
  int bus = 0;
  double rocof = 0.0;          // most negative windowed slope after the event, Hz/s
  double initial_rocof = 0.0;  // instantaneous slope at the event instant, Hz/s
  double nadir = 0.0;          // Hz
  double t_nadir = 0.0;        // s after the event
};

struct GovernorMetrics {
  int gen_id = 0;
  bool online = false;   // committed and not the outaged machine
  double p0_mw = 0.0;    // mechanical power at the event instant
  double p_at_nadir_mw = 0.0;
  double t_nadir = 0.0;  // that machine's own bus nadir time, s after event
  double ramp_rate_prr = 0.0;  // secant (p_at_nadir - p0) / t_nadir, MW/s
};

struct FrequencyOutcome {
  std::vector<BusMetrics> buses;          // monitored-bus order
  std::vector<GovernorMetrics> governors; // every plant in fixture order
  double coi_nadir = 0.0;
  double coi_rocof = 0.0;
  bool diverged = false;
  std::optional<SimTraces> traces;
};

// Integrates the classical multi-machine model for the OC with a fixed-step
// fourth-order scheme: M_i dw_i/dt = P_m,i - P_e,i - D_i w_i, mechanical
// power frozen until t0 + deadband, then slewed at most at the plant's
// (commitment-scaled) ramp limit toward the droop target
// P_m0 + S_eff * (-df_i) / (R * f_n), capped at p_max * S_eff or the
// machine's own pre-event output if that is higher (the slack carries the
// network losses above its dispatch cap). Passing no event integrates the
// undisturbed equilibrium. Numerical blowup beyond
// 5 Hz deviation stops the run and flags the outcome as diverged.
FrequencyOutcome simulate(const NetworkModel& net, const OperatingCondition& oc,
                          const std::optional<DisturbanceEvent>& event,
                          const SimConfig& cfg);

// Metric extraction is separate from integration so synthetic traces can be
// fed through it in tests. rocof = most negative mean slope over any
// rocof_window placed after the event; nadir/t_nadir from each trace's own
// minimum; per-machine ramp metrics from the governor log at that machine's
// own nadir time.
FrequencyOutcome extract_metrics(const SimTraces& traces, const NetworkModel& net,
                                 const OperatingCondition& oc, const SimConfig& cfg);

// Inertia-weighted mean frequency per step (H*S_eff weights; the outaged
// machine leaves the weighting once the event has happened).
std::vector<double> coi_frequency(const SimTraces& traces, const NetworkModel& net,
                                  const OperatingCondition& oc);

// Plain-text trace dump, one row per step: time then monitored-bus
// frequencies, six decimal places. Consumed by the CLI report command.
void dump_trace_file(const SimTraces& traces, const std::string& path);

}  // namespace gridfreq
