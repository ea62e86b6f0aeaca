#pragma once

#include <vector>

#include "gridfreq/dynamics_sim.hpp"
#include "gridfreq/grid_model.hpp"

namespace gridfreq {

// Thresholds for the two frequency security criteria and the nominal
// frequency they are measured against.
struct FrequencyLimits {
  double rocof_limit = -0.5;  // Hz/s, most negative admissible slope
  double nadir_limit = 59.6;  // Hz, lowest admissible excursion
  double f_0 = 60.0;          // Hz
};

// The closed-form response machinery ships in two flavours. `consistent`
// integrates the swing-plus-governor-ramp response exactly and is the
// default everywhere. `literal_paper` transcribes the published
// approximations with their quirks intact (a sign reversal on the
// disturbance term and a missing half on the quadratic term), kept so both
// can be scored against the simulator side by side.
enum class FormulaVariant { consistent, literal_paper };

// True when a bus prediction breaks either criterion. Sitting exactly at a
// limit is compliant; only crossing it counts.
inline bool violates_limits(double rocof, double nadir,
                            const FrequencyLimits& limits) {
  return rocof < limits.rocof_limit || nadir < limits.nadir_limit;
}

// Smallest pre-event reduction of the disturbance that lifts the predicted
// initial RoCoF back to the limit, from the proportionality of RoCoF to
// lost power at fixed inertia. Clamped to [0, delta_p]: predictions already
// inside the limit ask for nothing.
double psi_min_rocof(double delta_p_mw, double rocof_pred,
                     const FrequencyLimits& limits);

// Frequency nadir of the triangle response: constant deficit until the
// governor gate opens at t_d, then a ramp that arrests the decline at
// t_nadir. m_h is the aggregate response constant in MW*s/Hz. The ramp is
// referenced so the deadband interval drops out of the depth when t_nadir
// follows the arrest condition, which is what makes the cap below
// self-consistent.
double nadir_closed_form(double delta_p_mw, double p_rr_mw_s, double t_d_s,
                         double t_nadir_s, double m_h, double f_0,
                         FormulaVariant variant);

// Largest disturbance the nadir criterion tolerates, given that the current
// disturbance p_0 produced nadir_old. The consistent variant scales by the
// square root of the depth ratio (depth grows quadratically in the
// disturbance once the arrest time stretches with it) and is clamped to
// [0, p_0]; the literal variant evaluates the published expression
// verbatim, using p_rr and t_nadir, and signals infeasibility when it
// admits no positive disturbance.
double delta_p_max(double p_0_mw, double p_rr_mw_s, double t_nadir_s,
                   double nadir_old_hz, const FrequencyLimits& limits,
                   FormulaVariant variant);

enum class Criterion { rocof, nadir };

// Per-bus bookkeeping behind a regulation decision.
struct BusRegulation {
  int bus = 0;
  double rocof_pred = 0.0;  // Hz/s
  double nadir_pred = 0.0;  // Hz
  bool rocof_violated = false;
  bool nadir_violated = false;
  double psi_rocof_mw = 0.0;    // reduction the RoCoF criterion demands here
  double psi_nadir_mw = 0.0;    // reduction the nadir criterion demands here
  double delta_p_cap_mw = 0.0;  // largest disturbance the nadir path allows
};

struct RegulationOutcome {
  std::vector<BusRegulation> buses;
  int binding_bus = 0;
  Criterion binding_criterion = Criterion::rocof;
  double psi_star_mw = 0.0;      // binding reduction over all buses/criteria
  double delta_p_star_mw = 0.0;  // disturbance magnitude the event may keep
  OperatingCondition redispatched;
  FormulaVariant variant = FormulaVariant::consistent;
};

// Turns predicted locational metrics into a capped disturbance and a
// redispatch. Every monitored bus is scored with the full disturbance
// magnitude against its own predictions (conservative attribution); the
// binding reduction is the maximum demand across buses and criteria, and
// the freed power moves to other plants through the merit-order dispatch
// with the target plant capped. Throws when nothing violates (the caller
// should not have invoked stage 3), when the event carries no magnitude,
// and InfeasibleError when the remaining fleet cannot absorb the reduction.
RegulationOutcome regulate(const NetworkModel& net,
                           const OperatingCondition& oc,
                           const DisturbanceEvent& event,
                           const FrequencyOutcome& predictions,
                           const FrequencyLimits& limits,
                           FormulaVariant variant = FormulaVariant::consistent);

}  // namespace gridfreq
