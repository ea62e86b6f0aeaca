#include "gridfreq/regulator.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "gridfreq/common.hpp"

namespace gridfreq {
namespace {

void check_limits(const FrequencyLimits& limits) {
  if (!(limits.nadir_limit < limits.f_0))
    throw Error("the nadir limit must sit below nominal frequency");
  if (!(limits.rocof_limit < 0.0))
    throw Error("the RoCoF limit must be negative");
}

}  // namespace

double psi_min_rocof(double delta_p_mw, double rocof_pred,
                     const FrequencyLimits& limits) {
  check_limits(limits);
  if (!(delta_p_mw > 0.0))
    throw Error("the disturbance magnitude must be positive");
  if (rocof_pred == 0.0)
    throw Error("a RoCoF prediction of zero carries no event signature");
  if (rocof_pred > 0.0)
    throw Error("the RoCoF prediction must be negative for a loss event");
  const double psi = delta_p_mw * (1.0 - limits.rocof_limit / rocof_pred);
  return std::clamp(psi, 0.0, delta_p_mw);
}

double nadir_closed_form(double delta_p_mw, double p_rr_mw_s, double t_d_s,
                         double t_nadir_s, double m_h, double f_0,
                         FormulaVariant variant) {
  if (!(m_h > 0.0))
    throw Error("the aggregate response constant must be positive");
  if (!(t_d_s >= 0.0) || !(t_nadir_s > t_d_s))
    throw Error("the nadir must come after a non-negative deadband");
  const double quad = t_nadir_s * t_nadir_s - t_d_s * t_d_s;
  if (variant == FormulaVariant::consistent) {
    const double depth = (delta_p_mw * t_nadir_s - 0.5 * p_rr_mw_s * quad) / m_h;
    return f_0 - depth;
  }
  // Published form, kept verbatim: the disturbance term enters with the
  // reference time ahead of the nadir time and the ramp term keeps its
  // full weight.
  const double depth = (delta_p_mw * (0.0 - t_nadir_s) + p_rr_mw_s * quad) / m_h;
  return f_0 - depth;
}

double delta_p_max(double p_0_mw, double p_rr_mw_s, double t_nadir_s,
                   double nadir_old_hz, const FrequencyLimits& limits,
                   FormulaVariant variant) {
  check_limits(limits);
  if (!(p_0_mw > 0.0))
    throw Error("the current disturbance must be positive");
  if (!(t_nadir_s > 0.0)) throw Error("the nadir time must be positive");
  if (!(limits.f_0 > nadir_old_hz))
    throw Error("the observed nadir must sit below nominal frequency");
  const double ratio =
      (limits.f_0 - limits.nadir_limit) / (limits.f_0 - nadir_old_hz);
  if (variant == FormulaVariant::consistent) {
    // Depth scales with the square of the disturbance once the arrest time
    // stretches proportionally, so the admissible magnitude scales with the
    // square root of the depth ratio.
    return std::min(p_0_mw * std::sqrt(ratio), p_0_mw);
  }
  const double cap = p_0_mw - p_rr_mw_s * (t_nadir_s - ratio * t_nadir_s);
  if (!(cap > 0.0))
    throw InfeasibleError(format_str(
        "no admissible disturbance: the published cap comes out at %.6g MW",
        cap));
  return cap;
}

RegulationOutcome regulate(const NetworkModel& net,
                           const OperatingCondition& oc,
                           const DisturbanceEvent& event,
                           const FrequencyOutcome& predictions,
                           const FrequencyLimits& limits,
                           FormulaVariant variant) {
  check_limits(limits);
  const double magnitude = event.magnitude_mw;
  if (!(magnitude > 0.0))
    throw Error("the event carries no magnitude; fill in the lost output");

  // Each monitored bus is paired with the governor signature of the plant
  // it hosts, where one is online. The literal cap formula needs it; the
  // consistent one does not.
  std::map<int, const GovernorMetrics*> gov_at_bus;
  for (const GovernorMetrics& gm : predictions.governors) {
    if (!gm.online) continue;
    gov_at_bus[net.generator(gm.gen_id).bus] = &gm;
  }

  RegulationOutcome out;
  out.variant = variant;
  bool any_violation = false;
  for (const BusMetrics& bm : predictions.buses) {
    BusRegulation br;
    br.bus = bm.bus;
    br.rocof_pred = bm.rocof;
    br.nadir_pred = bm.nadir;
    br.rocof_violated = bm.rocof < limits.rocof_limit;
    br.nadir_violated = bm.nadir < limits.nadir_limit;
    any_violation = any_violation || br.rocof_violated || br.nadir_violated;

    if (bm.rocof < 0.0)
      br.psi_rocof_mw = psi_min_rocof(magnitude, bm.rocof, limits);

    br.delta_p_cap_mw = magnitude;
    if (bm.nadir < limits.f_0) {
      const auto it = gov_at_bus.find(bm.bus);
      const GovernorMetrics* gm = it == gov_at_bus.end() ? nullptr : it->second;
      const bool has_signature = gm != nullptr && gm->t_nadir > 0.0;
      if (variant == FormulaVariant::literal_paper && !has_signature) {
        // The published formula wants the plant's own ramp signature and
        // this bus has none to offer; its nadir demand falls to the buses
        // that do.
      } else {
        const double prr = has_signature ? gm->ramp_rate_prr : 0.0;
        const double tn = has_signature ? gm->t_nadir : 1.0;
        br.delta_p_cap_mw =
            delta_p_max(magnitude, prr, tn, bm.nadir, limits, variant);
        br.psi_nadir_mw =
            std::clamp(magnitude - br.delta_p_cap_mw, 0.0, magnitude);
      }
    }
    out.buses.push_back(br);
  }
  if (!any_violation)
    throw Error("no monitored bus violates the limits; nothing to regulate");

  // The binding reduction is the stiffest demand anywhere. Ties keep the
  // earliest bus, and within a bus the RoCoF criterion speaks first.
  out.psi_star_mw = -1.0;
  for (const BusRegulation& br : out.buses) {
    if (br.psi_rocof_mw > out.psi_star_mw) {
      out.psi_star_mw = br.psi_rocof_mw;
      out.binding_bus = br.bus;
      out.binding_criterion = Criterion::rocof;
    }
    if (br.psi_nadir_mw > out.psi_star_mw) {
      out.psi_star_mw = br.psi_nadir_mw;
      out.binding_bus = br.bus;
      out.binding_criterion = Criterion::nadir;
    }
  }
  out.delta_p_star_mw = magnitude - out.psi_star_mw;

  const std::map<int, double> caps{{event.target_gen, out.delta_p_star_mw}};
  out.redispatched =
      economic_dispatch(net, oc.loading, oc.units_online, oc.cig_mw, &caps);
  out.redispatched.id = oc.id.empty() ? "regulated" : oc.id + "_regulated";
  return out;
}

}  // namespace gridfreq
