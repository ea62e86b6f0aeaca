#pragma once

#include <map>
#include <string>
#include <vector>

#include "gridfreq/common.hpp"

namespace gridfreq {

// One synchronous plant, modelled as `units_total` identical units that are
// committed or decommitted together in whole-unit steps. All p.u. quantities
// are on the plant's own full rating unless noted. Partial commitment scales
// rating, stored energy and ramp capability by units_online/units_total.
struct SyncGenerator {
  int id = 0;
  int bus = 0;
  double rating_mva = 0.0;    // full plant rating, all units online
  double inertia_h = 0.0;     // s, on rating_mva
  double damping = 0.0;       // p.u. power per p.u. frequency, on effective rating
  double droop = 0.05;        // p.u. (R); governor gain is 1/R
  double ramp_limit = 0.0;    // MW/s with all units online
  double deadband_s = 0.0;    // governor dead time after an event, s
  double xd_transient = 0.0;  // p.u. on effective rating
  double p_min = 0.2;         // p.u. of effective rating
  double p_max = 0.85;
  double q_min = -0.3;        // carried for completeness, not used dynamically
  double q_max = 0.7;
  double marginal_cost = 0.0;  // $/MWh, drives merit order
  int units_total = 4;
  int units_online = 4;
};

struct Bus {
  int id = 0;
  double p_load_mw = 0.0;
  double q_load_mvar = 0.0;
};

struct Line {
  int from = 0;
  int to = 0;
  double r_pu = 0.0;
  double x_pu = 0.0;
  double b_pu = 0.0;  // total charging susceptance, split half per end
};

// Converter-interfaced generation, aggregated into one plant that rides
// through frequency events at constant active power (no inertial response).
// Its capacity tracks the commitment of the displaced plants; see
// cig_capacity. It always runs at maximum output, so capacity in MVA doubles
// as dispatch in MW at unity power factor.
struct CigPlant {
  int bus = 0;
  double r_replace = 1.0;  // scale on the per-unit replacement term
  double s_extra = 0.0;    // extra capacity as a fraction of displaced plant ratings
};

struct NetworkModel {
  std::string name;
  double f_n_hz = 60.0;
  double s_base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<SyncGenerator> generators;
  CigPlant cig;
  std::vector<int> displaced_ids;    // plants whose commitment the sweep varies
  std::vector<int> monitored_buses;  // where frequency metrics are reported

  const Bus& bus(int id) const;
  const SyncGenerator& generator(int id) const;
  const SyncGenerator* generator_at_bus(int bus_id) const;
  bool is_displaced(int gen_id) const;
  double total_base_load_mw() const;
};

// Parses the fixture format (see data/ieee39.txt) and validates connectivity
// and parameter sanity. `name_or_path` is a bare fixture name resolved via
// find_fixture() or a path to the file itself.
NetworkModel load_network(const std::string& name_or_path);

// Rating actually connected: units_online/units_total of the full plant.
double effective_rating(const SyncGenerator& g);
double effective_rating(const SyncGenerator& g, int units_online);

// Converter capacity accompanying the displaced plants' commitment state:
// per plant r*(units_total+1-u)/units_total * rating + s*rating. Note the +1:
// one unit's worth of converter capacity is present even at full commitment,
// so each decommitted unit raises the total by exactly its own rating when
// r=1, s=0.
double cig_capacity(const std::vector<SyncGenerator>& displaced, double r = 1.0,
                    double s = 0.0);

// A dispatch snapshot the simulator starts from. `units_online` and
// `dispatch_mw` carry every plant id, including decommitted ones (0 units,
// 0 MW).
struct OperatingCondition {
  std::string id;
  double loading = 1.0;  // scale applied to every bus load
  std::map<int, int> units_online;
  std::map<int, double> dispatch_mw;
  double cig_mw = 0.0;

  int units(int gen_id) const;
  double dispatch(int gen_id) const;
  bool committed(int gen_id) const { return units(gen_id) > 0; }
};

// Checks an operating condition against the model: commitment within
// [0, units_total], dispatch inside committed plants' limits, and active
// power balanced against scaled load (the dispatch model is lossless).
// `caps`, when given, legitimizes dispatch below the p_min floor for capped
// plants, mirroring economic_dispatch. Throws InfeasibleError.
void validate_condition(const NetworkModel& net, const OperatingCondition& oc,
                        const std::map<int, double>* caps = nullptr);

// Kinetic energy stored in the committed fleet at nominal speed, MW*s: the
// H*S sum that sets post-event frequency stiffness.
double system_kinetic_energy(const NetworkModel& net, const OperatingCondition& oc);

// Merit-order dispatch: every committed plant runs at least p_min of its
// effective rating, remaining demand fills cheapest-first up to p_max, ties
// broken by ascending id. `caps` (MW, per plant id) tightens individual
// ceilings; a cap below the p_min floor lowers that plant's floor too, so a
// capped plant can be held at any output down to zero while staying
// committed. Demand not coverable within limits throws InfeasibleError.
OperatingCondition economic_dispatch(const NetworkModel& net, double loading,
                                     const std::map<int, int>& units_online,
                                     double cig_mw,
                                     const std::map<int, double>* caps = nullptr);

}  // namespace gridfreq
