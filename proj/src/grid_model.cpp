#include "gridfreq/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <sstream>

namespace gridfreq {

const Bus& NetworkModel::bus(int id) const {
  for (const auto& b : buses)
    if (b.id == id) return b;
  throw Error(format_str("no bus %d in network '%s'", id, name.c_str()));
}

const SyncGenerator& NetworkModel::generator(int id) const {
  for (const auto& g : generators)
    if (g.id == id) return g;
  throw Error(format_str("no generator %d in network '%s'", id, name.c_str()));
}

const SyncGenerator* NetworkModel::generator_at_bus(int bus_id) const {
  for (const auto& g : generators)
    if (g.bus == bus_id) return &g;
  return nullptr;
}

bool NetworkModel::is_displaced(int gen_id) const {
  return std::find(displaced_ids.begin(), displaced_ids.end(), gen_id) !=
         displaced_ids.end();
}

double NetworkModel::total_base_load_mw() const {
  double sum = 0.0;
  for (const auto& b : buses) sum += b.p_load_mw;
  return sum;
}

namespace {

void validate_model(const NetworkModel& net, const std::string& path) {
  auto fail = [&](const std::string& why) {
    throw IoError("fixture " + path + ": " + why);
  };
  if (net.buses.empty()) fail("no buses");
  if (net.generators.empty()) fail("no generators");

  std::set<int> bus_ids;
  for (const auto& b : net.buses)
    if (!bus_ids.insert(b.id).second) fail(format_str("duplicate bus %d", b.id));

  std::set<int> gen_ids;
  for (const auto& g : net.generators) {
    if (!gen_ids.insert(g.id).second) fail(format_str("duplicate generator %d", g.id));
    if (!bus_ids.count(g.bus)) fail(format_str("generator %d at unknown bus %d", g.id, g.bus));
    if (g.rating_mva <= 0 || g.inertia_h <= 0)
      fail(format_str("generator %d needs positive rating and inertia", g.id));
    if (!(0 < g.p_min && g.p_min < g.p_max && g.p_max <= 1.0))
      fail(format_str("generator %d active-power limits out of order", g.id));
    if (g.xd_transient <= 0) fail(format_str("generator %d needs a transient reactance", g.id));
    if (g.units_total <= 0) fail(format_str("generator %d needs units", g.id));
  }
  if (!bus_ids.count(net.cig.bus)) fail("converter plant at unknown bus");
  for (int id : net.displaced_ids)
    if (!gen_ids.count(id)) fail(format_str("displaced id %d is not a generator", id));
  for (int b : net.monitored_buses)
    if (!bus_ids.count(b)) fail(format_str("monitored bus %d does not exist", b));

  // Connectivity: islands would make the reduced model meaningless.
  std::map<int, std::vector<int>> adj;
  for (const auto& ln : net.lines) {
    if (!bus_ids.count(ln.from) || !bus_ids.count(ln.to))
      fail(format_str("line %d-%d touches unknown bus", ln.from, ln.to));
    if (ln.x_pu == 0.0) fail(format_str("line %d-%d has zero reactance", ln.from, ln.to));
    if (ln.b_pu < 0.0) fail(format_str("line %d-%d has negative charging", ln.from, ln.to));
    adj[ln.from].push_back(ln.to);
    adj[ln.to].push_back(ln.from);
  }
  std::set<int> seen;
  std::queue<int> work;
  work.push(net.buses.front().id);
  seen.insert(net.buses.front().id);
  while (!work.empty()) {
    const int b = work.front();
    work.pop();
    for (int nb : adj[b])
      if (seen.insert(nb).second) work.push(nb);
  }
  if (seen.size() != bus_ids.size())
    fail(format_str("network is not connected (%zu of %zu buses reachable)",
                    seen.size(), bus_ids.size()));
}

}  // namespace

NetworkModel load_network(const std::string& name_or_path) {
  const bool is_path = name_or_path.find('/') != std::string::npos ||
                       name_or_path.find(".txt") != std::string::npos;
  const std::string path = is_path ? name_or_path : find_fixture(name_or_path);

  NetworkModel net;
  std::istringstream in(read_text_file(path));
  std::string line;
  std::string section;
  int lineno = 0;
  auto fail = [&](const std::string& why) {
    throw IoError(format_str("fixture %s:%d: %s", path.c_str(), lineno, why.c_str()));
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0].front() == '[') {
      section = tok[0];
      continue;
    }
    try {
      if (section.empty()) {
        if (tok[0] == "network" && tok.size() == 2) {
          net.name = tok[1];
        } else if (tok[0] == "f_n_hz" && tok.size() == 2) {
          net.f_n_hz = parse_double(tok[1]);
        } else if (tok[0] == "s_base_mva" && tok.size() == 2) {
          net.s_base_mva = parse_double(tok[1]);
        } else if (tok[0] == "cig" && tok.size() == 4) {
          net.cig.bus = static_cast<int>(parse_long(tok[1]));
          net.cig.r_replace = parse_double(tok[2]);
          net.cig.s_extra = parse_double(tok[3]);
        } else if (tok[0] == "displaced") {
          for (size_t i = 1; i < tok.size(); ++i)
            net.displaced_ids.push_back(static_cast<int>(parse_long(tok[i])));
        } else if (tok[0] == "monitored") {
          for (size_t i = 1; i < tok.size(); ++i)
            net.monitored_buses.push_back(static_cast<int>(parse_long(tok[i])));
        } else {
          fail("unrecognized directive '" + tok[0] + "'");
        }
      } else if (section == "[buses]") {
        if (tok.size() != 3) fail("bus rows need: id p_mw q_mvar");
        net.buses.push_back({static_cast<int>(parse_long(tok[0])), parse_double(tok[1]),
                             parse_double(tok[2])});
      } else if (section == "[lines]") {
        if (tok.size() != 5) fail("line rows need: from to r_pu x_pu b_pu");
        net.lines.push_back({static_cast<int>(parse_long(tok[0])),
                             static_cast<int>(parse_long(tok[1])), parse_double(tok[2]),
                             parse_double(tok[3]), parse_double(tok[4])});
      } else if (section == "[generators]") {
        if (tok.size() != 15)
          fail("generator rows need 15 columns, got " + std::to_string(tok.size()));
        SyncGenerator g;
        g.id = static_cast<int>(parse_long(tok[0]));
        g.bus = static_cast<int>(parse_long(tok[1]));
        g.rating_mva = parse_double(tok[2]);
        g.inertia_h = parse_double(tok[3]);
        g.damping = parse_double(tok[4]);
        g.droop = parse_double(tok[5]);
        g.ramp_limit = parse_double(tok[6]);
        g.deadband_s = parse_double(tok[7]);
        g.xd_transient = parse_double(tok[8]);
        g.p_min = parse_double(tok[9]);
        g.p_max = parse_double(tok[10]);
        g.q_min = parse_double(tok[11]);
        g.q_max = parse_double(tok[12]);
        g.marginal_cost = parse_double(tok[13]);
        g.units_total = static_cast<int>(parse_long(tok[14]));
        g.units_online = g.units_total;
        net.generators.push_back(g);
      } else {
        fail("unknown section " + section);
      }
    } catch (const IoError&) {
      throw;
    } catch (const Error& e) {
      fail(e.what());
    }
  }
  validate_model(net, path);
  return net;
}

double effective_rating(const SyncGenerator& g) {
  return effective_rating(g, g.units_online);
}

double effective_rating(const SyncGenerator& g, int units_online) {
  if (units_online < 0 || units_online > g.units_total)
    throw Error(format_str("generator %d: units_online %d outside 0..%d", g.id,
                           units_online, g.units_total));
  return static_cast<double>(units_online) * g.rating_mva / g.units_total;
}

double cig_capacity(const std::vector<SyncGenerator>& displaced, double r, double s) {
  double total = 0.0;
  for (const auto& g : displaced) {
    const double per_unit = g.rating_mva / g.units_total;
    total += r * (g.units_total + 1 - g.units_online) * per_unit + s * g.rating_mva;
  }
  return total;
}

int OperatingCondition::units(int gen_id) const {
  const auto it = units_online.find(gen_id);
  return it == units_online.end() ? 0 : it->second;
}

double OperatingCondition::dispatch(int gen_id) const {
  const auto it = dispatch_mw.find(gen_id);
  return it == dispatch_mw.end() ? 0.0 : it->second;
}

void validate_condition(const NetworkModel& net, const OperatingCondition& oc,
                        const std::map<int, double>* caps) {
  const double tol = 1e-6 * net.s_base_mva;
  double total_dispatch = 0.0;
  for (const auto& g : net.generators) {
    const int u = oc.units(g.id);
    if (u < 0 || u > g.units_total)
      throw InfeasibleError(format_str("OC %s: generator %d committed to %d units",
                                       oc.id.c_str(), g.id, u));
    const double d = oc.dispatch(g.id);
    total_dispatch += d;
    if (u == 0) {
      if (std::fabs(d) > tol)
        throw InfeasibleError(format_str("OC %s: decommitted generator %d dispatched %g MW",
                                         oc.id.c_str(), g.id, d));
      continue;
    }
    const double s_eff = effective_rating(g, u);
    double floor = g.p_min * s_eff;
    const double cap_it = caps && caps->count(g.id) ? caps->at(g.id) : 1e300;
    floor = std::min(floor, cap_it);
    const double ceil = std::min(g.p_max * s_eff, cap_it);
    if (d < floor - tol || d > ceil + tol)
      throw InfeasibleError(
          format_str("OC %s: generator %d dispatch %.3f MW outside [%.3f, %.3f]",
                     oc.id.c_str(), g.id, d, floor, ceil));
  }
  const double demand = oc.loading * net.total_base_load_mw();
  const double mismatch = total_dispatch + oc.cig_mw - demand;
  if (std::fabs(mismatch) > tol)
    throw InfeasibleError(format_str("OC %s: power imbalance %.6f MW (dispatch %.3f + cig %.3f vs load %.3f)",
                                     oc.id.c_str(), mismatch, total_dispatch, oc.cig_mw,
                                     demand));
}

double system_kinetic_energy(const NetworkModel& net, const OperatingCondition& oc) {
  double e = 0.0;
  for (const auto& g : net.generators) e += g.inertia_h * effective_rating(g, oc.units(g.id));
  return e;
}

OperatingCondition economic_dispatch(const NetworkModel& net, double loading,
                                     const std::map<int, int>& units_online,
                                     double cig_mw, const std::map<int, double>* caps) {
  OperatingCondition oc;
  oc.loading = loading;
  oc.cig_mw = cig_mw;

  const double demand = loading * net.total_base_load_mw() - cig_mw;

  struct Slot {
    const SyncGenerator* g;
    double floor, ceil;
  };
  std::vector<Slot> slots;
  double floor_sum = 0.0, ceil_sum = 0.0;
  for (const auto& g : net.generators) {
    const auto it = units_online.find(g.id);
    const int u = it == units_online.end() ? 0 : it->second;
    oc.units_online[g.id] = u;
    oc.dispatch_mw[g.id] = 0.0;
    if (u == 0) continue;
    const double s_eff = effective_rating(g, u);
    const double cap_it = caps && caps->count(g.id) ? std::max(0.0, caps->at(g.id)) : 1e300;
    Slot s{&g, std::min(g.p_min * s_eff, cap_it), std::min(g.p_max * s_eff, cap_it)};
    floor_sum += s.floor;
    ceil_sum += s.ceil;
    slots.push_back(s);
  }

  const double tol = 1e-9 * net.s_base_mva;
  if (demand < -tol)
    throw InfeasibleError(format_str(
        "dispatch infeasible: converter output %.1f MW exceeds demand %.1f MW", cig_mw,
        loading * net.total_base_load_mw()));
  if (ceil_sum < demand - tol)
    throw InfeasibleError(
        format_str("dispatch infeasible: committed capacity %.1f MW < demand %.1f MW",
                   ceil_sum, demand));
  if (floor_sum > demand + tol)
    throw InfeasibleError(format_str(
        "dispatch infeasible: minimum-output floor %.1f MW > demand %.1f MW", floor_sum,
        demand));

  // Floors first, then fill cheapest plants to their ceilings. Ties go to the
  // lower generator id so repeated runs dispatch identically.
  std::sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
    if (a.g->marginal_cost != b.g->marginal_cost)
      return a.g->marginal_cost < b.g->marginal_cost;
    return a.g->id < b.g->id;
  });
  double remaining = demand - floor_sum;
  for (const auto& s : slots) {
    const double take = std::clamp(remaining, 0.0, s.ceil - s.floor);
    oc.dispatch_mw[s.g->id] = s.floor + take;
    remaining -= take;
  }
  validate_condition(net, oc, caps);
  return oc;
}

}  // namespace gridfreq
