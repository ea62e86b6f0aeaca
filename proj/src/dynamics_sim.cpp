#include "gridfreq/dynamics_sim.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <sstream>

namespace gridfreq {

namespace {

using cplx = std::complex<double>;

constexpr double kPi = 3.14159265358979323846;
// Governor servo time constant: far below every deadband/ramp timescale in
// the fixture, so the mechanical power effectively tracks
// min(ramp slew, droop target) while staying a smooth integrator state.
constexpr double kServoTau = 0.05;
constexpr double kDivergedHz = 5.0;

int bus_index(const std::vector<Bus>& buses, int id) {
  for (size_t i = 0; i < buses.size(); ++i)
    if (buses[i].id == id) return static_cast<int>(i);
  throw Error(format_str("bus %d not in model", id));
}

// Commitment sanity without the p_min floor rule: simulate() accepts OCs the
// regulator capped below floor, so it checks balance and commitment only.
void check_condition_light(const NetworkModel& net, const OperatingCondition& oc) {
  double total = oc.cig_mw;
  for (const auto& g : net.generators) {
    const int u = oc.units(g.id);
    if (u < 0 || u > g.units_total)
      throw InfeasibleError(format_str("OC %s: generator %d committed to %d units",
                                       oc.id.c_str(), g.id, u));
    if (u == 0 && std::fabs(oc.dispatch(g.id)) > 1e-6 * net.s_base_mva)
      throw InfeasibleError(format_str("OC %s: decommitted generator %d dispatched",
                                       oc.id.c_str(), g.id));
    total += oc.dispatch(g.id);
  }
  const double demand = oc.loading * net.total_base_load_mw();
  if (std::fabs(total - demand) > 1e-6 * net.s_base_mva)
    throw InfeasibleError(
        format_str("OC %s: power imbalance %.6f MW", oc.id.c_str(), total - demand));
}

}  // namespace

// Scheduled complex power drawn per bus (p.u.): the OC's loads, with the
// converter plant netted off as a negative draw at its bus. These are the
// targets the load conversion anchors to at each phase's solved voltages;
// conjugating them gives the flat-voltage (1.0 pu) admittance seed.
static Eigen::VectorXcd scheduled_bus_power(const NetworkModel& net,
                                            const OperatingCondition& oc) {
  const int nb = static_cast<int>(net.buses.size());
  Eigen::VectorXcd s(nb);
  for (int i = 0; i < nb; ++i) {
    const auto& b = net.buses[i];
    s(i) = std::complex<double>(oc.loading * b.p_load_mw, oc.loading * b.q_load_mvar) /
           net.s_base_mva;
    if (b.id == net.cig.bus) s(i) -= std::complex<double>(oc.cig_mw, 0.0) / net.s_base_mva;
  }
  return s;
}

static Eigen::VectorXcd nominal_load_admittance(const NetworkModel& net,
                                                const OperatingCondition& oc) {
  return scheduled_bus_power(net, oc).conjugate();
}

ReducedNetwork kron_reduce(const NetworkModel& net, const OperatingCondition& oc,
                           int exclude_gen, const Eigen::VectorXcd* bus_load_y) {
  ReducedNetwork red;
  for (const auto& g : net.generators) {
    if (g.id == exclude_gen || oc.units(g.id) == 0) continue;
    red.machine_ids.push_back(g.id);
    red.machine_bus.push_back(g.bus);
  }
  const int k = static_cast<int>(red.machine_ids.size());
  const int nb = static_cast<int>(net.buses.size());
  if (k == 0) throw Error("no committed machines to reduce onto");

  Eigen::MatrixXcd ybb = Eigen::MatrixXcd::Zero(nb, nb);
  Eigen::MatrixXcd ybg = Eigen::MatrixXcd::Zero(nb, k);
  Eigen::VectorXcd ygg_diag(k);

  for (const auto& ln : net.lines) {
    const int a = bus_index(net.buses, ln.from);
    const int b = bus_index(net.buses, ln.to);
    const cplx y = 1.0 / cplx(ln.r_pu, ln.x_pu);
    const cplx half_charge(0.0, ln.b_pu / 2.0);
    ybb(a, a) += y + half_charge;
    ybb(b, b) += y + half_charge;
    ybb(a, b) -= y;
    ybb(b, a) -= y;
  }
  // Loads and the converter injection as shunt admittances, either supplied
  // by the caller (anchored at solved voltages) or converted flat.
  const Eigen::VectorXcd load_y =
      bus_load_y ? *bus_load_y : nominal_load_admittance(net, oc);
  if (load_y.size() != nb) throw Error("load admittance vector length mismatch");
  for (int i = 0; i < nb; ++i) ybb(i, i) += load_y(i);

  for (int m = 0; m < k; ++m) {
    const auto& g = net.generator(red.machine_ids[m]);
    const double s_eff = effective_rating(g, oc.units(g.id));
    const double x_sys = g.xd_transient * net.s_base_mva / s_eff;
    const cplx y = 1.0 / cplx(0.0, x_sys);
    const int b = bus_index(net.buses, g.bus);
    ybb(b, b) += y;
    ybg(b, m) = -y;
    ygg_diag(m) = y;
  }

  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(ybb);
  const auto udiag = lu.matrixLU().diagonal();
  double umax = 0.0, umin = 1e300;
  for (int i = 0; i < nb; ++i) {
    umax = std::max(umax, std::abs(udiag(i)));
    umin = std::min(umin, std::abs(udiag(i)));
  }
  if (umin <= 1e-12 * umax)
    throw Error("bus admittance matrix is singular: an island has no electrical "
                "path to any machine or load");

  // V_B = recovery * E, and the eliminated blocks fold into
  // Y_GG - Y_GB Y_BB^-1 Y_BG = Y_GG + Y_GB * recovery. Y_BB is symmetric
  // (plain transpose, no conjugation), so Y_GB * recovery equals
  // recovery^T * Y_BG.
  const Eigen::MatrixXcd recovery_full = -lu.solve(ybg);
  red.y_red = recovery_full.transpose() * ybg;
  for (int m = 0; m < k; ++m) red.y_red(m, m) += ygg_diag(m);

  red.recovery_buses.clear();
  for (const auto& b : net.buses) red.recovery_buses.push_back(b.id);
  red.recovery = recovery_full;
  return red;
}

namespace {

// One anchoring refinement: loads as admittances drawing their scheduled
// power at the latest solved voltages. The plain fixed point contracts
// geometrically but slowly on stressed corridors, so consecutive updates
// feed an Aitken extrapolation. refine() returns true once every bus draws
// its schedule; it throws when a bus voltage collapses or the iteration
// budget runs out.
class LoadAnchor {
 public:
  LoadAnchor(const NetworkModel& net, const OperatingCondition& oc, const char* context)
      : net_(net), oc_(oc), context_(context), s_target_(scheduled_bus_power(net, oc)) {}

  bool refine(const Eigen::VectorXcd& v, Eigen::VectorXcd& y_load) {
    double worst = 0.0;
    for (int i = 0; i < v.size(); ++i)
      worst = std::max(worst,
                       std::abs(std::norm(v(i)) * std::conj(y_load(i)) - s_target_(i)));
    if (worst < 1e-10) return true;
    if (++passes_ > 150)
      throw Error(format_str("%s load conversion failed to settle for OC %s", context_,
                             oc_.id.c_str()));
    Eigen::VectorXcd y_raw = y_load;
    for (int i = 0; i < v.size(); ++i) {
      if (s_target_(i) == std::complex<double>(0.0, 0.0)) continue;
      const double v2 = std::norm(v(i));
      if (v2 < 0.25)
        throw Error(format_str("%s load conversion collapsed at bus %d for OC %s",
                               context_, net_.buses[static_cast<size_t>(i)].id,
                               oc_.id.c_str()));
      y_raw(i) = std::conj(s_target_(i)) / v2;
    }
    const Eigen::VectorXcd d = y_raw - y_load;
    Eigen::VectorXcd y_next = y_raw;
    if (have_prev_) {
      const std::complex<double> rc = d_prev_.dot(d) / d_prev_.squaredNorm();
      if (std::abs(rc) < 0.95 && std::abs(1.0 - rc) > 0.05)
        y_next = y_load + d / (1.0 - rc);
    }
    d_prev_ = d;
    have_prev_ = true;
    y_load = y_next;
    return false;
  }

 private:
  const NetworkModel& net_;
  const OperatingCondition& oc_;
  const char* context_;
  Eigen::VectorXcd s_target_;
  Eigen::VectorXcd d_prev_;
  bool have_prev_ = false;
  int passes_ = 0;
};

Eigen::VectorXcd machine_complex_power(const Eigen::MatrixXcd& y,
                                       const Eigen::VectorXd& emf,
                                       const Eigen::VectorXd& delta) {
  const int k = static_cast<int>(emf.size());
  Eigen::VectorXcd e(k);
  for (int m = 0; m < k; ++m) e(m) = std::polar(emf(m), delta(m));
  const Eigen::VectorXcd cur = y * e;
  Eigen::VectorXcd s(k);
  for (int m = 0; m < k; ++m) s(m) = e(m) * std::conj(cur(m));
  return s;
}

// Equilibrium constraints against one fixed reduced matrix. The unknown
// vector is [delta of non-slack..., emf of non-slack..., emf of slack]; the
// slack keeps delta = 0. Every dispatched machine realizes its dispatch while
// holding its terminal voltage at 1.0 pu, which distributes reactive support
// across the fleet the way voltage regulators do. A committed machine at zero
// dispatch instead holds zero complex power, so it carries exactly no current
// and its loss is a strict no-op. The slack realizes whatever active power
// balances the system at unit terminal voltage.
void operating_point_residual(const Eigen::MatrixXcd& y_red,
                              const std::vector<double>& dispatch_pu,
                              const std::vector<double>& x_sys,
                              const std::vector<int>& others, int slack,
                              const Eigen::VectorXd& z, Eigen::VectorXd& f) {
  const int k = static_cast<int>(dispatch_pu.size());
  const int no = static_cast<int>(others.size());
  Eigen::VectorXcd e(k);
  for (int i = 0; i < no; ++i)
    e(others[static_cast<size_t>(i)]) = std::polar(z(no + i), z(i));
  e(slack) = cplx(z(2 * no), 0.0);
  const Eigen::VectorXcd cur = y_red * e;
  auto vterm2 = [&](int m) {
    const cplx v = e(m) - cplx(0.0, x_sys[static_cast<size_t>(m)]) * cur(m);
    return std::norm(v);
  };
  for (int i = 0; i < no; ++i) {
    const int m = others[static_cast<size_t>(i)];
    const cplx s = e(m) * std::conj(cur(m));
    f(i) = s.real() - dispatch_pu[static_cast<size_t>(m)];
    f(no + i) = dispatch_pu[static_cast<size_t>(m)] > 0.0 ? vterm2(m) - 1.0 : s.imag();
  }
  f(2 * no) = vterm2(slack) - 1.0;
}

// Damped Newton with a finite-difference Jacobian; z is both the start point
// and the result. Returns iterations taken, or -1 when the line search
// cannot make progress.
int newton_operating_point(const Eigen::MatrixXcd& y_red,
                           const std::vector<double>& dispatch_pu,
                           const std::vector<double>& x_sys,
                           const std::vector<int>& others, int slack, double tol,
                           Eigen::VectorXd& z) {
  const int nun = static_cast<int>(z.size());
  auto residual = [&](const Eigen::VectorXd& zz, Eigen::VectorXd& f) {
    operating_point_residual(y_red, dispatch_pu, x_sys, others, slack, zz, f);
  };

  Eigen::VectorXd f(nun), f_try(nun);
  residual(z, f);
  for (int it = 0; it < 50; ++it) {
    if (f.lpNorm<Eigen::Infinity>() <= tol) return it;
    Eigen::MatrixXd jac(nun, nun);
    const double h = 1e-6;
    for (int c = 0; c < nun; ++c) {
      Eigen::VectorXd zp = z, zm = z;
      zp(c) += h;
      zm(c) -= h;
      Eigen::VectorXd fp(nun), fm(nun);
      residual(zp, fp);
      residual(zm, fm);
      jac.col(c) = (fp - fm) / (2 * h);
    }
    const Eigen::VectorXd step = jac.partialPivLu().solve(f);
    const double fn0 = f.norm();
    double alpha = 1.0;
    bool accepted = false;
    for (int half = 0; half < 12; ++half) {
      const Eigen::VectorXd z_try = z - alpha * step;
      residual(z_try, f_try);
      if (f_try.norm() < fn0) {
        z = z_try;
        f = f_try;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) return -1;
  }
  return f.lpNorm<Eigen::Infinity>() <= tol ? 50 : -1;
}

}  // namespace

Equilibrium solve_equilibrium(const NetworkModel& net, const OperatingCondition& oc,
                              const ReducedNetwork& red) {
  const int k = static_cast<int>(red.machine_ids.size());
  Equilibrium eq;
  eq.emf = Eigen::VectorXd::Ones(k);
  eq.delta = Eigen::VectorXd::Zero(k);

  // Slack: committed machine with the largest dispatch, lowest id on ties.
  int slack = 0;
  for (int m = 1; m < k; ++m)
    if (oc.dispatch(red.machine_ids[m]) > oc.dispatch(red.machine_ids[slack]))
      slack = m;
  eq.slack_id = red.machine_ids[slack];

  std::vector<int> others;
  for (int m = 0; m < k; ++m)
    if (m != slack) others.push_back(m);
  const int no = k - 1;
  const int nun = 2 * no + 1;
  Eigen::VectorXd z = Eigen::VectorXd::Zero(nun);
  for (int i = no; i < nun; ++i) z(i) = 1.0;

  auto x_sys_of = [&](const OperatingCondition& c) {
    std::vector<double> xs(static_cast<size_t>(k));
    for (int m = 0; m < k; ++m) {
      const auto& g = net.generator(red.machine_ids[static_cast<size_t>(m)]);
      xs[static_cast<size_t>(m)] =
          g.xd_transient * net.s_base_mva / effective_rating(g, c.units(g.id));
    }
    return xs;
  };
  const std::vector<double> x_sys = x_sys_of(oc);

  // A flat start usually converges outright; when it does not, walk a
  // load/dispatch continuation: at scale 0 the flat profile solves the system
  // and each stage reuses the previous stage's operating point. The stage
  // matrices embed the scaled loads, so they are rebuilt per stage.
  int total_iters = 0;
  auto run_continuation = [&](const ReducedNetwork& red_b, const Eigen::VectorXcd& y_full,
                              Eigen::VectorXd& zz) {
    double s_done = 0.0, step = 1.0;
    while (s_done < 1.0) {
      const double s_try = std::min(1.0, s_done + step);
      OperatingCondition oc_s = oc;
      oc_s.loading = oc.loading * s_try;
      oc_s.cig_mw = oc.cig_mw * s_try;
      for (auto& [id, mw] : oc_s.dispatch_mw) mw *= s_try;
      const Eigen::VectorXcd y_s = s_try * y_full;
      const ReducedNetwork red_s =
          s_try == 1.0 ? red_b : kron_reduce(net, oc_s, 0, &y_s);
      std::vector<double> d_pu(static_cast<size_t>(k));
      for (int m = 0; m < k; ++m)
        d_pu[static_cast<size_t>(m)] =
            oc_s.dispatch(red_s.machine_ids[static_cast<size_t>(m)]) / net.s_base_mva;
      Eigen::VectorXd z_try = zz;
      const double tol = s_try == 1.0 ? 1e-13 : 1e-10;
      const int it =
          newton_operating_point(red_s.y_red, d_pu, x_sys, others, slack, tol, z_try);
      if (it >= 0) {
        zz = z_try;
        s_done = s_try;
        total_iters += it;
        step = std::min(1.0, step * 2.0);
      } else {
        step *= 0.5;
        if (step < 1.0 / 64.0)
          throw Error(format_str("equilibrium continuation failed near scale %.3f for OC %s",
                                 s_done, oc.id.c_str()));
      }
    }
  };

  // The load conversion and the machine solve refine each other: solve the
  // machines against the current admittances, re-convert every load at the
  // voltages that came out, repeat. At the fixed point each load bus draws
  // exactly its schedule and the converter injects exactly its setpoint, so
  // the admittance network is power-flow-consistent.
  Eigen::VectorXcd y_load = nominal_load_admittance(net, oc);
  ReducedNetwork red_a = red;
  LoadAnchor anchor(net, oc, "equilibrium");
  for (;;) {
    Eigen::VectorXd z_try = z;
    run_continuation(red_a, y_load, z_try);
    z = z_try;
    Eigen::VectorXcd e(k);
    for (int i = 0; i < no; ++i)
      e(others[static_cast<size_t>(i)]) = std::polar(z(no + i), z(i));
    e(slack) = cplx(z(2 * no), 0.0);
    if (anchor.refine(red_a.recovery * e, y_load)) break;
    red_a = kron_reduce(net, oc, 0, &y_load);
  }
  eq.load_y = y_load;
  eq.iterations = total_iters;
  for (int i = 0; i < no; ++i) {
    eq.delta(others[static_cast<size_t>(i)]) = z(i);
    eq.emf(others[static_cast<size_t>(i)]) = z(no + i);
  }
  eq.emf(slack) = z(2 * no);

  // Mechanical power = realized electrical injection, so every machine is at
  // rest. Non-slack machines realize their dispatch exactly by construction;
  // the slack machine additionally absorbs the network series losses.
  const Eigen::VectorXcd s = machine_complex_power(red_a.y_red, eq.emf, eq.delta);
  eq.p_m_mw.resize(static_cast<size_t>(k));
  for (int m = 0; m < k; ++m)
    eq.p_m_mw[static_cast<size_t>(m)] = s(m).real() * net.s_base_mva;
  std::vector<double> d_pu(static_cast<size_t>(k));
  for (int m = 0; m < k; ++m)
    d_pu[static_cast<size_t>(m)] =
        oc.dispatch(red.machine_ids[static_cast<size_t>(m)]) / net.s_base_mva;
  Eigen::VectorXd f_check(nun);
  operating_point_residual(red_a.y_red, d_pu, x_sys, others, slack, z, f_check);
  eq.residual = f_check.lpNorm<Eigen::Infinity>();
  return eq;
}

namespace {

// Everything constant over one integration phase (pre- or post-event
// machine set), precomputed so the derivative callback is tight.
struct Phase {
  Eigen::MatrixXcd y;  // machine-node admittance
  std::vector<int> ids;
  std::vector<double> emf;
  std::vector<double> m_mw_hz;     // 2 H S_eff / f_n
  std::vector<double> d_mw_hz;     // damping S_eff / f_n
  std::vector<double> pm0_mw;      // droop anchor (pre-event mechanical power)
  std::vector<double> pmax_mw;
  std::vector<double> ramp_mw_s;   // commitment-scaled slew limit
  std::vector<double> gain_mw_hz;  // S_eff / (R f_n)
  std::vector<double> gate_time;   // absolute time the governor unfreezes
  // Monitored-bus reporting: a bus hosting machine m reads that rotor; a bus
  // with no machine in this phase blends rotors with |recovery| weights.
  std::vector<int> bus_machine;                 // per monitored bus, -1 = blend
  std::vector<std::vector<double>> bus_weight;  // normalized, for blended buses
};

Phase make_phase(const NetworkModel& net, const OperatingCondition& oc,
                 const ReducedNetwork& red, const Equilibrium& eq_pre,
                 const std::vector<int>& pre_ids, const std::vector<double>& pm_pre,
                 double event_time) {
  Phase ph;
  ph.y = red.y_red;
  ph.ids = red.machine_ids;
  const int k = static_cast<int>(ph.ids.size());
  for (int m = 0; m < k; ++m) {
    const auto& g = net.generator(ph.ids[m]);
    const int u = oc.units(g.id);
    const double s_eff = effective_rating(g, u);
    // Index of this machine in the pre-event ordering, where the equilibrium
    // EMFs and mechanical powers were computed.
    const auto it = std::find(pre_ids.begin(), pre_ids.end(), g.id);
    const int pre_idx = static_cast<int>(it - pre_ids.begin());
    ph.emf.push_back(eq_pre.emf(pre_idx));
    ph.m_mw_hz.push_back(2.0 * g.inertia_h * s_eff / net.f_n_hz);
    ph.d_mw_hz.push_back(g.damping * s_eff / net.f_n_hz);
    ph.pm0_mw.push_back(pm_pre[pre_idx]);
    // The slack machine's equilibrium output carries the network losses and can
    // sit above the dispatch ceiling. Its own operating point has to stay
    // admissible, or the governor would spend the first seconds after the
    // event walking the slack back down and deepen every transient.
    ph.pmax_mw.push_back(std::max(g.p_max * s_eff, pm_pre[pre_idx]));
    ph.ramp_mw_s.push_back(g.ramp_limit * u / g.units_total);
    ph.gain_mw_hz.push_back(s_eff / (g.droop * net.f_n_hz));
    ph.gate_time.push_back(event_time + g.deadband_s);
  }
  for (const int bus : net.monitored_buses) {
    int row = -1;
    for (size_t i = 0; i < red.recovery_buses.size(); ++i)
      if (red.recovery_buses[i] == bus) row = static_cast<int>(i);
    if (row < 0) throw Error(format_str("monitored bus %d has no recovery row", bus));
    int host = -1;
    for (int m = 0; m < k; ++m)
      if (net.generator(ph.ids[m]).bus == bus) host = m;
    ph.bus_machine.push_back(host);
    std::vector<double> w;
    if (host < 0) {
      double total = 0.0;
      for (int m = 0; m < k; ++m) total += std::abs(red.recovery(row, m));
      for (int m = 0; m < k; ++m) w.push_back(std::abs(red.recovery(row, m)) / total);
    }
    ph.bus_weight.push_back(std::move(w));
  }
  return ph;
}

// State layout per phase: [delta_0..k, freq_dev_0..k (Hz), pm_0..k (MW)].
void derivative(const Phase& ph, double s_base, bool governor_on, double t_abs,
                const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
  const int k = static_cast<int>(ph.ids.size());
  Eigen::VectorXcd e(k);
  for (int m = 0; m < k; ++m) e(m) = std::polar(ph.emf[m], y(m));
  const Eigen::VectorXcd cur = ph.y * e;
  for (int m = 0; m < k; ++m) {
    const double pe = (e(m) * std::conj(cur(m))).real() * s_base;
    const double fdev = y(k + m);
    const double pm = y(2 * k + m);
    dy(m) = 2.0 * kPi * fdev;
    dy(k + m) = (pm - pe - ph.d_mw_hz[m] * fdev) / ph.m_mw_hz[m];
    double rate = 0.0;
    if (governor_on && t_abs >= ph.gate_time[m]) {
      const double target = std::clamp(ph.pm0_mw[m] + ph.gain_mw_hz[m] * (-fdev),
                                       0.0, ph.pmax_mw[m]);
      rate = std::clamp((target - pm) / kServoTau, -ph.ramp_mw_s[m], ph.ramp_mw_s[m]);
    }
    dy(2 * k + m) = rate;
  }
}

void rk4_step(const Phase& ph, double s_base, bool governor_on, double t, double dt,
              Eigen::VectorXd& y, Eigen::VectorXd& k1, Eigen::VectorXd& k2,
              Eigen::VectorXd& k3, Eigen::VectorXd& k4, Eigen::VectorXd& tmp) {
  derivative(ph, s_base, governor_on, t, y, k1);
  tmp = y + 0.5 * dt * k1;
  derivative(ph, s_base, governor_on, t + 0.5 * dt, tmp, k2);
  tmp = y + 0.5 * dt * k2;
  derivative(ph, s_base, governor_on, t + 0.5 * dt, tmp, k3);
  tmp = y + dt * k3;
  derivative(ph, s_base, governor_on, t + dt, tmp, k4);
  y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

void record_step(const Phase& ph, const Eigen::VectorXd& y, double f_n,
                 const std::vector<int>& slot_of_id, size_t step, SimTraces& tr) {
  const int k = static_cast<int>(ph.ids.size());
  for (int m = 0; m < k; ++m) {
    const int slot = slot_of_id[static_cast<size_t>(m)];
    tr.machine_freq[slot][step] = f_n + y(k + m);
    tr.machine_pm[slot][step] = y(2 * k + m);
  }
  for (size_t b = 0; b < ph.bus_machine.size(); ++b) {
    if (ph.bus_machine[b] >= 0) {
      tr.bus_freq[b][step] = f_n + y(k + ph.bus_machine[b]);
    } else {
      double f = 0.0;
      for (int m = 0; m < k; ++m) f += ph.bus_weight[b][m] * (f_n + y(k + m));
      tr.bus_freq[b][step] = f;
    }
  }
}

}  // namespace

FrequencyOutcome simulate(const NetworkModel& net, const OperatingCondition& oc,
                          const std::optional<DisturbanceEvent>& event,
                          const SimConfig& cfg) {
  if (cfg.dt <= 0) throw Error("simulation step must be positive");
  if (cfg.rocof_window < cfg.dt) throw Error("rocof window shorter than one step");
  if (event && cfg.horizon <= cfg.disturbance_t0)
    throw Error("horizon ends before the disturbance");
  if (cfg.scheme != "rk4-fixed")
    throw Error("unknown integration scheme '" + cfg.scheme + "'");
  check_condition_light(net, oc);

  DisturbanceEvent ev;
  if (event) {
    ev = *event;
    if (!oc.committed(ev.target_gen))
      throw Error(format_str("outage target %d is not committed in OC %s",
                             ev.target_gen, oc.id.c_str()));
    ev.magnitude_mw = oc.dispatch(ev.target_gen);
  }

  ReducedNetwork red_pre = kron_reduce(net, oc, 0);
  const Equilibrium eq = solve_equilibrium(net, oc, red_pre);
  red_pre = kron_reduce(net, oc, 0, &eq.load_y);
  if (event && ev.target_gen == eq.slack_id)
    throw Error("outage of the slack machine is not supported");

  const size_t n_steps = static_cast<size_t>(std::llround(cfg.horizon / cfg.dt));
  const size_t e_step =
      event ? static_cast<size_t>(std::llround(cfg.disturbance_t0 / cfg.dt)) : SIZE_MAX;
  const double t_event = static_cast<double>(e_step) * cfg.dt;

  SimTraces tr;
  tr.monitored_buses = net.monitored_buses;
  tr.machine_ids = red_pre.machine_ids;
  tr.outage_machine = event ? ev.target_gen : 0;
  tr.event_step = e_step;
  tr.f_n_hz = net.f_n_hz;
  tr.rocof_window = cfg.rocof_window;
  tr.t.resize(n_steps + 1);
  tr.bus_freq.assign(net.monitored_buses.size(), std::vector<double>(n_steps + 1, 0.0));
  tr.machine_freq.assign(tr.machine_ids.size(), std::vector<double>(n_steps + 1, 0.0));
  tr.machine_pm.assign(tr.machine_ids.size(), std::vector<double>(n_steps + 1, 0.0));
  tr.initial_rocof.assign(net.monitored_buses.size(), 0.0);

  const Phase pre = make_phase(net, oc, red_pre, eq, red_pre.machine_ids, eq.p_m_mw,
                               t_event);
  std::vector<int> pre_slots(pre.ids.size());
  for (size_t m = 0; m < pre.ids.size(); ++m) pre_slots[m] = static_cast<int>(m);

  const int k_pre = static_cast<int>(pre.ids.size());
  Eigen::VectorXd y(3 * k_pre);
  for (int m = 0; m < k_pre; ++m) {
    y(m) = eq.delta(m);
    y(k_pre + m) = 0.0;
    y(2 * k_pre + m) = eq.p_m_mw[m];
  }

  Eigen::VectorXd k1, k2, k3, k4, tmp;
  auto resize_ws = [&](int k) {
    k1.resize(3 * k); k2.resize(3 * k); k3.resize(3 * k); k4.resize(3 * k);
    tmp.resize(3 * k);
  };
  resize_ws(k_pre);

  size_t last_step = n_steps;
  record_step(pre, y, net.f_n_hz, pre_slots, 0, tr);
  tr.t[0] = 0.0;

  // Pre-event phase. The initial state is an equilibrium, so this mostly
  // verifies that it really is one (and serves whole-run integration when
  // there is no event at all).
  const size_t pre_end = std::min(e_step, n_steps);
  for (size_t s = 0; s < pre_end && !tr.diverged; ++s) {
    const double t = static_cast<double>(s) * cfg.dt;
    rk4_step(pre, net.s_base_mva, false, t, cfg.dt, y, k1, k2, k3, k4, tmp);
    tr.t[s + 1] = t + cfg.dt;
    record_step(pre, y, net.f_n_hz, pre_slots, s + 1, tr);
    for (int m = 0; m < k_pre; ++m)
      if (std::fabs(y(k_pre + m)) > kDivergedHz) {
        tr.diverged = true;
        last_step = s + 1;
      }
  }

  if (event && !tr.diverged && e_step < n_steps) {
    // The post-event loads are re-converted at the voltages of the switching
    // instant, so each bus keeps drawing its schedule the moment the machine
    // drops out and the sudden imbalance equals exactly the lost output. The
    // fixed point iterates the passive network solve at the frozen survivor
    // states; convergence is immediate when the outage carried no current.
    ReducedNetwork red_post = kron_reduce(net, oc, ev.target_gen, &eq.load_y);
    {
      const int k_surv = static_cast<int>(red_post.machine_ids.size());
      if (k_surv == 0) throw Error("outage removes the only committed machine");
      Eigen::VectorXcd e_surv(k_surv);
      for (int m = 0; m < k_surv; ++m) {
        const auto it = std::find(red_pre.machine_ids.begin(), red_pre.machine_ids.end(),
                                  red_post.machine_ids[static_cast<size_t>(m)]);
        const int pm = static_cast<int>(it - red_pre.machine_ids.begin());
        e_surv(m) = std::polar(eq.emf(pm), y(pm));
      }
      Eigen::VectorXcd y_load = eq.load_y;
      LoadAnchor anchor(net, oc, "post-event");
      while (!anchor.refine(red_post.recovery * e_surv, y_load))
        red_post = kron_reduce(net, oc, ev.target_gen, &y_load);
    }
    const Phase post = make_phase(net, oc, red_post, eq, red_pre.machine_ids,
                                  eq.p_m_mw, t_event);
    const int k_post = static_cast<int>(post.ids.size());

    std::vector<int> post_slots(post.ids.size());
    for (size_t m = 0; m < post.ids.size(); ++m) {
      const auto it = std::find(tr.machine_ids.begin(), tr.machine_ids.end(),
                                post.ids[m]);
      post_slots[m] = static_cast<int>(it - tr.machine_ids.begin());
    }
    // Survivors carry their state across the switch; the lost machine's
    // angle, deviation and mechanical power leave the state vector.
    Eigen::VectorXd y_post(3 * k_post);
    for (int m = 0; m < k_post; ++m) {
      const int pm = post_slots[static_cast<size_t>(m)];
      y_post(m) = y(pm);
      y_post(k_post + m) = y(k_pre + pm);
      y_post(2 * k_post + m) = y(2 * k_pre + pm);
    }
    y.swap(y_post);
    resize_ws(k_post);

    // The instantaneous post-event slope, from the first derivative
    // evaluation on the switched network.
    derivative(post, net.s_base_mva, true, t_event, y, k1);
    for (size_t b = 0; b < tr.monitored_buses.size(); ++b) {
      if (post.bus_machine[b] >= 0) {
        tr.initial_rocof[b] = k1(k_post + post.bus_machine[b]);
      } else {
        double r = 0.0;
        for (int m = 0; m < k_post; ++m) r += post.bus_weight[b][m] * k1(k_post + m);
        tr.initial_rocof[b] = r;
      }
    }
    // Rewrite the event-step sample on the post-event network so the outaged
    // bus already reads the blended estimate, then march to the horizon.
    record_step(post, y, net.f_n_hz, post_slots, e_step, tr);

    for (size_t s = e_step; s < n_steps && !tr.diverged; ++s) {
      const double t = static_cast<double>(s) * cfg.dt;
      rk4_step(post, net.s_base_mva, true, t, cfg.dt, y, k1, k2, k3, k4, tmp);
      tr.t[s + 1] = t + cfg.dt;
      record_step(post, y, net.f_n_hz, post_slots, s + 1, tr);
      for (int m = 0; m < k_post; ++m)
        if (std::fabs(y(k_post + m)) > kDivergedHz) {
          tr.diverged = true;
          last_step = s + 1;
        }
    }
    // The lost machine produces nothing after the event.
    const auto it = std::find(tr.machine_ids.begin(), tr.machine_ids.end(),
                              ev.target_gen);
    if (it != tr.machine_ids.end()) {
      const size_t slot = static_cast<size_t>(it - tr.machine_ids.begin());
      for (size_t s = e_step + 1; s <= n_steps; ++s) tr.machine_pm[slot][s] = 0.0;
      // Its rotor row now reports the blended bus estimate already written by
      // record_step for its bus.
      const auto bus_it = std::find(tr.monitored_buses.begin(), tr.monitored_buses.end(),
                                    net.generator(ev.target_gen).bus);
      if (bus_it != tr.monitored_buses.end()) {
        const size_t bidx = static_cast<size_t>(bus_it - tr.monitored_buses.begin());
        for (size_t s = e_step; s <= n_steps; ++s)
          tr.machine_freq[slot][s] = tr.bus_freq[bidx][s];
      }
    }
  }

  if (tr.diverged && last_step < n_steps) {
    tr.t.resize(last_step + 1);
    for (auto& row : tr.bus_freq) row.resize(last_step + 1);
    for (auto& row : tr.machine_freq) row.resize(last_step + 1);
    for (auto& row : tr.machine_pm) row.resize(last_step + 1);
  }

  FrequencyOutcome out = extract_metrics(tr, net, oc, cfg);
  if (cfg.store_traces) out.traces = std::move(tr);
  return out;
}

FrequencyOutcome extract_metrics(const SimTraces& tr, const NetworkModel& net,
                                 const OperatingCondition& oc, const SimConfig& cfg) {
  FrequencyOutcome out;
  out.diverged = tr.diverged;
  const size_t n = tr.t.size();
  if (n < 2) throw Error("trace too short for metric extraction");
  const size_t e0 = tr.event_step == SIZE_MAX ? 0 : std::min(tr.event_step, n - 1);
  const size_t w_steps = std::max<size_t>(
      1, static_cast<size_t>(std::llround(tr.rocof_window / cfg.dt)));
  if (e0 + w_steps >= n && tr.event_step != SIZE_MAX && !tr.diverged)
    throw Error("rocof window does not fit between event and horizon");

  auto windowed_rocof = [&](const std::vector<double>& f) {
    double worst = 0.0;
    if (f.size() < e0 + w_steps + 1) return worst;
    for (size_t s = e0; s + w_steps < f.size(); ++s) {
      const double slope = (f[s + w_steps] - f[s]) / (tr.rocof_window);
      worst = std::min(worst, slope);
    }
    return worst;
  };
  auto argmin_from = [&](const std::vector<double>& f) {
    size_t best = e0;
    for (size_t s = e0; s < f.size(); ++s)
      if (f[s] < f[best]) best = s;
    return best;
  };

  for (size_t b = 0; b < tr.monitored_buses.size(); ++b) {
    BusMetrics bm;
    bm.bus = tr.monitored_buses[b];
    const auto& f = tr.bus_freq[b];
    bm.rocof = windowed_rocof(f);
    bm.initial_rocof = b < tr.initial_rocof.size() ? tr.initial_rocof[b] : 0.0;
    const size_t am = argmin_from(f);
    bm.nadir = f[am];
    bm.t_nadir = (static_cast<double>(am) - static_cast<double>(e0)) * cfg.dt;
    out.buses.push_back(bm);
  }

  for (const auto& g : net.generators) {
    GovernorMetrics gm;
    gm.gen_id = g.id;
    const auto it = std::find(tr.machine_ids.begin(), tr.machine_ids.end(), g.id);
    gm.online = oc.committed(g.id) && it != tr.machine_ids.end() &&
                g.id != tr.outage_machine;
    if (gm.online) {
      const size_t slot = static_cast<size_t>(it - tr.machine_ids.begin());
      const size_t am = argmin_from(tr.machine_freq[slot]);
      gm.t_nadir = (static_cast<double>(am) - static_cast<double>(e0)) * cfg.dt;
      gm.p0_mw = tr.machine_pm[slot][e0];
      gm.p_at_nadir_mw = tr.machine_pm[slot][am];
      gm.ramp_rate_prr =
          gm.t_nadir > 0 ? (gm.p_at_nadir_mw - gm.p0_mw) / gm.t_nadir : 0.0;
    }
    out.governors.push_back(gm);
  }

  const std::vector<double> coi = coi_frequency(tr, net, oc);
  out.coi_rocof = windowed_rocof(coi);
  out.coi_nadir = *std::min_element(coi.begin() + static_cast<long>(e0), coi.end());
  return out;
}

std::vector<double> coi_frequency(const SimTraces& tr, const NetworkModel& net,
                                  const OperatingCondition& oc) {
  const size_t n = tr.t.size();
  std::vector<double> coi(n, 0.0);
  for (size_t s = 0; s < n; ++s) {
    double wsum = 0.0, fsum = 0.0;
    for (size_t m = 0; m < tr.machine_ids.size(); ++m) {
      const int id = tr.machine_ids[m];
      if (tr.event_step != SIZE_MAX && s >= tr.event_step && id == tr.outage_machine)
        continue;
      const auto& g = net.generator(id);
      const double w = g.inertia_h * effective_rating(g, oc.units(id));
      wsum += w;
      fsum += w * tr.machine_freq[m][s];
    }
    if (wsum <= 0) throw Error("no committed machine left for the mean frequency");
    coi[s] = fsum / wsum;
  }
  return coi;
}

void dump_trace_file(const SimTraces& tr, const std::string& path) {
  std::ostringstream os;
  os << "# t";
  for (int b : tr.monitored_buses) os << " f_bus" << b;
  os << "\n";
  for (size_t s = 0; s < tr.t.size(); ++s) {
    os << format_str("%.6f", tr.t[s]);
    for (size_t b = 0; b < tr.bus_freq.size(); ++b)
      os << format_str(" %.6f", tr.bus_freq[b][s]);
    os << "\n";
  }
  write_text_file(path, os.str());
}

}  // namespace gridfreq
