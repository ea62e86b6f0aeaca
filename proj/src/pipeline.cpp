#include "gridfreq/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "gridfreq/common.hpp"

namespace gridfreq {

namespace {

Eigen::MatrixXd rows_to_matrix(const std::vector<SampleRow>& rows,
                               std::vector<double> SampleRow::* field,
                               const char* what) {
  if (rows.empty()) throw Error(format_str("%s: no rows to convert", what));
  const size_t width = (rows.front().*field).size();
  Eigen::MatrixXd m(rows.size(), width);
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& v = rows[i].*field;
    if (v.size() != width)
      throw Error(format_str("%s: row %s has %zu columns where the first has %zu",
                             what, rows[i].id.c_str(), v.size(), width));
    for (size_t j = 0; j < width; ++j) m(i, j) = v[j];
  }
  return m;
}

void check_bundle(const RegressorBundle& b, const std::vector<std::string>& want,
                  size_t feat_width, const char* which) {
  if (static_cast<size_t>(b.in_sel.full_width) != feat_width)
    throw Error(format_str("the %s bundle reads %d features but this network produces %zu",
                           which, b.in_sel.full_width, feat_width));
  if (b.target_names.empty())
    throw Error(format_str("the %s bundle carries no target names; retrain it with the dataset layout",
                           which));
  if (b.target_names.size() != want.size())
    throw Error(format_str("the %s bundle answers %zu targets but this network expects %zu",
                           which, b.target_names.size(), want.size()));
  for (size_t i = 0; i < want.size(); ++i)
    if (b.target_names[i] != want[i])
      throw Error(format_str("the %s bundle calls target %zu %s where this network expects %s",
                             which, i, b.target_names[i].c_str(), want[i].c_str()));
}

void check_trainable(const std::vector<SampleRow>& rows, const char* which) {
  if (rows.empty())
    throw Error(format_str("%s training needs at least one row", which));
  for (const auto& r : rows)
    if (r.diverged)
      throw Error(format_str("row %s is flagged diverged; train on trainable_rows()",
                             r.id.c_str()));
}

void check_screen_limits(const FrequencyLimits& limits) {
  if (!(limits.rocof_limit < 0.0) || !(limits.nadir_limit < limits.f_0))
    throw Error(
        "screening limits must point downward: a negative rocof bound and a "
        "nadir floor below nominal");
}

Eigen::VectorXd score_condition(const RegressorBundle& b, const NetworkModel& net,
                                const OperatingCondition& oc) {
  const std::vector<double> fv = feature_vector(net, oc);
  const Eigen::Map<const Eigen::VectorXd> x(fv.data(),
                                            static_cast<Eigen::Index>(fv.size()));
  return predict(b, x);
}

double worst_nadir(const std::vector<BusScreen>& buses) {
  double w = buses.empty() ? 0.0 : buses.front().nadir;
  for (const auto& b : buses) w = std::min(w, b.nadir);
  return w;
}

double worst_rocof(const std::vector<BusScreen>& buses) {
  double w = buses.empty() ? 0.0 : buses.front().rocof;
  for (const auto& b : buses) w = std::min(w, b.rocof);
  return w;
}

bool any_violated(const std::vector<BusScreen>& buses) {
  for (const auto& b : buses)
    if (b.violated) return true;
  return false;
}

// Shapes stage 1 and 2 output into the record the regulator reads. Bus
// nadir times are not predicted, so they stay zero; the regulator only
// consumes per-plant timing.
FrequencyOutcome predicted_outcome(const OperatingCondition& oc,
                                   const ScreenResult& screen,
                                   const std::vector<GovernorPrediction>& gov) {
  FrequencyOutcome fo;
  for (const auto& b : screen.buses) {
    BusMetrics bm;
    bm.bus = b.bus;
    bm.rocof = b.rocof;
    bm.initial_rocof = b.rocof;
    bm.nadir = b.nadir;
    bm.t_nadir = 0.0;
    fo.buses.push_back(bm);
  }
  fo.coi_rocof = worst_rocof(screen.buses);
  fo.coi_nadir = worst_nadir(screen.buses);
  for (const auto& gp : gov) {
    GovernorMetrics gm;
    gm.gen_id = gp.gen_id;
    gm.online = gp.present;
    gm.p0_mw = oc.dispatch(gp.gen_id);
    gm.ramp_rate_prr = gp.ramp_rate_prr;
    gm.t_nadir = gp.t_nadir;
    gm.p_at_nadir_mw = gm.p0_mw + gm.ramp_rate_prr * gm.t_nadir;
    fo.governors.push_back(gm);
  }
  return fo;
}

// Per-bus verdicts of one simulated outcome against the unpadded limits.
std::vector<BusScreen> judge_sim(const FrequencyOutcome& fo,
                                 const FrequencyLimits& limits) {
  std::vector<BusScreen> out;
  for (const auto& bm : fo.buses) {
    BusScreen b;
    b.bus = bm.bus;
    b.rocof = bm.rocof;
    b.nadir = bm.nadir;
    b.violated = violates_limits(bm.rocof, bm.nadir, limits);
    out.push_back(b);
  }
  return out;
}

std::string fmt_cell(double v) { return format_str("%.10g", v); }

}  // namespace

Eigen::MatrixXd feature_matrix(const std::vector<SampleRow>& rows) {
  return rows_to_matrix(rows, &SampleRow::features, "feature matrix");
}

Eigen::MatrixXd bus_target_matrix(const std::vector<SampleRow>& rows) {
  return rows_to_matrix(rows, &SampleRow::bus_targets, "bus target matrix");
}

Eigen::MatrixXd machine_target_matrix(const std::vector<SampleRow>& rows) {
  return rows_to_matrix(rows, &SampleRow::machine_targets, "machine target matrix");
}

Eigen::MatrixXd machine_mask_matrix(const std::vector<SampleRow>& rows) {
  if (rows.empty()) throw Error("machine mask matrix: no rows to convert");
  const size_t width = rows.front().machine_mask.size();
  Eigen::MatrixXd m(rows.size(), width);
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& v = rows[i].machine_mask;
    if (v.size() != width)
      throw Error(format_str("machine mask matrix: row %s has %zu columns where the first has %zu",
                             rows[i].id.c_str(), v.size(), width));
    for (size_t j = 0; j < width; ++j) m(i, j) = static_cast<double>(v[j]);
  }
  return m;
}

std::vector<int> default_hidden() { return {100, 100, 100}; }

RegressorBundle train_metrics_model(const NetworkModel& net,
                                    const std::vector<SampleRow>& rows,
                                    const std::vector<int>& hidden,
                                    const TrainConfig& cfg) {
  check_trainable(rows, "metrics");
  const Eigen::MatrixXd x = feature_matrix(rows);
  const Eigen::MatrixXd y = bus_target_matrix(rows);
  const auto names = bus_target_names(net);
  if (static_cast<size_t>(x.cols()) != feature_names(net).size())
    throw Error(format_str("rows carry %ld features but this network lays out %zu",
                           x.cols(), feature_names(net).size()));
  if (static_cast<size_t>(y.cols()) != names.size())
    throw Error(format_str("rows carry %ld bus targets but this network lays out %zu",
                           y.cols(), names.size()));
  return train(x, y, hidden, cfg, names);
}

RegressorBundle train_governor_model(const NetworkModel& net,
                                     const std::vector<SampleRow>& rows,
                                     const std::vector<int>& hidden,
                                     const TrainConfig& cfg) {
  check_trainable(rows, "governor");
  const Eigen::MatrixXd x = feature_matrix(rows);
  const Eigen::MatrixXd y = machine_target_matrix(rows);
  const auto names = machine_target_names(net);
  if (static_cast<size_t>(x.cols()) != feature_names(net).size())
    throw Error(format_str("rows carry %ld features but this network lays out %zu",
                           x.cols(), feature_names(net).size()));
  if (static_cast<size_t>(y.cols()) != names.size())
    throw Error(format_str("rows carry %ld machine targets but this network lays out %zu",
                           y.cols(), names.size()));
  return train(x, y, hidden, cfg, names);
}

ScreenResult stage1_screen(const RegressorBundle& metrics, const NetworkModel& net,
                           const OperatingCondition& oc,
                           const FrequencyLimits& limits) {
  check_screen_limits(limits);
  check_bundle(metrics, bus_target_names(net), feature_names(net).size(),
               "metrics");
  const Eigen::VectorXd y = score_condition(metrics, net, oc);
  const size_t nb = net.monitored_buses.size();
  ScreenResult res;
  for (size_t i = 0; i < nb; ++i) {
    BusScreen b;
    b.bus = net.monitored_buses[i];
    b.rocof = y(static_cast<Eigen::Index>(i));
    b.nadir = y(static_cast<Eigen::Index>(nb + i));
    b.violated = violates_limits(b.rocof, b.nadir, limits);
    if (b.violated) {
      res.violating.push_back(b.bus);
      res.any = true;
    }
    res.buses.push_back(b);
  }
  return res;
}

std::vector<GovernorPrediction> stage2_governor(const RegressorBundle& governor,
                                                const NetworkModel& net,
                                                const OperatingCondition& oc,
                                                int outage_gen) {
  check_bundle(governor, machine_target_names(net), feature_names(net).size(),
               "governor");
  net.generator(outage_gen);  // unknown outage plant fails here
  const Eigen::VectorXd y = score_condition(governor, net, oc);
  const size_t ng = net.generators.size();
  std::vector<GovernorPrediction> out;
  for (size_t i = 0; i < ng; ++i) {
    const auto& g = net.generators[i];
    GovernorPrediction gp;
    gp.gen_id = g.id;
    gp.present = oc.committed(g.id) && g.id != outage_gen;
    if (gp.present) {
      gp.ramp_rate_prr = y(static_cast<Eigen::Index>(i));
      gp.t_nadir = y(static_cast<Eigen::Index>(ng + i));
    }
    out.push_back(gp);
  }
  return out;
}

ConditionRecord run_pipeline(const NetworkModel& net, const OperatingCondition& oc,
                             const DisturbanceEvent& event,
                             const RegressorBundle& metrics,
                             const RegressorBundle& governor,
                             const FrequencyLimits& limits,
                             const PipelineOptions& options) {
  if (options.max_passes < 1)
    throw Error("at least one regulation pass is required");
  if (!(options.nadir_margin_hz >= 0.0))
    throw Error("the nadir margin cannot be negative");
  check_screen_limits(limits);
  FrequencyLimits aim = limits;
  aim.nadir_limit += options.nadir_margin_hz;
  if (!(aim.nadir_limit < aim.f_0))
    throw Error(format_str("a margin of %g Hz pushes the nadir floor to nominal",
                           options.nadir_margin_hz));

  ConditionRecord rec;
  rec.oc_id = oc.id;
  rec.screen = stage1_screen(metrics, net, oc, aim);
  rec.violating = rec.screen.any;

  OperatingCondition cur = oc;
  if (rec.violating) {
    // Predictions describing whatever `cur` currently is; the first pass
    // reuses the stage 1 result, later passes the re-screen.
    ScreenResult view = rec.screen;
    try {
      for (int pass = 0; pass < options.max_passes && view.any; ++pass) {
        rec.governors = stage2_governor(governor, net, cur, event.target_gen);
        DisturbanceEvent ev = event;
        ev.magnitude_mw = cur.dispatch(event.target_gen);
        const FrequencyOutcome pred = predicted_outcome(cur, view, rec.governors);
        rec.regulation = regulate(net, cur, ev, pred, aim, options.variant);
        cur = rec.regulation.redispatched;
        rec.regulated = true;
        ++rec.passes;
        if (!options.revalidate_ml) break;
        view = stage1_screen(metrics, net, cur, aim);
        rec.rescreened = true;
        rec.rescreen = view;
        rec.rescreen_clean = !view.any;
      }
    } catch (const InfeasibleError& e) {
      rec.infeasible = true;
      rec.infeasible_reason = e.what();
    }
  }

  if (options.validate_sim && rec.violating) {
    const FrequencyOutcome before = simulate(net, oc, event, options.sim);
    rec.sim_before = judge_sim(before, limits);
    rec.sim_violating_before = any_violated(rec.sim_before) || before.diverged;
    rec.sim_nadir_before = worst_nadir(rec.sim_before);
    rec.sim_rocof_before = worst_rocof(rec.sim_before);
    rec.sim_checked = true;
    if (rec.regulated) {
      const FrequencyOutcome after = simulate(net, cur, event, options.sim);
      rec.sim_after = judge_sim(after, limits);
      rec.sim_nadir_after = worst_nadir(rec.sim_after);
      rec.sim_rocof_after = worst_rocof(rec.sim_after);
      rec.sim_compliant = !any_violated(rec.sim_after) && !after.diverged;
    }
  }
  return rec;
}

PipelineReport summarize(std::vector<ConditionRecord> records) {
  PipelineReport rep;
  rep.total = records.size();
  for (const auto& r : records) {
    if (r.violating)
      ++rep.violating;
    else
      ++rep.screened_clean;
    if (r.regulated) ++rep.regulated;
    if (r.infeasible) ++rep.infeasible;
    if (r.rescreened && r.rescreen_clean) ++rep.rescreen_clean;
    if (r.sim_checked) {
      ++rep.sim_checked;
      if (r.sim_violating_before) ++rep.sim_confirmed_violating;
      if (r.sim_compliant) ++rep.sim_compliant;
      for (const auto& b : r.sim_after) {
        ++rep.bus_pairs_checked;
        if (!b.violated) ++rep.bus_pairs_compliant;
      }
    }
  }
  if (rep.sim_checked > 0)
    rep.oc_compliance_pct =
        100.0 * static_cast<double>(rep.sim_compliant) / static_cast<double>(rep.sim_checked);
  if (rep.bus_pairs_checked > 0)
    rep.bus_compliance_pct = 100.0 * static_cast<double>(rep.bus_pairs_compliant) /
                             static_cast<double>(rep.bus_pairs_checked);
  rep.records = std::move(records);
  return rep;
}

PipelineReport run_batch(const NetworkModel& net,
                         const std::vector<OperatingCondition>& ocs,
                         const DisturbanceEvent& event,
                         const RegressorBundle& metrics,
                         const RegressorBundle& governor,
                         const FrequencyLimits& limits,
                         const PipelineOptions& options) {
  std::vector<ConditionRecord> records;
  records.reserve(ocs.size());
  for (const auto& oc : ocs)
    records.push_back(
        run_pipeline(net, oc, event, metrics, governor, limits, options));
  return summarize(std::move(records));
}

std::string report_table_tsv(const PipelineReport& rep) {
  std::string out =
      "id\tviolating\tpasses\tinfeasible\tbinding_bus\tcriterion\tpsi_star_mw\t"
      "delta_p_star_mw\trescreen_clean\tsim_nadir_before\tsim_nadir_after\t"
      "sim_rocof_before\tsim_rocof_after\tsim_compliant\n";
  for (const auto& r : rep.records) {
    out += r.oc_id;
    out += '\t';
    out += r.violating ? '1' : '0';
    out += format_str("\t%d\t", r.passes);
    out += r.infeasible ? '1' : '0';
    if (r.regulated) {
      out += format_str("\t%d\t%s\t%s\t%s", r.regulation.binding_bus,
                        r.regulation.binding_criterion == Criterion::rocof
                            ? "rocof"
                            : "nadir",
                        fmt_cell(r.regulation.psi_star_mw).c_str(),
                        fmt_cell(r.regulation.delta_p_star_mw).c_str());
    } else {
      out += "\t-\t-\t-\t-";
    }
    out += '\t';
    if (r.rescreened)
      out += r.rescreen_clean ? '1' : '0';
    else
      out += '-';
    if (r.sim_checked) {
      out += '\t';
      out += fmt_cell(r.sim_nadir_before);
      if (r.regulated) {
        out += '\t';
        out += fmt_cell(r.sim_nadir_after);
      } else {
        out += "\t-";
      }
      out += '\t';
      out += fmt_cell(r.sim_rocof_before);
      if (r.regulated) {
        out += '\t';
        out += fmt_cell(r.sim_rocof_after);
        out += '\t';
        out += r.sim_compliant ? '1' : '0';
      } else {
        out += "\t-\t-";
      }
    } else {
      out += "\t-\t-\t-\t-\t-";
    }
    out += '\n';
  }
  return out;
}

std::string report_summary_text(const PipelineReport& rep) {
  std::string out;
  out += format_str("conditions screened      %zu\n", rep.total);
  out += format_str("clean at stage 1         %zu\n", rep.screened_clean);
  out += format_str("flagged                  %zu\n", rep.violating);
  out += format_str("regulated                %zu\n", rep.regulated);
  out += format_str("infeasible               %zu\n", rep.infeasible);
  out += format_str("re-screen clean          %zu\n", rep.rescreen_clean);
  out += format_str("simulator checked        %zu\n", rep.sim_checked);
  out += format_str("  confirmed violating    %zu\n", rep.sim_confirmed_violating);
  out += format_str("  compliant after        %zu (%.1f%% of checked)\n",
                    rep.sim_compliant, rep.oc_compliance_pct);
  out += format_str("bus pairs checked        %zu\n", rep.bus_pairs_checked);
  out += format_str("  compliant              %zu (%.1f%%)\n",
                    rep.bus_pairs_compliant, rep.bus_compliance_pct);
  return out;
}

EvaluationReport evaluate_models(const RegressorBundle& metrics,
                                 const RegressorBundle& governor,
                                 const NetworkModel& net,
                                 const std::vector<SampleRow>& rows) {
  const auto usable = trainable_rows(rows);
  if (usable.empty())
    throw Error("evaluation needs at least one non-diverged row");
  const auto bus_names = bus_target_names(net);
  const auto mach_names = machine_target_names(net);
  check_bundle(metrics, bus_names, feature_names(net).size(), "metrics");
  check_bundle(governor, mach_names, feature_names(net).size(), "governor");

  const Eigen::MatrixXd x = feature_matrix(usable);
  const Eigen::MatrixXd yb = bus_target_matrix(usable);
  const Eigen::MatrixXd ym = machine_target_matrix(usable);
  const Eigen::MatrixXd mask = machine_mask_matrix(usable);
  if (static_cast<size_t>(x.cols()) != feature_names(net).size() ||
      static_cast<size_t>(yb.cols()) != bus_names.size() ||
      static_cast<size_t>(ym.cols()) != mach_names.size())
    throw Error("the rows do not follow this network's column layout");

  EvaluationReport rep;
  rep.rows_scored = usable.size();

  const Eigen::MatrixXd yb_hat = predict_batch(metrics, x);
  const Eigen::VectorXd bus_err = rmse(yb, yb_hat);
  for (size_t c = 0; c < bus_names.size(); ++c) {
    ColumnScore s;
    s.name = bus_names[c];
    s.rmse = bus_err(static_cast<Eigen::Index>(c));
    s.rows = usable.size();
    rep.bus_scores.push_back(s);
  }

  // Governor columns only mean something where the plant was live, so each
  // column gets its own row count.
  const Eigen::MatrixXd ym_hat = predict_batch(governor, x);
  const size_t ng = net.generators.size();
  for (size_t c = 0; c < mach_names.size(); ++c) {
    const size_t plant = c < ng ? c : c - ng;
    double sq = 0.0;
    size_t n = 0;
    for (Eigen::Index r = 0; r < ym.rows(); ++r) {
      if (mask(r, static_cast<Eigen::Index>(plant)) == 0.0) continue;
      const double d = ym_hat(r, static_cast<Eigen::Index>(c)) -
                       ym(r, static_cast<Eigen::Index>(c));
      sq += d * d;
      ++n;
    }
    ColumnScore s;
    s.name = mach_names[c];
    s.rows = n;
    s.rmse = n > 0 ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
    rep.machine_scores.push_back(s);
  }
  return rep;
}

std::string evaluation_table_text(const EvaluationReport& rep) {
  std::string out = format_str("held-out accuracy over %zu rows\n\n", rep.rows_scored);
  out += format_str("%-12s %12s %8s\n", "column", "rmse", "rows");
  const auto emit = [&out](const ColumnScore& s) {
    if (s.rows == 0)
      out += format_str("%-12s %12s %8zu\n", s.name.c_str(), "-", s.rows);
    else
      out += format_str("%-12s %12.6g %8zu\n", s.name.c_str(), s.rmse, s.rows);
  };
  for (const auto& s : rep.bus_scores) emit(s);
  for (const auto& s : rep.machine_scores) emit(s);
  return out;
}

}  // namespace gridfreq
