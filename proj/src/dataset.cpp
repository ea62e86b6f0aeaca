#include "gridfreq/dataset.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "gridfreq/common.hpp"
#include "gridfreq/dynamics_sim.hpp"

namespace gridfreq {
namespace {

using ordered_json = nlohmann::ordered_json;

// Units online per displaced plant for this pattern, omitted plants at full
// commitment.
int pattern_units(const NetworkModel& net, const std::map<int, int>& pattern,
                  int gen_id) {
  const auto it = pattern.find(gen_id);
  return it == pattern.end() ? net.generator(gen_id).units_total : it->second;
}

double pattern_cig_mw(const NetworkModel& net, const std::map<int, int>& pattern) {
  std::vector<SyncGenerator> displaced;
  for (const int id : net.displaced_ids) {
    SyncGenerator g = net.generator(id);
    g.units_online = pattern_units(net, pattern, id);
    displaced.push_back(g);
  }
  return cig_capacity(displaced, net.cig.r_replace, net.cig.s_extra);
}

std::string point_id(const NetworkModel& net, double loading,
                     const std::map<int, int>& pattern) {
  std::string id = format_str("l%.3f", loading);
  if (!net.displaced_ids.empty()) {
    id += "_u";
    for (size_t i = 0; i < net.displaced_ids.size(); ++i) {
      if (i) id += '-';
      id += std::to_string(pattern_units(net, pattern, net.displaced_ids[i]));
    }
  }
  return id;
}

// Running per-column min/max for the manifest.
struct ColumnRanges {
  std::vector<double> lo, hi;
  void absorb(const std::vector<double>& vals) {
    if (lo.empty()) {
      lo = vals;
      hi = vals;
      return;
    }
    for (size_t i = 0; i < vals.size(); ++i) {
      lo[i] = std::min(lo[i], vals[i]);
      hi[i] = std::max(hi[i], vals[i]);
    }
  }
};

ordered_json file_entry(const std::string& path, const std::string& content,
                        size_t rows, const std::vector<std::string>& cols,
                        const ColumnRanges& ranges) {
  ordered_json entry;
  entry["path"] = path;
  entry["rows"] = rows;
  entry["fnv1a64"] = format_str("%016llx",
                                static_cast<unsigned long long>(fnv1a64(content)));
  ordered_json columns;
  for (size_t i = 0; i < cols.size() && i < ranges.lo.size(); ++i)
    columns[cols[i]] = {ranges.lo[i], ranges.hi[i]};
  entry["columns"] = columns;
  return entry;
}

void append_row(std::string& text, const std::string& id,
                const std::vector<double>& vals) {
  text += id;
  for (const double v : vals) {
    text += '\t';
    text += fmt_double(v);
  }
  text += '\n';
}

std::vector<std::string> table_lines(const std::string& path) {
  auto lines = split_char(read_text_file(path), '\n');
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw IoError(format_str("%s has no header row", path.c_str()));
  return lines;
}

}  // namespace

SweepSpec default_sweep(const NetworkModel& net, uint64_t seed,
                        size_t pattern_count) {
  SweepSpec spec;
  spec.seed = seed;
  for (int i = 0; i < 18; ++i) spec.loading_grid.push_back(0.6 + 0.025 * i);

  // Every commitment tuple with one to all units per displaced plant, in
  // lexicographic order of the displaced-plant list.
  std::vector<std::map<int, int>> all;
  const auto& ids = net.displaced_ids;
  if (ids.empty()) {
    all.push_back({});
  } else {
    std::vector<int> u(ids.size(), 1);
    while (true) {
      std::map<int, int> pat;
      for (size_t i = 0; i < ids.size(); ++i) pat[ids[i]] = u[i];
      all.push_back(std::move(pat));
      size_t k = ids.size();
      while (k > 0) {
        if (++u[k - 1] <= net.generator(ids[k - 1]).units_total) break;
        u[k - 1] = 1;
        --k;
      }
      if (k == 0) break;
    }
  }
  if (pattern_count > all.size())
    throw Error(format_str("sweep wants %zu patterns but only %zu distinct "
                           "commitment tuples exist",
                           pattern_count, all.size()));
  auto order = shuffled_indices(all.size(), seed);
  order.resize(pattern_count);
  std::sort(order.begin(), order.end());
  for (const size_t i : order) spec.patterns.push_back(all[i]);

  spec.cig_min_mw = 100.0;
  spec.cig_max_mw = 1000.0;
  spec.outage_gen = 5;
  return spec;
}

size_t sweep_size(const SweepSpec& spec) {
  return spec.loading_grid.size() * spec.patterns.size();
}

void validate_sweep(const NetworkModel& net, const SweepSpec& spec) {
  if (spec.loading_grid.empty()) throw Error("sweep has an empty loading grid");
  if (spec.patterns.empty()) throw Error("sweep has no commitment patterns");
  for (const double l : spec.loading_grid)
    if (!(l > 0.0)) throw Error(format_str("sweep loading %g is not positive", l));
  net.generator(spec.outage_gen);  // throws on an unknown outage plant
  for (size_t p = 0; p < spec.patterns.size(); ++p) {
    for (const auto& [id, u] : spec.patterns[p]) {
      if (!net.is_displaced(id))
        throw Error(format_str("pattern %zu sets plant %d, which is not displaced",
                               p, id));
      const auto& g = net.generator(id);
      if (u < 0 || u > g.units_total)
        throw Error(format_str("pattern %zu wants %d units at plant %d of %d", p,
                               u, id, g.units_total));
    }
    if (spec.cig_min_mw != 0.0 || spec.cig_max_mw != 0.0) {
      const double cap = pattern_cig_mw(net, spec.patterns[p]);
      if (cap < spec.cig_min_mw - 1e-9 || cap > spec.cig_max_mw + 1e-9)
        throw Error(format_str(
            "pattern %zu converter capacity %.1f MW leaves the [%g, %g] envelope",
            p, cap, spec.cig_min_mw, spec.cig_max_mw));
    }
  }
}

std::vector<std::string> feature_names(const NetworkModel& net) {
  std::vector<std::string> cols = {"loading", "cig_mw"};
  for (const auto& g : net.generators) cols.push_back(format_str("d_sg%d", g.id));
  for (const auto& g : net.generators) cols.push_back(format_str("o_sg%d", g.id));
  return cols;
}

std::vector<std::string> bus_target_names(const NetworkModel& net) {
  std::vector<std::string> cols;
  for (const int b : net.monitored_buses) cols.push_back(format_str("rocof_b%d", b));
  for (const int b : net.monitored_buses) cols.push_back(format_str("nadir_b%d", b));
  return cols;
}

std::vector<std::string> machine_target_names(const NetworkModel& net) {
  std::vector<std::string> cols;
  for (const auto& g : net.generators) cols.push_back(format_str("prr_sg%d", g.id));
  for (const auto& g : net.generators) cols.push_back(format_str("tnad_sg%d", g.id));
  return cols;
}

std::vector<double> feature_vector(const NetworkModel& net,
                                   const OperatingCondition& oc) {
  std::vector<double> vals = {oc.loading, oc.cig_mw};
  for (const auto& g : net.generators) vals.push_back(oc.dispatch(g.id));
  for (const auto& g : net.generators)
    vals.push_back(effective_rating(g, oc.units(g.id)));
  return vals;
}

GenerationReport generate_dataset(const NetworkModel& net, const SweepSpec& spec) {
  validate_sweep(net, spec);
  GenerationReport rep;
  rep.requested = sweep_size(spec);

  std::vector<std::string> fcols = feature_names(net);
  std::vector<std::string> tcols = {"diverged"};
  for (const auto& c : bus_target_names(net)) tcols.push_back(c);
  for (const auto& c : machine_target_names(net)) tcols.push_back(c);
  for (const auto& g : net.generators) tcols.push_back(format_str("mask_sg%d", g.id));

  std::string ftext = "id", ttext = "id";
  for (const auto& c : fcols) {
    ftext += '\t';
    ftext += c;
  }
  for (const auto& c : tcols) {
    ttext += '\t';
    ttext += c;
  }
  ftext += '\n';
  ttext += '\n';

  ColumnRanges franges, tranges;
  const SimConfig cfg;
  for (const double loading : spec.loading_grid) {
    for (const auto& pattern : spec.patterns) {
      const std::string id = point_id(net, loading, pattern);
      std::map<int, int> units;
      for (const auto& g : net.generators) units[g.id] = g.units_total;
      for (const int did : net.displaced_ids)
        units[did] = pattern_units(net, pattern, did);
      OperatingCondition oc;
      try {
        oc = economic_dispatch(net, loading, units, pattern_cig_mw(net, pattern));
      } catch (const InfeasibleError&) {
        rep.infeasible_ids.push_back(id);
        continue;
      }
      oc.id = id;
      DisturbanceEvent ev;
      ev.target_gen = spec.outage_gen;
      const FrequencyOutcome out = simulate(net, oc, ev, cfg);

      std::vector<double> fvals = feature_vector(net, oc);

      std::vector<double> tvals = {out.diverged ? 1.0 : 0.0};
      for (const auto& b : out.buses) tvals.push_back(b.rocof);
      for (const auto& b : out.buses) tvals.push_back(b.nadir);
      for (const auto& gv : out.governors)
        tvals.push_back(gv.online ? gv.ramp_rate_prr : 0.0);
      for (const auto& gv : out.governors)
        tvals.push_back(gv.online ? gv.t_nadir : 0.0);
      for (const auto& gv : out.governors) tvals.push_back(gv.online ? 1.0 : 0.0);

      append_row(ftext, id, fvals);
      append_row(ttext, id, tvals);
      franges.absorb(fvals);
      tranges.absorb(tvals);
      ++rep.written;
      if (out.diverged) ++rep.diverged;
    }
  }

  ordered_json man;
  man["network"] = net.name;
  man["seed"] = spec.seed;
  man["outage_gen"] = spec.outage_gen;
  man["loading_levels"] = spec.loading_grid.size();
  man["patterns"] = spec.patterns.size();
  man["requested"] = rep.requested;
  man["written"] = rep.written;
  man["diverged"] = rep.diverged;
  man["infeasible_skipped"] = rep.infeasible_ids;
  man["cig_envelope_mw"] = {spec.cig_min_mw, spec.cig_max_mw};
  man["features"] = file_entry(spec.features_path, ftext, rep.written, fcols, franges);
  man["targets"] = file_entry(spec.targets_path, ttext, rep.written, tcols, tranges);
  rep.manifest_json = man.dump(2) + "\n";

  write_text_file(spec.features_path, ftext);
  write_text_file(spec.targets_path, ttext);
  write_text_file(spec.manifest_path, rep.manifest_json);
  return rep;
}

std::vector<SampleRow> load_dataset(const std::string& features_path,
                                    const std::string& targets_path) {
  const auto flines = table_lines(features_path);
  const auto tlines = table_lines(targets_path);
  if (flines.size() != tlines.size())
    throw IoError(format_str("%s has %zu rows but %s has %zu",
                             features_path.c_str(), flines.size() - 1,
                             targets_path.c_str(), tlines.size() - 1));

  const auto fhead = split_char(flines[0], '\t');
  const auto thead = split_char(tlines[0], '\t');
  if (fhead.empty() || fhead[0] != "id" || thead.empty() || thead[0] != "id")
    throw IoError("dataset tables must start with an id column");
  size_t n_bus = 0, n_mask = 0;
  for (const auto& c : thead) {
    if (c.rfind("rocof_", 0) == 0) ++n_bus;
    if (c.rfind("mask_", 0) == 0) ++n_mask;
  }
  if (thead.size() != 2 + 2 * n_bus + 3 * n_mask)
    throw IoError(format_str("%s header does not decompose into rocof/nadir/"
                             "ramp/time/mask blocks",
                             targets_path.c_str()));

  std::vector<SampleRow> rows;
  for (size_t r = 1; r < flines.size(); ++r) {
    const auto fv = split_char(flines[r], '\t');
    const auto tv = split_char(tlines[r], '\t');
    if (fv.size() != fhead.size() || tv.size() != thead.size())
      throw IoError(format_str("row %zu has a ragged column count", r));
    if (fv[0] != tv[0])
      throw IoError(format_str("row %zu ids disagree: %s vs %s", r, fv[0].c_str(),
                               tv[0].c_str()));
    SampleRow row;
    row.id = fv[0];
    for (size_t i = 1; i < fv.size(); ++i) row.features.push_back(parse_double(fv[i]));
    row.diverged = parse_double(tv[1]) != 0.0;
    size_t at = 2;
    for (size_t i = 0; i < 2 * n_bus; ++i)
      row.bus_targets.push_back(parse_double(tv[at++]));
    for (size_t i = 0; i < 2 * n_mask; ++i)
      row.machine_targets.push_back(parse_double(tv[at++]));
    for (size_t i = 0; i < n_mask; ++i)
      row.machine_mask.push_back(parse_double(tv[at++]) != 0.0 ? 1 : 0);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<SampleRow> trainable_rows(const std::vector<SampleRow>& rows) {
  std::vector<SampleRow> out;
  std::copy_if(rows.begin(), rows.end(), std::back_inserter(out),
               [](const SampleRow& r) { return !r.diverged; });
  return out;
}

std::pair<std::vector<SampleRow>, std::vector<SampleRow>> train_test_split(
    const std::vector<SampleRow>& rows, double fraction, uint64_t seed) {
  if (rows.empty()) throw Error("cannot split an empty dataset");
  if (!(fraction > 0.0) || !(fraction < 1.0))
    throw Error(format_str("split fraction %g is outside (0, 1)", fraction));
  const auto order = shuffled_indices(rows.size(), seed);
  const size_t n_train = static_cast<size_t>(rows.size() * fraction);
  std::pair<std::vector<SampleRow>, std::vector<SampleRow>> out;
  for (size_t i = 0; i < order.size(); ++i)
    (i < n_train ? out.first : out.second).push_back(rows[order[i]]);
  return out;
}

}  // namespace gridfreq
