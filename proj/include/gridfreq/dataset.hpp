#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gridfreq/grid_model.hpp"

namespace gridfreq {

// One sweep over loading levels and displaced-plant commitment patterns,
// simulating the same outage at every grid point. The pattern list is
// explicit so a spec object alone pins down every operating condition; a
// pattern may omit a displaced plant, which then stays at full commitment.
struct SweepSpec {
  std::vector<double> loading_grid;          // per-unit scale on base load
  std::vector<std::map<int, int>> patterns;  // units online per displaced plant
  // Admissible converter-capacity envelope, checked per pattern. Both zero
  // disables the check.
  double cig_min_mw = 0.0;
  double cig_max_mw = 0.0;
  int outage_gen = 5;
  uint64_t seed = 42;  // pattern-sampling stream, recorded in the manifest
  std::string features_path = "features.tsv";
  std::string targets_path = "targets.tsv";
  std::string manifest_path = "manifest.json";
};

// Stock sweep for a fixture with displaced plants: loadings 0.6 to 1.025 in
// 0.025 steps and `pattern_count` distinct commitment tuples (one to all
// units per displaced plant), drawn without replacement from the full
// enumeration with `seed` and kept in lexicographic order. Converter
// envelope 100 to 1000 MW, outage at plant 5. With four displaced plants of
// four units the defaults give 18 x 122 = 2196 operating conditions.
SweepSpec default_sweep(const NetworkModel& net, uint64_t seed = 42,
                        size_t pattern_count = 122);

// Grid points before any infeasible skipping.
size_t sweep_size(const SweepSpec& spec);

// Structural checks: nonempty grids, positive loadings, a known outage
// plant, pattern keys displaced with levels inside each plant's unit count,
// and the converter envelope. Throws Error; generation runs this first.
void validate_sweep(const NetworkModel& net, const SweepSpec& spec);

// Column layouts shared by generation, training and screening. Regressors
// carry these names in their bundles, and the screening stages refuse a
// bundle whose layout does not match the network at hand.
std::vector<std::string> feature_names(const NetworkModel& net);
std::vector<std::string> bus_target_names(const NetworkModel& net);
std::vector<std::string> machine_target_names(const NetworkModel& net);

// Flattens one operating condition into the feature layout: loading,
// converter output MW, dispatch MW per plant in fixture order, then
// effective rating MVA of the same plants. Generation writes exactly this
// vector, so a model trained on the tables can score a live condition.
std::vector<double> feature_vector(const NetworkModel& net,
                                   const OperatingCondition& oc);

// One simulated operating condition flattened for the learners.
//
// features: loading, converter output MW, then dispatch MW of every plant
// in fixture order, then effective rating MVA of the same plants (a plant's
// commitment is recoverable from its rating column).
// bus_targets: windowed rocof Hz/s of every monitored bus in fixture order,
// then nadir Hz of the same buses.
// machine_targets: governor ramp rate MW/s of every plant in fixture order,
// then time to each plant's own bus nadir in s. Entries are zero wherever
// machine_mask is 0, which marks plants that are offline or the outaged one.
struct SampleRow {
  std::string id;
  std::vector<double> features;
  std::vector<double> bus_targets;
  std::vector<double> machine_targets;
  std::vector<int> machine_mask;
  bool diverged = false;
};

struct GenerationReport {
  size_t requested = 0;  // sweep_size of the spec, fixed before the run
  size_t written = 0;
  size_t diverged = 0;                      // written rows carrying the flag
  std::vector<std::string> infeasible_ids;  // dispatch rejections, skipped
  std::string manifest_json;  // exact text written to the manifest file
};

// Runs the sweep and writes the three artifacts. Feature and target tables
// are tab-separated with a header row, doubles at full round-trip precision,
// one row per simulated condition in sweep order (loading outer, pattern
// inner). Infeasible dispatch points are skipped and listed in the manifest;
// diverged simulations keep their row with the flag set. The manifest also
// records seed, counts, per-column value ranges and a content hash of both
// tables, so a rerun with the same spec is verifiably identical.
GenerationReport generate_dataset(const NetworkModel& net, const SweepSpec& spec);

// Reads a table pair back. Column layout is taken from the headers; feature
// and target rows must agree on ids line by line. Throws IoError on
// structural problems.
std::vector<SampleRow> load_dataset(const std::string& features_path,
                                    const std::string& targets_path);

// Rows safe to train on: everything not flagged diverged.
std::vector<SampleRow> trainable_rows(const std::vector<SampleRow>& rows);

// Seeded shuffle split into floor(n * fraction) training rows and the
// remainder, disjoint with union equal to the input, both sides in shuffle
// order. Throws Error on an empty input or a fraction outside (0, 1).
std::pair<std::vector<SampleRow>, std::vector<SampleRow>> train_test_split(
    const std::vector<SampleRow>& rows, double fraction, uint64_t seed);

}  // namespace gridfreq
