#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridfreq/dataset.hpp"
#include "gridfreq/dynamics_sim.hpp"
#include "gridfreq/grid_model.hpp"
#include "gridfreq/ml.hpp"
#include "gridfreq/regulator.hpp"

namespace gridfreq {

// Dataset rows rearranged for the learners, one row per sample, columns in
// the shared layout from dataset.hpp. The mask matrix is 1.0 where a plant
// was online in that row and its governor columns carry real measurements.
Eigen::MatrixXd feature_matrix(const std::vector<SampleRow>& rows);
Eigen::MatrixXd bus_target_matrix(const std::vector<SampleRow>& rows);
Eigen::MatrixXd machine_target_matrix(const std::vector<SampleRow>& rows);
Eigen::MatrixXd machine_mask_matrix(const std::vector<SampleRow>& rows);

// Stock network width for both regressors.
std::vector<int> default_hidden();

// Fits the bus-metrics regressor (windowed rocof and nadir per monitored
// bus) or the governor-response regressor (ramp rate and time to nadir per
// plant) on already-filtered rows, stamping the column names into the
// bundle so inference can verify the layout. Diverged rows are rejected
// here rather than silently skipped; filter with trainable_rows() first.
RegressorBundle train_metrics_model(const NetworkModel& net,
                                    const std::vector<SampleRow>& rows,
                                    const std::vector<int>& hidden,
                                    const TrainConfig& cfg);
RegressorBundle train_governor_model(const NetworkModel& net,
                                     const std::vector<SampleRow>& rows,
                                     const std::vector<int>& hidden,
                                     const TrainConfig& cfg);

// Locational screening of one operating condition: the metrics model scores
// every monitored bus and each prediction is held against the limits. The
// boundary is closed, a bus exactly at a limit passes.
struct BusScreen {
  int bus;
  double rocof;  // most negative windowed slope, Hz/s
  double nadir;  // lowest excursion, Hz
  bool violated = false;
};

struct ScreenResult {
  std::vector<BusScreen> buses;  // monitored order
  std::vector<int> violating;    // bus ids of the flagged subset
  bool any = false;
};

ScreenResult stage1_screen(const RegressorBundle& metrics,
                           const NetworkModel& net,
                           const OperatingCondition& oc,
                           const FrequencyLimits& limits);

// Governor-response prediction for the plants that would actually respond:
// committed and not the outage target. Every plant gets an entry in fixture
// order; absent ones keep present = false and zeroed numbers.
struct GovernorPrediction {
  int gen_id;
  bool present = false;
  double ramp_rate_prr = 0.0;  // MW/s
  double t_nadir = 0.0;        // s
};

std::vector<GovernorPrediction> stage2_governor(const RegressorBundle& governor,
                                                const NetworkModel& net,
                                                const OperatingCondition& oc,
                                                int outage_gen);

struct PipelineOptions {
  bool revalidate_ml = true;  // re-screen the redispatch with the metrics model
  bool validate_sim = true;   // simulate the original and the redispatch
  // Regulation passes. The first pass follows the screening verdict; extra
  // passes fire only while the re-screen still flags a bus, so raising this
  // without revalidate_ml changes nothing.
  int max_passes = 1;
  // Cushion added to the nadir limit during screening and regulation, so
  // the redispatch aims above the real floor. Compliance is always judged
  // against the unpadded limits.
  double nadir_margin_hz = 0.0;
  FormulaVariant variant = FormulaVariant::consistent;
  SimConfig sim;  // integrator settings for validate_sim
};

// Everything observed about one operating condition on its way through the
// stages. Simulator fields are only meaningful when sim_checked is set, the
// regulation fields when regulated is set.
struct ConditionRecord {
  std::string oc_id;
  ScreenResult screen;  // stage 1 on the original condition
  bool violating = false;
  std::vector<GovernorPrediction> governors;  // stage 2, empty on early exit

  int passes = 0;
  bool regulated = false;
  RegulationOutcome regulation;  // last pass
  bool infeasible = false;       // regulation demanded more relief than exists
  std::string infeasible_reason;

  bool rescreened = false;
  ScreenResult rescreen;  // metrics model on the final redispatch
  bool rescreen_clean = false;

  bool sim_checked = false;
  std::vector<BusScreen> sim_before;  // simulator truth, original condition
  std::vector<BusScreen> sim_after;   // simulator truth, redispatch
  bool sim_violating_before = false;
  double sim_nadir_before = 0.0;  // worst monitored-bus nadir, Hz
  double sim_nadir_after = 0.0;
  double sim_rocof_before = 0.0;  // most negative windowed slope, Hz/s
  double sim_rocof_after = 0.0;
  bool sim_compliant = false;  // every bus of the redispatch inside the limits
};

// Screens, predicts governor response, regulates, and validates one
// condition. A clean screen exits after stage 1 with an otherwise empty
// record. InfeasibleError from the cap formula or the redispatch is folded
// into the record; structural errors (layout mismatch, missing plants)
// propagate.
ConditionRecord run_pipeline(const NetworkModel& net,
                             const OperatingCondition& oc,
                             const DisturbanceEvent& event,
                             const RegressorBundle& metrics,
                             const RegressorBundle& governor,
                             const FrequencyLimits& limits,
                             const PipelineOptions& options);

// Batch totals, all derivable from the records by summarize(). Compliance
// is reported per condition and per (condition, bus) pair since the two
// disagree whenever a redispatch fixes most but not all buses.
struct PipelineReport {
  std::vector<ConditionRecord> records;
  size_t total = 0;
  size_t screened_clean = 0;
  size_t violating = 0;
  size_t regulated = 0;
  size_t infeasible = 0;
  size_t rescreen_clean = 0;
  size_t sim_checked = 0;
  size_t sim_confirmed_violating = 0;  // simulator agrees the original violates
  size_t sim_compliant = 0;
  size_t bus_pairs_checked = 0;  // monitored buses over all sim-checked records
  size_t bus_pairs_compliant = 0;
  double oc_compliance_pct = 0.0;   // sim_compliant / sim_checked
  double bus_compliance_pct = 0.0;  // pair-level equivalent
};

PipelineReport summarize(std::vector<ConditionRecord> records);

PipelineReport run_batch(const NetworkModel& net,
                         const std::vector<OperatingCondition>& ocs,
                         const DisturbanceEvent& event,
                         const RegressorBundle& metrics,
                         const RegressorBundle& governor,
                         const FrequencyLimits& limits,
                         const PipelineOptions& options);

// Report artifacts: a tab-separated table with one row per record, and a
// human-readable summary block of the aggregate counts.
std::string report_table_tsv(const PipelineReport& rep);
std::string report_summary_text(const PipelineReport& rep);

// Held-out accuracy of the two regressors, one score per target column in
// layout order. Governor columns only count rows where that plant was live;
// a column with no live row keeps rmse 0 and rows 0 and is reported as
// unmeasured. Diverged rows are dropped before scoring.
struct ColumnScore {
  std::string name;
  double rmse = 0.0;
  size_t rows = 0;
};

struct EvaluationReport {
  std::vector<ColumnScore> bus_scores;      // rocof then nadir per bus
  std::vector<ColumnScore> machine_scores;  // ramp rate then t_nadir per plant
  size_t rows_scored = 0;
};

EvaluationReport evaluate_models(const RegressorBundle& metrics,
                                 const RegressorBundle& governor,
                                 const NetworkModel& net,
                                 const std::vector<SampleRow>& rows);

std::string evaluation_table_text(const EvaluationReport& rep);

}  // namespace gridfreq
