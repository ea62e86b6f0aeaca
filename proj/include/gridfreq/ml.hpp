#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace gridfreq {

// Everything in this header is row oriented: matrices carry one sample per
// row and one variable per column, matching the dataset tables. Layouts are
// transposed internally where the math wants columns.

// Per-column standardizer z = s * (x - mean) / stddev, population standard
// deviation, s defaulting to 1. Fitting needs at least two rows and spread
// in every column; constant columns must be stripped beforehand (see
// ColumnSelection), which also keeps the inverse exact for them.
struct Scaler {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
  Eigen::VectorXd scale;
};

Scaler fit_scaler(const Eigen::MatrixXd& rows);
Eigen::MatrixXd transform(const Scaler& sc, const Eigen::MatrixXd& rows);
Eigen::MatrixXd inverse_transform(const Scaler& sc, const Eigen::MatrixXd& rows);

// Split of a column layout into varying columns, which the model consumes,
// and constant columns, remembered with their value so full-width rows can
// be rebuilt around model output. A decommitted plant's all-zero target
// columns travel through here instead of poisoning the scaler.
struct ColumnSelection {
  int full_width = 0;
  std::vector<int> kept;          // indices into the full layout, ascending
  std::vector<double> constants;  // full width; authoritative where dropped
};

ColumnSelection select_varying_columns(const Eigen::MatrixXd& rows);
Eigen::MatrixXd restrict_columns(const ColumnSelection& sel,
                                 const Eigen::MatrixXd& rows);
Eigen::MatrixXd expand_columns(const ColumnSelection& sel,
                               const Eigen::MatrixXd& rows);

// Fully connected feed-forward network. w[v] has shape (width of layer v) x
// (width of layer v + 1) and acts as w^T a + b; hidden layers clip at zero,
// the output layer stays affine. An empty hidden list gives a plain affine
// model, which the tests lean on as a convex probe.
struct MLPParams {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;

  std::vector<int> layer_sizes() const;
  size_t parameter_count() const;
};

// Uniform initialization on +-sqrt(6 / (fan_in + fan_out)) per weight
// matrix, biases zero, fully determined by the seed.
MLPParams make_mlp(const std::vector<int>& sizes, uint64_t seed);

Eigen::VectorXd forward(const MLPParams& p, const Eigen::VectorXd& x);
Eigen::MatrixXd forward_batch(const MLPParams& p, const Eigen::MatrixXd& rows);

// Halved mean squared error over the batch plus an L2 penalty on the
// weights (biases exempt), together with its exact gradient. Exposed so
// tests can pit the backward pass against finite differences.
double loss_and_gradient(const MLPParams& p, const Eigen::MatrixXd& x_rows,
                         const Eigen::MatrixXd& y_rows, double l2_alpha,
                         MLPParams& grad);

struct TrainConfig {
  double learning_rate = 0.01;
  double l2_alpha = 0.001;
  int max_epochs = 2000;
  int batch_size = 32;
  uint64_t seed = 1;
  // Optional early stopping on a held-back slice of the training rows. Off
  // by default so the standard run is a fixed-epoch schedule.
  bool early_stop = false;
  int patience = 50;
  double validation_share = 0.1;
};

// A trained regressor with everything needed to map raw features to raw
// targets: column selections, scalers over the kept columns, the network,
// and enough metadata to audit the run.
struct RegressorBundle {
  ColumnSelection in_sel;
  ColumnSelection out_sel;
  Scaler in_scaler;
  Scaler out_scaler;
  MLPParams net;
  std::vector<std::string> target_names;  // full-width, may be empty
  std::vector<double> loss_curve;         // mean training loss per epoch
  uint64_t seed = 0;
  uint64_t config_digest = 0;
};

// Mini-batch gradient descent on standardized data, deterministic for a
// fixed config. Rows are reshuffled every epoch from the seed; zero epochs
// returns the initialization untouched; a non-finite loss aborts with the
// epoch index in the error.
RegressorBundle train(const Eigen::MatrixXd& x_rows,
                      const Eigen::MatrixXd& y_rows,
                      const std::vector<int>& hidden, const TrainConfig& cfg,
                      const std::vector<std::string>& target_names = {});

Eigen::VectorXd predict(const RegressorBundle& b, const Eigen::VectorXd& x);
Eigen::MatrixXd predict_batch(const RegressorBundle& b,
                              const Eigen::MatrixXd& rows);

// Root mean squared error per target column. Both matrices must agree in
// shape and hold at least one row.
Eigen::VectorXd rmse(const Eigen::MatrixXd& y, const Eigen::MatrixXd& y_hat);

// Scores from k disjoint held-out folds. fold_rmse holds one row per fold
// with that fold's per-target RMSE; a fold's score is the mean across
// targets, and mean/stddev aggregate the k scores (population stddev).
struct CVResult {
  std::vector<std::vector<size_t>> folds;  // held-out row indices per fold
  Eigen::MatrixXd fold_rmse;               // k x targets
  double mean_score = 0.0;
  double stddev_score = 0.0;
};

CVResult kfold_cv(const Eigen::MatrixXd& x_rows, const Eigen::MatrixXd& y_rows,
                  int k, const std::vector<int>& hidden,
                  const TrainConfig& cfg);

struct GridCandidate {
  std::vector<int> hidden;
  TrainConfig cfg;
};

// Exhaustive sweep over candidates, each scored by k-fold CV. Best is the
// lowest mean score; exact ties go to the smaller parameter count, then to
// grid order.
struct GridSearchResult {
  size_t best = 0;
  std::vector<double> mean_rmse;
  std::vector<double> stddev_rmse;
};

GridSearchResult grid_search(const Eigen::MatrixXd& x_rows,
                             const Eigen::MatrixXd& y_rows,
                             const std::vector<GridCandidate>& candidates,
                             int k);

// One self-describing text file per bundle; numbers survive a save/load
// cycle bit-exactly.
void save_bundle(const RegressorBundle& b, const std::string& path);
RegressorBundle load_bundle(const std::string& path);

}  // namespace gridfreq
