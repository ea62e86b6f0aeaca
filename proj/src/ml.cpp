#include "gridfreq/ml.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "gridfreq/common.hpp"

namespace gridfreq {
namespace {

using ordered_json = nlohmann::ordered_json;

void check_net(const MLPParams& p) {
  if (p.w.empty() || p.w.size() != p.b.size())
    throw Error("malformed network: weight and bias lists disagree");
  for (size_t v = 0; v < p.w.size(); ++v) {
    if (p.b[v].size() != p.w[v].cols())
      throw Error(format_str("malformed network: bias %zu has %ld entries for "
                             "%ld outputs",
                             v, static_cast<long>(p.b[v].size()),
                             static_cast<long>(p.w[v].cols())));
    if (v + 1 < p.w.size() && p.w[v + 1].rows() != p.w[v].cols())
      throw Error(format_str("malformed network: layer %zu ends at width %ld "
                             "but layer %zu starts at %ld",
                             v, static_cast<long>(p.w[v].cols()), v + 1,
                             static_cast<long>(p.w[v + 1].rows())));
  }
}

// Uniform double in [0, 1) from the top 53 bits of a mixed seed.
double unit_draw(uint64_t seed, uint64_t counter) {
  return static_cast<double>(mix_seed(seed, counter) >> 11) * 0x1.0p-53;
}

uint64_t config_digest(const TrainConfig& cfg, const std::vector<int>& hidden) {
  std::string s = format_str(
      "lr=%.17g l2=%.17g epochs=%d batch=%d seed=%llu early=%d patience=%d "
      "share=%.17g hidden=",
      cfg.learning_rate, cfg.l2_alpha, cfg.max_epochs, cfg.batch_size,
      static_cast<unsigned long long>(cfg.seed), cfg.early_stop ? 1 : 0,
      cfg.patience, cfg.validation_share);
  for (const int h : hidden) s += format_str("%d,", h);
  return fnv1a64(s);
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& src,
                            const std::vector<size_t>& which) {
  Eigen::MatrixXd out(static_cast<long>(which.size()), src.cols());
  for (size_t i = 0; i < which.size(); ++i)
    out.row(static_cast<long>(i)) = src.row(static_cast<long>(which[i]));
  return out;
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd from_std(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                           static_cast<long>(v.size()));
}

ordered_json selection_json(const ColumnSelection& s) {
  return ordered_json{{"full_width", s.full_width},
                      {"kept", s.kept},
                      {"constants", s.constants}};
}

ColumnSelection selection_from(const ordered_json& j) {
  ColumnSelection s;
  s.full_width = j.at("full_width").get<int>();
  s.kept = j.at("kept").get<std::vector<int>>();
  s.constants = j.at("constants").get<std::vector<double>>();
  if (s.constants.size() != static_cast<size_t>(s.full_width))
    throw IoError("bundle column selection is internally inconsistent");
  return s;
}

ordered_json scaler_json(const Scaler& sc) {
  return ordered_json{{"mean", to_std(sc.mean)},
                      {"stddev", to_std(sc.stddev)},
                      {"scale", to_std(sc.scale)}};
}

Scaler scaler_from(const ordered_json& j) {
  Scaler sc;
  sc.mean = from_std(j.at("mean").get<std::vector<double>>());
  sc.stddev = from_std(j.at("stddev").get<std::vector<double>>());
  sc.scale = from_std(j.at("scale").get<std::vector<double>>());
  if (sc.stddev.size() != sc.mean.size() || sc.scale.size() != sc.mean.size())
    throw IoError("bundle scaler tables disagree in length");
  return sc;
}

}  // namespace

Scaler fit_scaler(const Eigen::MatrixXd& rows) {
  if (rows.rows() < 2)
    throw Error(format_str("scaler fit needs at least 2 rows, got %ld",
                           static_cast<long>(rows.rows())));
  Scaler sc;
  sc.mean = rows.colwise().mean().transpose();
  const Eigen::MatrixXd centered = rows.rowwise() - sc.mean.transpose();
  sc.stddev = (centered.array().square().colwise().sum() /
               static_cast<double>(rows.rows()))
                  .sqrt()
                  .matrix()
                  .transpose();
  for (long c = 0; c < sc.stddev.size(); ++c)
    if (!(sc.stddev(c) > 0.0))
      throw Error(format_str("scaler fit: column %ld has zero variance", c));
  sc.scale = Eigen::VectorXd::Ones(rows.cols());
  return sc;
}

Eigen::MatrixXd transform(const Scaler& sc, const Eigen::MatrixXd& rows) {
  if (rows.cols() != sc.mean.size())
    throw Error(format_str("scaler spans %ld columns, data has %ld",
                           static_cast<long>(sc.mean.size()),
                           static_cast<long>(rows.cols())));
  Eigen::MatrixXd z(rows.rows(), rows.cols());
  for (long c = 0; c < rows.cols(); ++c)
    z.col(c) = sc.scale(c) * (rows.col(c).array() - sc.mean(c)) / sc.stddev(c);
  return z;
}

Eigen::MatrixXd inverse_transform(const Scaler& sc, const Eigen::MatrixXd& rows) {
  if (rows.cols() != sc.mean.size())
    throw Error(format_str("scaler spans %ld columns, data has %ld",
                           static_cast<long>(sc.mean.size()),
                           static_cast<long>(rows.cols())));
  Eigen::MatrixXd x(rows.rows(), rows.cols());
  for (long c = 0; c < rows.cols(); ++c)
    x.col(c) = rows.col(c).array() * sc.stddev(c) / sc.scale(c) + sc.mean(c);
  return x;
}

ColumnSelection select_varying_columns(const Eigen::MatrixXd& rows) {
  if (rows.rows() < 1) throw Error("cannot select columns of an empty table");
  ColumnSelection sel;
  sel.full_width = static_cast<int>(rows.cols());
  sel.constants.resize(rows.cols());
  for (long c = 0; c < rows.cols(); ++c) {
    sel.constants[c] = rows(0, c);
    if (rows.col(c).maxCoeff() > rows.col(c).minCoeff())
      sel.kept.push_back(static_cast<int>(c));
  }
  return sel;
}

Eigen::MatrixXd restrict_columns(const ColumnSelection& sel,
                                 const Eigen::MatrixXd& rows) {
  if (rows.cols() != sel.full_width)
    throw Error(format_str("selection spans %d columns, data has %ld",
                           sel.full_width, static_cast<long>(rows.cols())));
  Eigen::MatrixXd out(rows.rows(), static_cast<long>(sel.kept.size()));
  for (size_t i = 0; i < sel.kept.size(); ++i)
    out.col(static_cast<long>(i)) = rows.col(sel.kept[i]);
  return out;
}

Eigen::MatrixXd expand_columns(const ColumnSelection& sel,
                               const Eigen::MatrixXd& rows) {
  if (rows.cols() != static_cast<long>(sel.kept.size()))
    throw Error(format_str("selection kept %zu columns, data has %ld",
                           sel.kept.size(), static_cast<long>(rows.cols())));
  Eigen::MatrixXd out(rows.rows(), sel.full_width);
  for (int c = 0; c < sel.full_width; ++c)
    out.col(c).setConstant(sel.constants[c]);
  for (size_t i = 0; i < sel.kept.size(); ++i)
    out.col(sel.kept[i]) = rows.col(static_cast<long>(i));
  return out;
}

std::vector<int> MLPParams::layer_sizes() const {
  std::vector<int> sizes;
  if (w.empty()) return sizes;
  sizes.push_back(static_cast<int>(w.front().rows()));
  for (const auto& m : w) sizes.push_back(static_cast<int>(m.cols()));
  return sizes;
}

size_t MLPParams::parameter_count() const {
  size_t total = 0;
  for (const auto& m : w) total += static_cast<size_t>(m.size());
  for (const auto& v : b) total += static_cast<size_t>(v.size());
  return total;
}

MLPParams make_mlp(const std::vector<int>& sizes, uint64_t seed) {
  if (sizes.size() < 2)
    throw Error("a network needs an input and an output layer");
  for (const int s : sizes)
    if (s < 1) throw Error("layer widths must be at least 1");
  MLPParams p;
  uint64_t counter = 0;
  for (size_t v = 0; v + 1 < sizes.size(); ++v) {
    const double limit = std::sqrt(6.0 / (sizes[v] + sizes[v + 1]));
    Eigen::MatrixXd w(sizes[v], sizes[v + 1]);
    for (long r = 0; r < w.rows(); ++r)
      for (long c = 0; c < w.cols(); ++c)
        w(r, c) = (2.0 * unit_draw(seed, counter++) - 1.0) * limit;
    p.w.push_back(std::move(w));
    p.b.push_back(Eigen::VectorXd::Zero(sizes[v + 1]));
  }
  return p;
}

Eigen::VectorXd forward(const MLPParams& p, const Eigen::VectorXd& x) {
  check_net(p);
  if (x.size() != p.w.front().rows())
    throw Error(format_str("network takes %ld inputs, got %ld",
                           static_cast<long>(p.w.front().rows()),
                           static_cast<long>(x.size())));
  Eigen::VectorXd a = x;
  for (size_t v = 0; v < p.w.size(); ++v) {
    a = p.w[v].transpose() * a + p.b[v];
    if (v + 1 < p.w.size()) a = a.cwiseMax(0.0);
  }
  return a;
}

Eigen::MatrixXd forward_batch(const MLPParams& p, const Eigen::MatrixXd& rows) {
  check_net(p);
  if (rows.cols() != p.w.front().rows())
    throw Error(format_str("network takes %ld inputs, got %ld",
                           static_cast<long>(p.w.front().rows()),
                           static_cast<long>(rows.cols())));
  Eigen::MatrixXd a = rows.transpose();
  for (size_t v = 0; v < p.w.size(); ++v) {
    a = (p.w[v].transpose() * a).colwise() + p.b[v];
    if (v + 1 < p.w.size()) a = a.cwiseMax(0.0);
  }
  return a.transpose();
}

double loss_and_gradient(const MLPParams& p, const Eigen::MatrixXd& x_rows,
                         const Eigen::MatrixXd& y_rows, double l2_alpha,
                         MLPParams& grad) {
  check_net(p);
  const long bsz = x_rows.rows();
  if (bsz < 1) throw Error("loss needs at least one sample");
  if (y_rows.rows() != bsz)
    throw Error("feature and target batches differ in length");
  if (x_rows.cols() != p.w.front().rows() ||
      y_rows.cols() != p.w.back().cols())
    throw Error("batch width does not match the network");

  const size_t depth = p.w.size();
  std::vector<Eigen::MatrixXd> act(depth + 1);
  act[0] = x_rows.transpose();
  for (size_t v = 0; v < depth; ++v) {
    act[v + 1] = (p.w[v].transpose() * act[v]).colwise() + p.b[v];
    if (v + 1 < depth) act[v + 1] = act[v + 1].cwiseMax(0.0);
  }

  const Eigen::MatrixXd err = act[depth] - y_rows.transpose();
  double loss = 0.5 * err.squaredNorm() / static_cast<double>(bsz);
  for (const auto& w : p.w) loss += 0.5 * l2_alpha * w.squaredNorm();

  grad.w.resize(depth);
  grad.b.resize(depth);
  Eigen::MatrixXd delta = err / static_cast<double>(bsz);
  for (size_t v = depth; v-- > 0;) {
    grad.w[v] = act[v] * delta.transpose() + l2_alpha * p.w[v];
    grad.b[v] = delta.rowwise().sum();
    if (v > 0) {
      // Gate on the stored post-activation: positive means the unit was live.
      const Eigen::MatrixXd back = p.w[v] * delta;
      delta = ((act[v].array() > 0.0).cast<double>() * back.array()).matrix();
    }
  }
  return loss;
}

RegressorBundle train(const Eigen::MatrixXd& x_rows,
                      const Eigen::MatrixXd& y_rows,
                      const std::vector<int>& hidden, const TrainConfig& cfg,
                      const std::vector<std::string>& target_names) {
  if (x_rows.rows() != y_rows.rows())
    throw Error(format_str("feature rows (%ld) and target rows (%ld) disagree",
                           static_cast<long>(x_rows.rows()),
                           static_cast<long>(y_rows.rows())));
  if (x_rows.rows() < 2)
    throw Error("training needs at least two rows to standardize");
  if (!(cfg.learning_rate > 0.0)) throw Error("learning rate must be positive");
  if (cfg.l2_alpha < 0.0) throw Error("the L2 penalty cannot be negative");
  if (cfg.max_epochs < 0) throw Error("the epoch count cannot be negative");
  if (cfg.batch_size < 1) throw Error("batch size must be at least 1");
  for (const int h : hidden)
    if (h < 1) throw Error("hidden layer widths must be at least 1");
  if (!target_names.empty() &&
      static_cast<long>(target_names.size()) != y_rows.cols())
    throw Error(format_str("%zu target names for %ld target columns",
                           target_names.size(),
                           static_cast<long>(y_rows.cols())));

  RegressorBundle bundle;
  bundle.in_sel = select_varying_columns(x_rows);
  bundle.out_sel = select_varying_columns(y_rows);
  if (bundle.in_sel.kept.empty())
    throw Error("no feature column varies; nothing to learn from");
  if (bundle.out_sel.kept.empty())
    throw Error("every target column is constant; nothing to regress");

  const Eigen::MatrixXd xr = restrict_columns(bundle.in_sel, x_rows);
  const Eigen::MatrixXd yr = restrict_columns(bundle.out_sel, y_rows);
  bundle.in_scaler = fit_scaler(xr);
  bundle.out_scaler = fit_scaler(yr);
  const Eigen::MatrixXd xs = transform(bundle.in_scaler, xr);
  const Eigen::MatrixXd ys = transform(bundle.out_scaler, yr);

  std::vector<int> sizes;
  sizes.push_back(static_cast<int>(bundle.in_sel.kept.size()));
  for (const int h : hidden) sizes.push_back(h);
  sizes.push_back(static_cast<int>(bundle.out_sel.kept.size()));
  bundle.net = make_mlp(sizes, mix_seed(cfg.seed, 0x1417));

  // With early stopping on, a slice of the rows sits out of the gradient
  // batches and only referees; scalers still see every row.
  std::vector<size_t> fit_rows(static_cast<size_t>(xs.rows()));
  for (size_t i = 0; i < fit_rows.size(); ++i) fit_rows[i] = i;
  Eigen::MatrixXd xv, yv;
  if (cfg.early_stop) {
    if (cfg.patience < 1) throw Error("patience must be at least 1 epoch");
    if (!(cfg.validation_share > 0.0) || !(cfg.validation_share < 1.0))
      throw Error("validation share must sit strictly inside (0, 1)");
    const auto order =
        shuffled_indices(fit_rows.size(), mix_seed(cfg.seed, 0xE5));
    const size_t nval = std::max<size_t>(
        1, static_cast<size_t>(
               std::ceil(cfg.validation_share *
                         static_cast<double>(fit_rows.size()))));
    if (nval >= fit_rows.size())
      throw Error("validation slice leaves no training rows");
    std::vector<size_t> vrows(order.end() - static_cast<long>(nval),
                              order.end());
    fit_rows.assign(order.begin(), order.end() - static_cast<long>(nval));
    xv = gather_rows(xs, vrows);
    yv = gather_rows(ys, vrows);
  }
  const Eigen::MatrixXd xt = gather_rows(xs, fit_rows);
  const Eigen::MatrixXd yt = gather_rows(ys, fit_rows);
  const long ntr = xt.rows();

  MLPParams grad;
  MLPParams best_net;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto order = shuffled_indices(
        static_cast<size_t>(ntr),
        mix_seed(cfg.seed, 1000 + static_cast<uint64_t>(epoch)));
    double epoch_loss = 0.0;
    for (long start = 0; start < ntr; start += cfg.batch_size) {
      const long bsz = std::min<long>(cfg.batch_size, ntr - start);
      Eigen::MatrixXd bx(bsz, xt.cols());
      Eigen::MatrixXd by(bsz, yt.cols());
      for (long i = 0; i < bsz; ++i) {
        const long r = static_cast<long>(order[static_cast<size_t>(start + i)]);
        bx.row(i) = xt.row(r);
        by.row(i) = yt.row(r);
      }
      const double l = loss_and_gradient(bundle.net, bx, by, cfg.l2_alpha, grad);
      for (size_t v = 0; v < bundle.net.w.size(); ++v) {
        bundle.net.w[v] -= cfg.learning_rate * grad.w[v];
        bundle.net.b[v] -= cfg.learning_rate * grad.b[v];
      }
      // Weighted so the epoch entry is the per-sample mean and the penalty
      // term contributes exactly once.
      epoch_loss += l * static_cast<double>(bsz) / static_cast<double>(ntr);
    }
    if (!std::isfinite(epoch_loss))
      throw Error(format_str("training diverged at epoch %d", epoch));
    bundle.loss_curve.push_back(epoch_loss);

    if (cfg.early_stop) {
      const Eigen::MatrixXd pv = forward_batch(bundle.net, xv);
      const double vloss =
          0.5 * (pv - yv).squaredNorm() / static_cast<double>(xv.rows());
      if (vloss < best_val) {
        best_val = vloss;
        best_net = bundle.net;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
  }
  if (cfg.early_stop && std::isfinite(best_val)) bundle.net = best_net;

  bundle.target_names = target_names;
  bundle.seed = cfg.seed;
  bundle.config_digest = config_digest(cfg, hidden);
  return bundle;
}

Eigen::MatrixXd predict_batch(const RegressorBundle& b,
                              const Eigen::MatrixXd& rows) {
  const Eigen::MatrixXd xs = transform(b.in_scaler, restrict_columns(b.in_sel, rows));
  const Eigen::MatrixXd zs = forward_batch(b.net, xs);
  return expand_columns(b.out_sel, inverse_transform(b.out_scaler, zs));
}

Eigen::VectorXd predict(const RegressorBundle& b, const Eigen::VectorXd& x) {
  return predict_batch(b, x.transpose()).row(0).transpose();
}

Eigen::VectorXd rmse(const Eigen::MatrixXd& y, const Eigen::MatrixXd& y_hat) {
  if (y.rows() < 1) throw Error("RMSE of an empty set");
  if (y.rows() != y_hat.rows() || y.cols() != y_hat.cols())
    throw Error(format_str("RMSE shapes disagree: %ldx%ld vs %ldx%ld",
                           static_cast<long>(y.rows()),
                           static_cast<long>(y.cols()),
                           static_cast<long>(y_hat.rows()),
                           static_cast<long>(y_hat.cols())));
  return ((y - y_hat).array().square().colwise().sum() /
          static_cast<double>(y.rows()))
      .sqrt()
      .matrix()
      .transpose();
}

CVResult kfold_cv(const Eigen::MatrixXd& x_rows, const Eigen::MatrixXd& y_rows,
                  int k, const std::vector<int>& hidden,
                  const TrainConfig& cfg) {
  const long n = x_rows.rows();
  if (y_rows.rows() != n)
    throw Error("feature and target tables differ in length");
  if (k < 2) throw Error("cross-validation needs at least 2 folds");
  if (static_cast<long>(k) > n)
    throw Error(format_str("%d folds but only %ld rows", k, n));

  const auto order =
      shuffled_indices(static_cast<size_t>(n), mix_seed(cfg.seed, 0xCF));
  CVResult res;
  res.folds.resize(static_cast<size_t>(k));
  size_t at = 0;
  for (int j = 0; j < k; ++j) {
    // The first n mod k folds absorb the remainder.
    const size_t len = static_cast<size_t>(n / k) +
                       (j < static_cast<int>(n % k) ? 1 : 0);
    res.folds[static_cast<size_t>(j)].assign(
        order.begin() + static_cast<long>(at),
        order.begin() + static_cast<long>(at + len));
    at += len;
  }

  res.fold_rmse.resize(k, y_rows.cols());
  Eigen::VectorXd scores(k);
  for (int j = 0; j < k; ++j) {
    std::vector<size_t> rest;
    rest.reserve(static_cast<size_t>(n) - res.folds[j].size());
    for (int o = 0; o < k; ++o)
      if (o != j)
        rest.insert(rest.end(), res.folds[o].begin(), res.folds[o].end());
    TrainConfig sub = cfg;
    sub.seed = mix_seed(cfg.seed, 0xBEEF + static_cast<uint64_t>(j));
    const RegressorBundle m =
        train(gather_rows(x_rows, rest), gather_rows(y_rows, rest), hidden, sub);
    const Eigen::VectorXd e = rmse(gather_rows(y_rows, res.folds[j]),
                                   predict_batch(m, gather_rows(x_rows, res.folds[j])));
    res.fold_rmse.row(j) = e.transpose();
    scores(j) = e.mean();
  }
  res.mean_score = scores.mean();
  res.stddev_score = std::sqrt(
      (scores.array() - res.mean_score).square().sum() / static_cast<double>(k));
  return res;
}

GridSearchResult grid_search(const Eigen::MatrixXd& x_rows,
                             const Eigen::MatrixXd& y_rows,
                             const std::vector<GridCandidate>& candidates,
                             int k) {
  if (candidates.empty()) throw Error("empty hyperparameter grid");
  const size_t in_width = select_varying_columns(x_rows).kept.size();
  const size_t out_width = select_varying_columns(y_rows).kept.size();
  const auto weight_count = [&](const std::vector<int>& hidden) {
    std::vector<size_t> sizes{in_width};
    for (const int h : hidden) sizes.push_back(static_cast<size_t>(h));
    sizes.push_back(out_width);
    size_t total = 0;
    for (size_t i = 0; i + 1 < sizes.size(); ++i)
      total += sizes[i] * sizes[i + 1] + sizes[i + 1];
    return total;
  };

  GridSearchResult res;
  double best_mean = std::numeric_limits<double>::infinity();
  size_t best_params = std::numeric_limits<size_t>::max();
  for (size_t i = 0; i < candidates.size(); ++i) {
    const CVResult cv =
        kfold_cv(x_rows, y_rows, k, candidates[i].hidden, candidates[i].cfg);
    res.mean_rmse.push_back(cv.mean_score);
    res.stddev_rmse.push_back(cv.stddev_score);
    const size_t np = weight_count(candidates[i].hidden);
    if (cv.mean_score < best_mean ||
        (cv.mean_score == best_mean && np < best_params)) {
      res.best = i;
      best_mean = cv.mean_score;
      best_params = np;
    }
  }
  return res;
}

void save_bundle(const RegressorBundle& b, const std::string& path) {
  check_net(b.net);
  ordered_json j;
  j["kind"] = "gridfreq-regressor";
  j["format"] = 1;
  j["layers"] = b.net.layer_sizes();
  ordered_json weights = ordered_json::array();
  ordered_json biases = ordered_json::array();
  for (size_t v = 0; v < b.net.w.size(); ++v) {
    // Row major, one flat table per layer.
    std::vector<double> flat;
    flat.reserve(static_cast<size_t>(b.net.w[v].size()));
    for (long r = 0; r < b.net.w[v].rows(); ++r)
      for (long c = 0; c < b.net.w[v].cols(); ++c)
        flat.push_back(b.net.w[v](r, c));
    weights.push_back(flat);
    biases.push_back(to_std(b.net.b[v]));
  }
  j["weights"] = std::move(weights);
  j["biases"] = std::move(biases);
  j["in_selection"] = selection_json(b.in_sel);
  j["out_selection"] = selection_json(b.out_sel);
  j["in_scaler"] = scaler_json(b.in_scaler);
  j["out_scaler"] = scaler_json(b.out_scaler);
  j["target_names"] = b.target_names;
  j["loss_curve"] = b.loss_curve;
  j["seed"] = format_str("%016llx", static_cast<unsigned long long>(b.seed));
  j["config_digest"] =
      format_str("%016llx", static_cast<unsigned long long>(b.config_digest));
  write_text_file(path, j.dump(1) + "\n");
}

RegressorBundle load_bundle(const std::string& path) {
  ordered_json j;
  try {
    j = ordered_json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(format_str("bundle %s is not valid JSON: %s", path.c_str(),
                             e.what()));
  }
  try {
    if (j.at("kind").get<std::string>() != "gridfreq-regressor")
      throw IoError(format_str("%s is not a regressor bundle", path.c_str()));
    RegressorBundle b;
    const auto sizes = j.at("layers").get<std::vector<int>>();
    const auto weights = j.at("weights");
    const auto biases = j.at("biases");
    if (sizes.size() < 2 || weights.size() + 1 != sizes.size() ||
        biases.size() != weights.size())
      throw IoError(format_str("bundle %s has a malformed layer table",
                               path.c_str()));
    for (size_t v = 0; v + 1 < sizes.size(); ++v) {
      const auto flat = weights[v].get<std::vector<double>>();
      const long rows = sizes[v], cols = sizes[v + 1];
      if (static_cast<long>(flat.size()) != rows * cols)
        throw IoError(format_str("bundle %s: layer %zu carries %zu weights "
                                 "for a %ldx%ld matrix",
                                 path.c_str(), v, flat.size(), rows, cols));
      Eigen::MatrixXd w(rows, cols);
      for (long r = 0; r < rows; ++r)
        for (long c = 0; c < cols; ++c)
          w(r, c) = flat[static_cast<size_t>(r * cols + c)];
      b.net.w.push_back(std::move(w));
      const auto bias = biases[v].get<std::vector<double>>();
      if (static_cast<long>(bias.size()) != cols)
        throw IoError(format_str("bundle %s: bias %zu has the wrong length",
                                 path.c_str(), v));
      b.net.b.push_back(from_std(bias));
    }
    b.in_sel = selection_from(j.at("in_selection"));
    b.out_sel = selection_from(j.at("out_selection"));
    b.in_scaler = scaler_from(j.at("in_scaler"));
    b.out_scaler = scaler_from(j.at("out_scaler"));
    b.target_names = j.at("target_names").get<std::vector<std::string>>();
    b.loss_curve = j.at("loss_curve").get<std::vector<double>>();
    b.seed = std::stoull(j.at("seed").get<std::string>(), nullptr, 16);
    b.config_digest =
        std::stoull(j.at("config_digest").get<std::string>(), nullptr, 16);
    check_net(b.net);
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(format_str("bundle %s is missing fields: %s", path.c_str(),
                             e.what()));
  }
}

}  // namespace gridfreq
