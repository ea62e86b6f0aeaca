#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "gridfreq/common.hpp"
#include "gridfreq/ml.hpp"

using namespace gridfreq;
namespace fs = std::filesystem;

namespace {

double udraw(uint64_t seed, uint64_t k) {
  return static_cast<double>(mix_seed(seed, k) >> 11) * 0x1.0p-53;
}

Eigen::MatrixXd random_matrix(long rows, long cols, uint64_t seed) {
  Eigen::MatrixXd m(rows, cols);
  uint64_t k = 0;
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) m(r, c) = 2.0 * udraw(seed, k++) - 1.0;
  return m;
}

bool nets_equal(const MLPParams& a, const MLPParams& b) {
  if (a.w.size() != b.w.size() || a.b.size() != b.b.size()) return false;
  for (size_t v = 0; v < a.w.size(); ++v) {
    if (a.w[v].rows() != b.w[v].rows() || a.w[v].cols() != b.w[v].cols())
      return false;
    if (!(a.w[v].array() == b.w[v].array()).all()) return false;
    if (a.b[v].size() != b.b[v].size()) return false;
    if (!(a.b[v].array() == b.b[v].array()).all()) return false;
  }
  return true;
}

// A 100-point line y = 2x on [-1, 1], the bread and butter regression probe.
void line_data(Eigen::MatrixXd& x, Eigen::MatrixXd& y) {
  x.resize(100, 1);
  y.resize(100, 1);
  for (int i = 0; i < 100; ++i) {
    x(i, 0) = -1.0 + 2.0 * i / 99.0;
    y(i, 0) = 2.0 * x(i, 0);
  }
}

// Worst relative disagreement between the analytic gradient and a central
// difference, probing every weight and bias in turn.
double fd_max_rel_err(const MLPParams& p, const Eigen::MatrixXd& x,
                      const Eigen::MatrixXd& y, double alpha) {
  MLPParams grad;
  loss_and_gradient(p, x, y, alpha, grad);
  const double eps = 1e-6;
  double worst = 0.0;
  MLPParams probe = p;
  MLPParams scratch;
  const auto touch = [&](double* slot, double analytic) {
    const double saved = *slot;
    *slot = saved + eps;
    const double up = loss_and_gradient(probe, x, y, alpha, scratch);
    *slot = saved - eps;
    const double dn = loss_and_gradient(probe, x, y, alpha, scratch);
    *slot = saved;
    const double fd = (up - dn) / (2.0 * eps);
    const double rel = std::abs(fd - analytic) /
                       std::max({1.0, std::abs(fd), std::abs(analytic)});
    worst = std::max(worst, rel);
  };
  for (size_t v = 0; v < probe.w.size(); ++v) {
    for (long i = 0; i < probe.w[v].size(); ++i)
      touch(probe.w[v].data() + i, grad.w[v](i));
    for (long i = 0; i < probe.b[v].size(); ++i)
      touch(probe.b[v].data() + i, grad.b[v](i));
  }
  return worst;
}

std::string scratch_file(const char* name) {
  const fs::path dir = fs::temp_directory_path() / "gridfreq_ml_tests";
  fs::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST_CASE("standardizer centers and scales by population statistics") {
  Eigen::MatrixXd m(2, 2);
  m << 1.0, 10.0, 3.0, 30.0;
  const Scaler sc = fit_scaler(m);
  // Population statistics: the two-point column {1, 3} has mean 2 and
  // standard deviation exactly 1, not the sample value sqrt(2).
  CHECK(sc.mean(0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(sc.stddev(0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(sc.mean(1) == doctest::Approx(20.0).epsilon(1e-14));
  CHECK(sc.stddev(1) == doctest::Approx(10.0).epsilon(1e-14));
  CHECK(sc.scale(0) == 1.0);
  CHECK(sc.scale(1) == 1.0);

  SUBCASE("transform of the fit data is centered with unit spread") {
    const Eigen::MatrixXd big = random_matrix(400, 3, 11);
    Scaler s = fit_scaler(big);
    s.scale(2) = 0.5;
    const Eigen::MatrixXd z = transform(s, big);
    for (long c = 0; c < z.cols(); ++c) {
      CHECK(std::abs(z.col(c).mean()) < 1e-8);
      const double sd = std::sqrt(
          (z.col(c).array() - z.col(c).mean()).square().sum() / z.rows());
      CHECK(std::abs(sd - s.scale(c)) < 1e-8);
    }
  }

  SUBCASE("round trip recovers the input") {
    const Eigen::MatrixXd big = random_matrix(50, 4, 12) * 37.0;
    Scaler s = fit_scaler(big);
    s.scale(1) = 2.0;
    const Eigen::MatrixXd back = inverse_transform(s, transform(s, big));
    CHECK((back - big).cwiseAbs().maxCoeff() < 1e-10);
  }

  SUBCASE("degenerate fits are refused") {
    CHECK_THROWS_AS(fit_scaler(Eigen::MatrixXd::Zero(1, 2)), Error);
    Eigen::MatrixXd flat(3, 2);
    flat << 1.0, 5.0, 2.0, 5.0, 3.0, 5.0;
    CHECK_THROWS_WITH_AS(fit_scaler(flat),
                         "scaler fit: column 1 has zero variance", Error);
    CHECK_THROWS_AS(transform(sc, Eigen::MatrixXd::Zero(2, 3)), Error);
    CHECK_THROWS_AS(inverse_transform(sc, Eigen::MatrixXd::Zero(2, 3)), Error);
  }
}

TEST_CASE("constant columns are set aside and rebuilt exactly") {
  Eigen::MatrixXd m(3, 4);
  m << 1.0, 7.0, 0.0, -2.0,
       2.0, 7.0, 0.0, -1.0,
       3.0, 7.0, 0.0, -2.0;
  const ColumnSelection sel = select_varying_columns(m);
  CHECK(sel.full_width == 4);
  REQUIRE(sel.kept == std::vector<int>{0, 3});
  CHECK(sel.constants[1] == 7.0);
  CHECK(sel.constants[2] == 0.0);

  const Eigen::MatrixXd narrow = restrict_columns(sel, m);
  CHECK(narrow.cols() == 2);
  CHECK(narrow(1, 0) == 2.0);
  CHECK(narrow(1, 1) == -1.0);

  const Eigen::MatrixXd back = expand_columns(sel, narrow);
  CHECK((back.array() == m.array()).all());

  // Fresh narrow data gets the remembered constants back verbatim.
  Eigen::MatrixXd other(1, 2);
  other << 9.0, 9.0;
  const Eigen::MatrixXd full = expand_columns(sel, other);
  CHECK(full(0, 0) == 9.0);
  CHECK(full(0, 1) == 7.0);
  CHECK(full(0, 2) == 0.0);
  CHECK(full(0, 3) == 9.0);

  CHECK_THROWS_AS(restrict_columns(sel, narrow), Error);
  CHECK_THROWS_AS(expand_columns(sel, m), Error);
  CHECK_THROWS_AS(select_varying_columns(Eigen::MatrixXd(0, 3)), Error);
}

TEST_CASE("forward pass reproduces hand-computed values") {
  SUBCASE("all-zero parameters give zero output") {
    MLPParams p;
    p.w = {Eigen::MatrixXd::Zero(3, 4), Eigen::MatrixXd::Zero(4, 2)};
    p.b = {Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(2)};
    const Eigen::VectorXd y = forward(p, Eigen::Vector3d(1.0, -2.0, 5.0));
    CHECK(y.norm() == 0.0);
  }

  SUBCASE("scalar chain with a clipping hidden unit") {
    MLPParams p;
    p.w = {Eigen::MatrixXd::Constant(1, 1, 1.0),
           Eigen::MatrixXd::Constant(1, 1, 2.0)};
    p.b = {Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Zero(1)};
    Eigen::VectorXd x(1);
    x << 3.0;
    // Hidden pre-activation 3 - 1 = 2 stays positive, output doubles it.
    CHECK(forward(p, x)(0) == doctest::Approx(4.0).epsilon(1e-15));
    // Below the hinge the hidden unit goes dark and only the output bias
    // survives.
    x << 0.5;
    CHECK(forward(p, x)(0) == doctest::Approx(0.0).epsilon(1e-15));
    p.b[1](0) = 0.25;
    x << -100.0;
    CHECK(forward(p, x)(0) == doctest::Approx(0.25).epsilon(1e-15));
  }

  SUBCASE("bias-free networks are positively homogeneous") {
    const MLPParams p = make_mlp({3, 5, 4, 2}, 77);
    const Eigen::VectorXd x = random_matrix(3, 1, 8).col(0);
    const Eigen::VectorXd once = forward(p, x);
    const Eigen::VectorXd twice = forward(p, (2.0 * x).eval());
    CHECK((twice - 2.0 * once).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("the batched pass agrees with row-at-a-time evaluation") {
    MLPParams p = make_mlp({4, 6, 3}, 21);
    p.b[0] = random_matrix(6, 1, 22).col(0);
    p.b[1] = random_matrix(3, 1, 23).col(0);
    const Eigen::MatrixXd rows = random_matrix(5, 4, 24);
    const Eigen::MatrixXd batch = forward_batch(p, rows);
    REQUIRE(batch.rows() == 5);
    REQUIRE(batch.cols() == 3);
    for (long r = 0; r < rows.rows(); ++r) {
      const Eigen::VectorXd one = forward(p, rows.row(r).transpose());
      CHECK((batch.row(r).transpose() - one).cwiseAbs().maxCoeff() < 1e-14);
    }
  }

  SUBCASE("malformed parameters and inputs are refused") {
    MLPParams p = make_mlp({2, 3, 1}, 5);
    CHECK_THROWS_AS(forward(p, Eigen::Vector3d(1, 2, 3)), Error);
    p.b[0] = Eigen::VectorXd::Zero(2);
    CHECK_THROWS_AS(forward(p, Eigen::Vector2d(1, 2)), Error);
    MLPParams empty;
    CHECK_THROWS_AS(forward(empty, Eigen::Vector2d(1, 2)), Error);
  }
}

TEST_CASE("initialization is seeded and respects the fan bound") {
  const MLPParams p = make_mlp({4, 7, 2}, 123);
  REQUIRE(p.w.size() == 2);
  CHECK(p.layer_sizes() == std::vector<int>{4, 7, 2});
  CHECK(p.parameter_count() == 4 * 7 + 7 + 7 * 2 + 2);
  CHECK(p.b[0].norm() == 0.0);
  CHECK(p.b[1].norm() == 0.0);
  CHECK(p.w[0].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / (4 + 7)));
  CHECK(p.w[1].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / (7 + 2)));
  // Draws genuinely spread out instead of clustering at zero.
  CHECK(p.w[0].cwiseAbs().maxCoeff() > 0.1 * std::sqrt(6.0 / (4 + 7)));

  CHECK(nets_equal(p, make_mlp({4, 7, 2}, 123)));
  CHECK_FALSE(nets_equal(p, make_mlp({4, 7, 2}, 124)));

  CHECK_THROWS_AS(make_mlp({3}, 1), Error);
  CHECK_THROWS_AS(make_mlp({3, 0, 2}, 1), Error);
}

TEST_CASE("backpropagation matches central finite differences") {
  const std::vector<std::vector<int>> shapes = {
      {5, 3, 2}, {4, 4}, {3, 6, 2}, {2, 5, 5, 1}, {1, 3, 1}};
  int probes = 0;
  for (size_t s = 0; s < shapes.size(); ++s) {
    const auto& sz = shapes[s];
    MLPParams p = make_mlp(sz, 300 + s);
    // Nonzero biases so their gradient path is exercised too.
    for (auto& b : p.b) b = 0.1 * random_matrix(b.size(), 1, 400 + s).col(0);
    const long batch = 1 + static_cast<long>(s % 4);
    const Eigen::MatrixXd x = random_matrix(batch, sz.front(), 500 + s);
    const Eigen::MatrixXd y = random_matrix(batch, sz.back(), 600 + s);
    const double alpha = (s % 2 == 0) ? 1e-3 : 0.0;
    CHECK(fd_max_rel_err(p, x, y, alpha) < 1e-5);
    ++probes;
  }
  CHECK(probes == 5);

  SUBCASE("loss rejects mismatched batches") {
    const MLPParams p = make_mlp({2, 3, 1}, 9);
    MLPParams g;
    CHECK_THROWS_AS(loss_and_gradient(p, Eigen::MatrixXd::Zero(2, 2),
                                      Eigen::MatrixXd::Zero(3, 1), 0.0, g),
                    Error);
    CHECK_THROWS_AS(loss_and_gradient(p, Eigen::MatrixXd::Zero(2, 3),
                                      Eigen::MatrixXd::Zero(2, 1), 0.0, g),
                    Error);
    CHECK_THROWS_AS(loss_and_gradient(p, Eigen::MatrixXd(0, 2),
                                      Eigen::MatrixXd(0, 1), 0.0, g),
                    Error);
  }
}

TEST_CASE("gradient descent fits a line and reports its loss honestly") {
  Eigen::MatrixXd x, y;
  line_data(x, y);

  SUBCASE("a small network drives held-out error below a percent") {
    TrainConfig cfg;
    cfg.learning_rate = 0.03;
    cfg.l2_alpha = 0.0;
    cfg.max_epochs = 1500;
    cfg.batch_size = 10;
    cfg.seed = 3;
    const RegressorBundle b = train(x, y, {8}, cfg);
    Eigen::MatrixXd xh(30, 1), yh(30, 1);
    for (int i = 0; i < 30; ++i) {
      xh(i, 0) = -0.95 + i * 0.0613;
      yh(i, 0) = 2.0 * xh(i, 0);
    }
    const Eigen::VectorXd err = rmse(yh, predict_batch(b, xh));
    CHECK(err(0) < 0.01);
    CHECK(b.loss_curve.size() == 1500);
  }

  SUBCASE("full-batch descent on an affine model never backslides") {
    Eigen::MatrixXd xf = random_matrix(40, 2, 31);
    Eigen::MatrixXd yf = xf * Eigen::Vector2d(1.0, -0.5);
    yf.array() += 0.3;
    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.batch_size = 64;
    cfg.max_epochs = 150;
    cfg.seed = 4;
    const RegressorBundle b = train(xf, yf, {}, cfg);
    REQUIRE(b.loss_curve.size() == 150);
    for (size_t i = 1; i < b.loss_curve.size(); ++i)
      CHECK(b.loss_curve[i] <= b.loss_curve[i - 1] + 1e-12);
  }

  SUBCASE("zero epochs hands back the untouched initialization") {
    TrainConfig cfg;
    cfg.max_epochs = 0;
    cfg.seed = 9;
    const RegressorBundle b1 = train(x, y, {4}, cfg);
    CHECK(b1.loss_curve.empty());
    // The learning rate never enters when nothing steps, so the weights
    // depend on the seed alone.
    cfg.learning_rate = 0.5;
    const RegressorBundle b2 = train(x, y, {4}, cfg);
    CHECK(nets_equal(b1.net, b2.net));
    CHECK(b1.config_digest != b2.config_digest);
  }

  SUBCASE("training is deterministic for a fixed config") {
    TrainConfig cfg;
    cfg.max_epochs = 40;
    cfg.seed = 17;
    const RegressorBundle b1 = train(x, y, {6}, cfg);
    const RegressorBundle b2 = train(x, y, {6}, cfg);
    CHECK(nets_equal(b1.net, b2.net));
    CHECK(b1.loss_curve == b2.loss_curve);
    cfg.seed = 18;
    const RegressorBundle b3 = train(x, y, {6}, cfg);
    CHECK_FALSE(nets_equal(b1.net, b3.net));
  }

  SUBCASE("a runaway step size aborts with the epoch on record") {
    TrainConfig cfg;
    cfg.learning_rate = 1e6;
    cfg.max_epochs = 50;
    try {
      train(x, y, {4}, cfg);
      FAIL("the runaway fit should have thrown");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("diverged at epoch") !=
            std::string::npos);
    }
  }

  SUBCASE("early stopping cuts the schedule short once converged") {
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.l2_alpha = 0.0;  // keep the optimum exact so validation loss floors
    cfg.batch_size = 64;
    cfg.max_epochs = 4000;
    cfg.early_stop = true;
    cfg.patience = 5;
    cfg.validation_share = 0.2;
    cfg.seed = 6;
    Eigen::MatrixXd xf = random_matrix(30, 2, 41);
    Eigen::MatrixXd yf = xf * Eigen::Vector2d(0.7, 0.2);
    const RegressorBundle b = train(xf, yf, {}, cfg);
    CHECK(b.loss_curve.size() < 4000);
    CHECK(rmse(yf, predict_batch(b, xf))(0) < 1e-6);
  }
}

TEST_CASE("training refuses degenerate inputs") {
  Eigen::MatrixXd x, y;
  line_data(x, y);
  TrainConfig cfg;
  cfg.max_epochs = 1;

  CHECK_THROWS_AS(train(x, y.topRows(50), {}, cfg), Error);
  CHECK_THROWS_AS(train(x.topRows(1), y.topRows(1), {}, cfg), Error);

  TrainConfig bad = cfg;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(train(x, y, {}, bad), Error);
  bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(train(x, y, {}, bad), Error);
  bad = cfg;
  bad.max_epochs = -1;
  CHECK_THROWS_AS(train(x, y, {}, bad), Error);
  CHECK_THROWS_AS(train(x, y, {4, 0}, cfg), Error);
  CHECK_THROWS_AS(train(x, y, {}, cfg, {"a", "b"}), Error);

  CHECK_THROWS_WITH_AS(train(Eigen::MatrixXd::Ones(10, 2), y.topRows(10), {}, cfg),
                       "no feature column varies; nothing to learn from", Error);
  CHECK_THROWS_WITH_AS(train(x.topRows(10), Eigen::MatrixXd::Zero(10, 2), {}, cfg),
                       "every target column is constant; nothing to regress",
                       Error);
}

TEST_CASE("an overfit model memorizes its rows and prediction is pure") {
  const Eigen::MatrixXd x = random_matrix(8, 2, 51);
  Eigen::MatrixXd y(8, 3);
  for (int r = 0; r < 8; ++r) {
    y(r, 0) = x(r, 0) + x(r, 1) * x(r, 1);
    y(r, 1) = 0.5 * x(r, 0) - x(r, 1);
    y(r, 2) = 4.0;  // constant target, set aside rather than regressed
  }
  TrainConfig cfg;
  cfg.learning_rate = 0.03;
  cfg.l2_alpha = 0.0;
  cfg.max_epochs = 8000;
  cfg.batch_size = 8;
  cfg.seed = 5;
  const RegressorBundle b =
      train(x, y, {16}, cfg, {"quad", "mix", "const"});
  REQUIRE(b.out_sel.kept == std::vector<int>{0, 1});
  CHECK(b.target_names.size() == 3);

  for (int r = 0; r < 8; ++r) {
    const Eigen::VectorXd p = predict(b, x.row(r).transpose());
    REQUIRE(p.size() == 3);
    CHECK(std::abs(p(0) - y(r, 0)) < 0.05);
    CHECK(std::abs(p(1) - y(r, 1)) < 0.05);
    CHECK(p(2) == 4.0);
  }

  // Prediction twice over gives identical bits and leaves the bundle alone.
  const Eigen::MatrixXd p1 = predict_batch(b, x);
  const Eigen::MatrixXd p2 = predict_batch(b, x);
  CHECK((p1.array() == p2.array()).all());

  // A constant feature column rides along without poisoning the scaler.
  Eigen::MatrixXd x3(8, 3);
  x3 << x, Eigen::MatrixXd::Constant(8, 1, 2.5);
  const RegressorBundle b3 = train(x3, y, {8}, cfg);
  CHECK(b3.in_sel.kept == std::vector<int>{0, 1});
  CHECK(predict(b3, x3.row(0).transpose()).size() == 3);
}

TEST_CASE("per-column error matches a two-pass reference") {
  Eigen::MatrixXd a(2, 1), bm(2, 1);
  a << 1.0, 2.0;
  bm << 1.0, 4.0;
  CHECK(rmse(a, a)(0) == 0.0);
  CHECK(rmse(a, bm)(0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));

  const Eigen::MatrixXd y = random_matrix(37, 4, 61);
  const Eigen::MatrixXd yh = y + 0.1 * random_matrix(37, 4, 62);
  const Eigen::VectorXd fast = rmse(y, yh);
  for (long c = 0; c < 4; ++c) {
    double acc = 0.0;
    for (long r = 0; r < 37; ++r) {
      const double d = y(r, c) - yh(r, c);
      acc += d * d;
    }
    CHECK(std::abs(fast(c) - std::sqrt(acc / 37.0)) < 1e-12);
  }

  CHECK_THROWS_AS(rmse(Eigen::MatrixXd(0, 2), Eigen::MatrixXd(0, 2)), Error);
  CHECK_THROWS_AS(rmse(y, yh.leftCols(2)), Error);
}

TEST_CASE("cross-validation partitions the rows and scores each fold") {
  const Eigen::MatrixXd x = random_matrix(2200, 2, 71);
  Eigen::MatrixXd y = x * Eigen::Vector2d(1.5, -2.0);
  y.array() += 1.0;
  TrainConfig cfg;
  cfg.max_epochs = 2;
  cfg.batch_size = 256;
  cfg.learning_rate = 0.05;
  cfg.seed = 13;

  const CVResult cv = kfold_cv(x, y, 5, {}, cfg);
  REQUIRE(cv.folds.size() == 5);
  std::vector<size_t> all;
  for (const auto& f : cv.folds) {
    CHECK(f.size() == 440);
    all.insert(all.end(), f.begin(), f.end());
  }
  std::sort(all.begin(), all.end());
  REQUIRE(all.size() == 2200);
  for (size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);

  REQUIRE(cv.fold_rmse.rows() == 5);
  REQUIRE(cv.fold_rmse.cols() == 1);
  double mean = 0.0;
  for (int j = 0; j < 5; ++j) mean += cv.fold_rmse.row(j).mean();
  mean /= 5.0;
  CHECK(cv.mean_score == doctest::Approx(mean).epsilon(1e-12));
  double var = 0.0;
  for (int j = 0; j < 5; ++j) {
    const double d = cv.fold_rmse.row(j).mean() - mean;
    var += d * d;
  }
  CHECK(cv.stddev_score == doctest::Approx(std::sqrt(var / 5.0)).epsilon(1e-12));

  SUBCASE("the partition is seeded") {
    const CVResult again = kfold_cv(x, y, 5, {}, cfg);
    CHECK(again.folds == cv.folds);
    CHECK(again.mean_score == cv.mean_score);
    TrainConfig other = cfg;
    other.seed = 14;
    CHECK(kfold_cv(x, y, 5, {}, other).folds != cv.folds);
  }

  SUBCASE("leave-one-out holds every row out exactly once") {
    const Eigen::MatrixXd xs = x.topRows(6);
    const Eigen::MatrixXd ys = y.topRows(6);
    const CVResult loo = kfold_cv(xs, ys, 6, {}, cfg);
    std::set<size_t> seen;
    for (const auto& f : loo.folds) {
      REQUIRE(f.size() == 1);
      seen.insert(f[0]);
    }
    CHECK(seen.size() == 6);
  }

  SUBCASE("fold counts outside the data are refused") {
    CHECK_THROWS_AS(kfold_cv(x.topRows(4), y.topRows(4), 5, {}, cfg), Error);
    CHECK_THROWS_AS(kfold_cv(x, y, 1, {}, cfg), Error);
    CHECK_THROWS_AS(kfold_cv(x.topRows(10), y.topRows(9), 3, {}, cfg), Error);
  }
}

TEST_CASE("hyperparameter search prefers accuracy then economy") {
  const Eigen::MatrixXd x = random_matrix(60, 2, 81);
  const Eigen::MatrixXd y = x * Eigen::Vector2d(2.0, 1.0);
  TrainConfig trained;
  trained.max_epochs = 60;
  trained.batch_size = 64;
  trained.learning_rate = 0.1;
  trained.seed = 23;
  TrainConfig frozen = trained;
  frozen.max_epochs = 0;  // an untrained candidate to lose on purpose

  SUBCASE("a singleton grid wins by default") {
    const GridSearchResult r = grid_search(x, y, {{{}, trained}}, 3);
    CHECK(r.best == 0);
    REQUIRE(r.mean_rmse.size() == 1);
    CHECK(r.mean_rmse[0] < 0.05);
  }

  SUBCASE("the trained candidate beats the frozen one") {
    const GridSearchResult r =
        grid_search(x, y, {{{4}, frozen}, {{}, trained}}, 3);
    CHECK(r.best == 1);
    CHECK(r.mean_rmse[1] < r.mean_rmse[0]);
  }

  SUBCASE("exact score ties fall back to grid order") {
    const GridSearchResult r =
        grid_search(x, y, {{{}, trained}, {{}, trained}}, 3);
    CHECK(r.best == 0);
    CHECK(r.mean_rmse[0] == r.mean_rmse[1]);
  }

  SUBCASE("repeat searches agree") {
    const std::vector<GridCandidate> grid = {{{}, trained}, {{3}, trained}};
    const GridSearchResult r1 = grid_search(x, y, grid, 3);
    const GridSearchResult r2 = grid_search(x, y, grid, 3);
    CHECK(r1.best == r2.best);
    CHECK(r1.mean_rmse == r2.mean_rmse);
    CHECK(r1.stddev_rmse == r2.stddev_rmse);
  }

  CHECK_THROWS_AS(grid_search(x, y, {}, 3), Error);
}

TEST_CASE("bundles survive a save and load round trip bit for bit") {
  Eigen::MatrixXd x, y;
  line_data(x, y);
  Eigen::MatrixXd y2(100, 2);
  y2.col(0) = y.col(0);
  y2.col(1).setConstant(-3.0);
  TrainConfig cfg;
  cfg.max_epochs = 30;
  cfg.seed = 99;
  const RegressorBundle b = train(x, y2, {5}, cfg, {"slope", "flat"});

  const std::string path = scratch_file("roundtrip.json");
  save_bundle(b, path);
  const RegressorBundle r = load_bundle(path);

  CHECK(nets_equal(b.net, r.net));
  CHECK((r.in_scaler.mean.array() == b.in_scaler.mean.array()).all());
  CHECK((r.in_scaler.stddev.array() == b.in_scaler.stddev.array()).all());
  CHECK((r.out_scaler.mean.array() == b.out_scaler.mean.array()).all());
  CHECK(r.in_sel.kept == b.in_sel.kept);
  CHECK(r.out_sel.kept == b.out_sel.kept);
  CHECK(r.out_sel.constants == b.out_sel.constants);
  CHECK(r.target_names == b.target_names);
  CHECK(r.loss_curve == b.loss_curve);
  CHECK(r.seed == b.seed);
  CHECK(r.config_digest == b.config_digest);

  // Identical predictions, and a second save writes identical bytes.
  const Eigen::MatrixXd p1 = predict_batch(b, x);
  const Eigen::MatrixXd p2 = predict_batch(r, x);
  CHECK((p1.array() == p2.array()).all());
  const std::string again = scratch_file("roundtrip2.json");
  save_bundle(r, again);
  CHECK(read_text_file(path) == read_text_file(again));

  SUBCASE("broken files are reported as such") {
    CHECK_THROWS_AS(load_bundle(scratch_file("missing.json")), IoError);
    const std::string garbled = scratch_file("garbled.json");
    write_text_file(garbled, "{not json");
    CHECK_THROWS_AS(load_bundle(garbled), IoError);
    const std::string alien = scratch_file("alien.json");
    write_text_file(alien, "{\"kind\": \"shopping-list\"}\n");
    CHECK_THROWS_AS(load_bundle(alien), IoError);
    const std::string clipped = scratch_file("clipped.json");
    std::string text = read_text_file(path);
    const size_t cut = text.find("\"weights\"");
    REQUIRE(cut != std::string::npos);
    // Empty the weight tables but keep the JSON well formed.
    text.replace(cut, text.find("\"biases\"") - cut, "\"weights\": [[], []],\n ");
    write_text_file(clipped, text);
    CHECK_THROWS_AS(load_bundle(clipped), IoError);
  }
}
