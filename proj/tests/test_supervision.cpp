#include <doctest.h>

#include <cmath>

#include "msica/errors.hpp"
#include "msica/supervision.hpp"
#include "oracles.hpp"

using namespace msica;

namespace {

FeatureMapConfig cfg(Index w, Index h, bool log_power = false) {
  FeatureMapConfig c;
  c.window = w;
  c.hop = h;
  c.log_power = log_power;
  return c;
}

SupervisedTargetModel regression(const VectorXd& theta) {
  SupervisedTargetModel m;
  m.kind = ModelKind::squared_regression;
  m.theta = theta.transpose();
  return m;
}

SupervisedTargetModel classifier(const MatrixXd& theta) {
  SupervisedTargetModel m;
  m.kind = ModelKind::softmax_classification;
  m.theta = theta;
  return m;
}

}  // namespace

TEST_CASE("feature map dimensions and validation") {
  const auto c = cfg(16, 8);
  CHECK(c.n_bins() == 9);
  CHECK(c.n_windows(32) == 3);
  CHECK(c.output_dim(32) == 27);
  CHECK_THROWS_AS(cfg(33, 8).validate(32), ConfigError);
  CHECK_THROWS_AS(cfg(16, 0).validate(32), ConfigError);
  CHECK_NOTHROW(cfg(32, 1).validate(32));
}

TEST_CASE("constant signal has all power at DC") {
  const Index T = 16;
  const auto phi = feature_map(VectorXd::Ones(T), cfg(T, 1));
  REQUIRE(phi.size() == T / 2 + 1);
  CHECK(phi(0) == doctest::Approx(static_cast<double>(T * T)));
  for (Index k = 1; k < phi.size(); ++k) CHECK(std::abs(phi(k)) < 1e-20 * T * T + 1e-18);
}

TEST_CASE("zero signal") {
  const auto phi = feature_map(VectorXd::Zero(32), cfg(16, 8));
  CHECK(phi.isZero(0.0));
  auto lc = cfg(16, 8, true);
  const auto lphi = feature_map(VectorXd::Zero(32), lc);
  CHECK((lphi.array() == std::log(lc.log_eps)).all());
}

TEST_CASE("feature map matches a naive DFT") {
  oracle::TestRng rng(1);
  for (bool lp : {false, true}) {
    for (int rep = 0; rep < 5; ++rep) {
      const VectorXd s = rng.normal_vector(32);
      const auto c = cfg(16, 8, lp);
      const VectorXd got = feature_map(s, c);
      const VectorXd want = oracle::naive_spectrogram(s, 16, 8, lp, c.log_eps);
      REQUIRE(got.size() == 27);
      CHECK(oracle::max_rel_error(got, want) < 1e-10);
    }
  }
  // Odd window and uneven hop.
  const VectorXd s = rng.normal_vector(50);
  CHECK(oracle::max_rel_error(feature_map(s, cfg(15, 7)), oracle::naive_spectrogram(s, 15, 7, false, 1e-6)) < 1e-10);
}

TEST_CASE("regression with zero weights") {
  oracle::TestRng rng(2);
  const FeatureMap fm(cfg(16, 8), 32);
  const VectorXd s = rng.normal_vector(32);
  const auto lg = loss_and_grads(regression(VectorXd::Zero(fm.dim())), s, 1.5, fm);
  CHECK(lg.loss == doctest::Approx(0.5 * 1.5 * 1.5));
  CHECK(lg.grad_s.isZero(0.0));
  const VectorXd expected = -1.5 * fm(s);
  CHECK(oracle::max_rel_error(lg.grad_theta.row(0).transpose(), expected) < 1e-15);
}

TEST_CASE("exact prediction gives zero loss and gradients") {
  oracle::TestRng rng(3);
  const FeatureMap fm(cfg(16, 8), 32);
  const VectorXd s = rng.normal_vector(32);
  const VectorXd theta = rng.normal_vector(fm.dim());
  const double y = predict(regression(theta), s, fm);
  const auto lg = loss_and_grads(regression(theta), s, y, fm);
  CHECK(lg.loss == 0.0);
  CHECK(lg.grad_s.isZero(0.0));
  CHECK(lg.grad_theta.isZero(0.0));
  CHECK(y == doctest::Approx(theta.dot(oracle::naive_spectrogram(s, 16, 8, false, 1e-6))).epsilon(1e-12));
}

TEST_CASE("gradients match central differences") {
  oracle::TestRng rng(4);
  const Index T = 32;
  for (bool lp : {false, true}) {
    const FeatureMap fm(cfg(16, 8, lp), T);
    for (int rep = 0; rep < 10; ++rep) {
      const VectorXd s = rng.normal_vector(T);
      const bool cls = rep % 2 == 1;
      SupervisedTargetModel model =
          cls ? classifier(0.01 * rng.normal_matrix(3, fm.dim())) : regression(0.01 * rng.normal_vector(fm.dim()));
      const double y = cls ? static_cast<double>(rng.index(3)) : rng.normal();
      const auto lg = loss_and_grads(model, s, y, fm);

      auto fs = [&](const VectorXd& v) { return supervised_loss(model, v, y, fm); };
      CHECK(oracle::max_rel_error(lg.grad_s, oracle::fd_gradient(fs, s, 1e-6)) < 1e-5);

      const Eigen::Map<const VectorXd> flat(model.theta.data(), model.theta.size());
      auto ft = [&](const VectorXd& v) {
        SupervisedTargetModel m2 = model;
        m2.theta = Eigen::Map<const MatrixXd>(v.data(), model.theta.rows(), model.theta.cols());
        return supervised_loss(m2, s, y, fm);
      };
      const Eigen::Map<const VectorXd> g(lg.grad_theta.data(), lg.grad_theta.size());
      CHECK(oracle::max_rel_error(g, oracle::fd_gradient(ft, flat, 1e-6)) < 1e-5);
    }
  }
}

TEST_CASE("classification loss and errors") {
  const FeatureMap fm(cfg(8, 8), 8);
  const auto model = classifier(MatrixXd::Zero(4, fm.dim()));
  const VectorXd s = VectorXd::Ones(8);
  CHECK(supervised_loss(model, s, 2.0, fm) == doctest::Approx(std::log(4.0)));
  CHECK_THROWS(loss_and_grads(model, s, 4.0, fm));
  CHECK_THROWS(loss_and_grads(model, s, -1.0, fm));
}

TEST_CASE("model construction from schema") {
  const auto r = SupervisedTargetModel::for_target({"y", TargetKind::continuous, 0}, 10);
  CHECK(r.kind == ModelKind::squared_regression);
  CHECK(r.theta.rows() == 1);
  CHECK(r.theta.cols() == 10);
  const auto c = SupervisedTargetModel::for_target({"k", TargetKind::categorical, 3}, 10);
  CHECK(c.kind == ModelKind::softmax_classification);
  CHECK(c.n_classes() == 3);
}

TEST_CASE("optimizer steps") {
  const MatrixXd one = MatrixXd::Ones(1, 1);
  SUBCASE("sgd with zero gradient is a fixed point") {
    OptimizerState st({OptimizerRule::sgd_wd, 0.1}, 1, 1);
    CHECK(optimizer_step(st, one, MatrixXd::Zero(1, 1), 0.0)(0, 0) == 1.0);
  }
  SUBCASE("sgd formula") {
    OptimizerState st({OptimizerRule::sgd_wd, 0.1}, 1, 1);
    CHECK(optimizer_step(st, one, one, 0.0)(0, 0) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(optimizer_step(st, one, one, 2.0)(0, 0) == doctest::Approx(0.7).epsilon(1e-15));
  }
  SUBCASE("adamw first step is bias corrected") {
    OptimizerState st({OptimizerRule::adamw, 0.1, 0.9, 0.999, 1e-8}, 1, 1);
    const double next = optimizer_step(st, one, one, 0.0)(0, 0);
    CHECK(next == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-14));
    CHECK(st.step == 1);
    CHECK(st.m.rows() == 1);
  }
  SUBCASE("adamw decoupled decay") {
    OptimizerState st({OptimizerRule::adamw, 0.1, 0.9, 0.999, 1e-8}, 1, 1);
    const double next = optimizer_step(st, one, MatrixXd::Zero(1, 1), 0.5)(0, 0);
    CHECK(next == doctest::Approx(0.95).epsilon(1e-15));
  }
  SUBCASE("adamw second step against hand moments") {
    OptimizerState st({OptimizerRule::adamw, 0.01, 0.9, 0.999, 1e-8}, 1, 1);
    MatrixXd th = optimizer_step(st, one, one, 0.0);
    th = optimizer_step(st, th, 3.0 * one, 0.0);
    const double m = 0.9 * 0.1 + 0.1 * 3.0;
    const double v = 0.999 * 0.001 + 0.001 * 9.0;
    const double mh = m / (1 - 0.81);
    const double vh = v / (1 - 0.999 * 0.999);
    const double expected = (1.0 - 0.01 / (1.0 + 1e-8)) - 0.01 * mh / (std::sqrt(vh) + 1e-8);
    CHECK(th(0, 0) == doctest::Approx(expected).epsilon(1e-14));
  }
  CHECK(optimizer_rule_from_string("adamw") == OptimizerRule::adamw);
  CHECK(to_string(OptimizerRule::sgd_wd) == "sgd_wd");
  CHECK_THROWS(optimizer_rule_from_string("adam"));
}

namespace {

Dataset labeled(Index n, Index c, Index t, unsigned long long seed) {
  oracle::TestRng rng(seed);
  std::vector<Trial> trials;
  for (Index i = 0; i < n; ++i) trials.push_back({rng.normal_matrix(c, t), rng.normal_vector(1)});
  return Dataset(std::move(trials), {{"y", TargetKind::continuous, 0}});
}

}  // namespace

TEST_CASE("batch parameter gradients") {
  const auto ds = labeled(4, 2, 16, 5);
  oracle::TestRng rng(5);
  const FeatureMap fm(cfg(8, 4), 16);
  const UnmixingState w(MatrixXd::Identity(2, 2) + 0.3 * rng.normal_matrix(2, 2));
  const auto model = regression(0.1 * rng.normal_vector(fm.dim()));

  SUBCASE("single trial equals the per-trial gradient") {
    const std::vector<Index> b{2};
    const MatrixXd g = batch_param_grad(model, 0, w, b, ds, fm);
    const auto lg = loss_and_grads(model, source_signal(w, ds.trial(2).signal, 0), ds.trial(2).labels(0), fm);
    CHECK(g == lg.grad_theta);
  }
  SUBCASE("halves average to the full batch") {
    const std::vector<Index> all{0, 1, 2, 3}, h1{0, 1}, h2{2, 3};
    const MatrixXd full = batch_param_grad(model, 0, w, all, ds, fm);
    const MatrixXd avg = 0.5 * (batch_param_grad(model, 0, w, h1, ds, fm) + batch_param_grad(model, 0, w, h2, ds, fm));
    CHECK((full - avg).cwiseAbs().maxCoeff() <= 1e-12 * full.cwiseAbs().maxCoeff());
  }
  SUBCASE("subset average is unbiased") {
    const std::vector<Index> all{0, 1, 2, 3};
    const MatrixXd full = batch_param_grad(model, 0, w, all, ds, fm);
    MatrixXd mean = MatrixXd::Zero(full.rows(), full.cols());
    const auto subs = oracle::subsets(4, 2);
    for (const auto& s : subs) mean += batch_param_grad(model, 0, w, s, ds, fm);
    mean /= static_cast<double>(subs.size());
    CHECK((full - mean).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, full.cwiseAbs().maxCoeff()));
  }
  SUBCASE("empty batch is an error") {
    const std::vector<Index> none;
    CHECK_THROWS(batch_param_grad(model, 0, w, none, ds, fm));
  }
}

TEST_CASE("source Lipschitz estimate bounds difference quotients") {
  oracle::TestRng rng(6);
  const FeatureMap fm(cfg(8, 4), 16);
  const auto model = regression(0.1 * rng.normal_vector(fm.dim()));
  std::vector<VectorXd> sources;
  std::vector<double> labels;
  for (int i = 0; i < 5; ++i) {
    sources.push_back(rng.normal_vector(16));
    labels.push_back(rng.normal());
  }
  const double L = estimate_source_lipschitz(model, sources, labels, fm);
  CHECK(L > 0.0);
  // Difference quotients over short segments near each anchor source.
  for (std::size_t i = 0; i < sources.size(); ++i) {
    for (int rep = 0; rep < 20; ++rep) {
      const VectorXd d = 1e-4 * rng.normal_vector(16);
      const VectorXd g1 = loss_and_grads(model, sources[i], labels[i], fm).grad_s;
      const VectorXd g2 = loss_and_grads(model, sources[i] + d, labels[i], fm).grad_s;
      CHECK((g2 - g1).norm() / d.norm() <= L * 1.01);
    }
  }
}

TEST_CASE("theta Lipschitz estimate equals the feature Gram eigenvalue") {
  oracle::TestRng rng(7);
  const FeatureMap fm(cfg(8, 4), 16);
  std::vector<VectorXd> sources;
  MatrixXd gram = MatrixXd::Zero(fm.dim(), fm.dim());
  for (int i = 0; i < 6; ++i) {
    sources.push_back(rng.normal_vector(16));
    const VectorXd p = fm(sources.back());
    gram += p * p.transpose() / 6.0;
  }
  const double top = Eigen::SelfAdjointEigenSolver<MatrixXd>(gram).eigenvalues().maxCoeff();
  const auto model = regression(VectorXd::Zero(fm.dim()));
  CHECK(estimate_theta_lipschitz(model, sources, fm, 200) == doctest::Approx(top).epsilon(1e-6));
}
