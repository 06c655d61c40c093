#include <doctest.h>

#include <cmath>

#include "msica/errors.hpp"
#include "msica/likelihood.hpp"
#include "msica/rng.hpp"
#include "oracles.hpp"

using namespace msica;

namespace {

Dataset one_trial(const MatrixXd& z) { return Dataset({{z, VectorXd()}}, {}); }

Dataset random_unlabeled(Index n, Index c, Index t, unsigned long long seed) {
  oracle::TestRng rng(seed);
  std::vector<Trial> trials;
  for (Index i = 0; i < n; ++i) trials.push_back({rng.normal_matrix(c, t), VectorXd()});
  return Dataset(std::move(trials), {});
}

}  // namespace

TEST_CASE("unsup_loss hand values") {
  const auto lap = Density::laplace();
  CHECK(unsup_loss(UnmixingState(MatrixXd::Identity(2, 2)), MatrixXd::Zero(2, 2), lap) == 0.0);
  CHECK(unsup_loss(UnmixingState(2.0 * MatrixXd::Identity(2, 2)), MatrixXd::Zero(2, 2), lap) ==
        doctest::Approx(-2.0 * std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("unsup_loss matches the scalar loop") {
  oracle::TestRng rng(1);
  for (int rep = 0; rep < 10; ++rep) {
    const MatrixXd w = rng.normal_matrix(3, 3);
    const MatrixXd z = rng.normal_matrix(3, 8);
    const double expected = oracle::unsup_loss_loop(w, z);
    CHECK(std::abs(unsup_loss(UnmixingState(w), z, Density::laplace()) - expected) <=
          1e-12 * std::max(1.0, std::abs(expected)));
  }
}

TEST_CASE("exact weights") {
  const auto lap = Density::laplace();
  const auto hub = Density::huber();
  CHECK(lap.weight(2.0) == 0.5);
  CHECK(lap.weight(-4.0) == 0.25);
  CHECK(lap.weight(0.0) == lap.u_max());
  CHECK(lap.weight(1e-12) == lap.u_max());
  CHECK(hub.weight(0.5) == 1.0);
  CHECK(hub.weight(-0.5) == 1.0);
  CHECK(hub.weight(4.0) == 0.25);
  CHECK(hub.weight(0.0) == 1.0);
}

TEST_CASE("aux_exact applies the weight entrywise") {
  oracle::TestRng rng(2);
  const MatrixXd z = rng.normal_matrix(3, 6);
  const MatrixXd w = rng.normal_matrix(3, 3);
  const auto u = aux_exact(UnmixingState(w), one_trial(z), Density::laplace());
  const MatrixXd x = w * z;
  for (Index c = 0; c < 3; ++c)
    for (Index t = 0; t < 6; ++t) CHECK(u.trial(0)(c, t) == doctest::Approx(1.0 / std::abs(x(c, t))));
}

TEST_CASE("g(sqrt x) nondecreasing and midpoint concave on a grid") {
  for (const auto& d : {Density::laplace(), Density::huber()}) {
    auto h = [&](double x) { return d.g(std::sqrt(x)); };
    for (int k = 1; k < 1000; ++k) {
      const double a = 0.1 * k;
      const double b = a + 0.1;
      CHECK(h(b) >= h(a));
      CHECK(h(0.5 * (a + b)) >= 0.5 * (h(a) + h(b)) - 1e-12);
    }
  }
}

TEST_CASE("g_prime matches central differences away from kinks") {
  for (const auto& d : {Density::laplace(), Density::huber()}) {
    for (double x : {-4.0, -1.7, -0.6, -0.2, 0.3, 0.9, 1.4, 3.3}) {
      const double h = 1e-6;
      const double fd = (d.g(x + h) - d.g(x - h)) / (2 * h);
      CHECK(std::abs(d.g_prime(x) - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("laplace variational identity") {
  // Brute-force grid over log u, then golden-section refinement.
  for (int k = -50; k <= 50; ++k) {
    if (k == 0) continue;
    const double x = 0.1 * k;
    auto obj = [&](double lu) {
      const double u = std::exp(lu);
      return 0.5 * u * x * x + 1.0 / (2.0 * u);
    };
    double best = -20.0;
    for (double lu = -20.0; lu <= 20.0; lu += 0.01)
      if (obj(lu) < obj(best)) best = lu;
    double lo = best - 0.01, hi = best + 0.01;
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 200; ++it) {
      const double a = hi - phi * (hi - lo);
      const double b = lo + phi * (hi - lo);
      if (obj(a) < obj(b)) hi = b;
      else lo = a;
    }
    CHECK(std::abs(obj(0.5 * (lo + hi)) - std::abs(x)) < 1e-10);
  }
  const auto lap = Density::laplace();
  CHECK(lap.f(0.25) == 2.0);
  CHECK(lap.variational_term(2.0, 0.5) == doctest::Approx(2.0));
}

TEST_CASE("huber has no closed-form f") {
  const auto hub = Density::huber();
  CHECK_FALSE(hub.has_variational_f());
  CHECK_THROWS_AS(hub.f(1.0), Error);
  CHECK_THROWS(hub.proximal_weight(1.0, 1.0, 1.0));
}

TEST_CASE("proximal weight") {
  const auto lap = Density::laplace();
  SUBCASE("hand case x=1, u_prev=1, eta=1") {
    CHECK(lap.proximal_weight(1.0, 1.0, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("large eta approaches exact weight") {
    for (double x : {-3.0, -0.4, 0.05, 0.7, 2.5}) {
      const double u = lap.proximal_weight(x, 0.3, 1e12);
      CHECK(std::abs(u - lap.weight(x)) <= 1e-6 * lap.weight(x));
    }
  }
  SUBCASE("exact weight is a fixed point") {
    for (double x : {-2.0, 0.3, 1.1}) {
      for (double eta : {0.01, 1.0, 100.0}) {
        const double u = lap.weight(x);
        CHECK(lap.proximal_weight(x, u, eta) == doctest::Approx(u).epsilon(1e-10));
      }
    }
  }
  SUBCASE("stationarity residual vanishes on random inputs") {
    oracle::TestRng rng(4);
    for (int k = 0; k < 200; ++k) {
      const double x = 3.0 * rng.normal();
      const double up = std::exp(2.0 * rng.normal());
      const double eta = std::exp(2.0 * rng.normal());
      const double u = lap.proximal_weight(x, up, eta);
      if (u >= lap.u_max()) continue;
      const double r = 0.5 * x * x - 1.0 / (2.0 * u * u) + (u - up) / eta;
      const double scale = 0.5 * x * x + 1.0 / (2.0 * u * u) + std::abs(u - up) / eta;
      CHECK(std::abs(r) <= 1e-10 * scale);
    }
  }
  SUBCASE("x = 0 clamps to u_max") {
    CHECK(lap.proximal_weight(0.0, 1.0, 1.0) <= lap.u_max());
    CHECK(lap.proximal_weight(0.0, 1.0, 1.0) > 0.0);
  }
}

TEST_CASE("aux_exact is the minimizer of the variational energy") {
  const auto ds = random_unlabeled(2, 3, 5, 5);
  oracle::TestRng rng(5);
  const UnmixingState w(rng.normal_matrix(3, 3));
  const auto lap = Density::laplace();
  const auto u = aux_exact(w, ds, lap);
  const double base = variational_energy(w, ds, lap, u);
  for (Index i = 0; i < 2; ++i)
    for (Index c = 0; c < 3; ++c)
      for (Index t = 0; t < 5; ++t)
        for (double delta : {-1e-3, 1e-3}) {
          auto v = u;
          v.trial(i)(c, t) += delta;
          CHECK(variational_energy(w, ds, lap, v) >= base);
        }
}

TEST_CASE("exact substitution never increases the energy and reproduces the loss") {
  const auto ds = random_unlabeled(3, 3, 10, 6);
  oracle::TestRng rng(6);
  const UnmixingState w(rng.normal_matrix(3, 3));
  const auto lap = Density::laplace();
  AuxTensor arbitrary;
  for (Index i = 0; i < 3; ++i) arbitrary.weights.push_back(rng.normal_matrix(3, 10).cwiseAbs());
  const auto u = aux_exact(w, ds, lap);
  CHECK(variational_energy(w, ds, lap, u) <= variational_energy(w, ds, lap, arbitrary));

  double mean_g = 0.0;
  for (Index i = 0; i < 3; ++i) mean_g += unsup_loss(w, ds.trial(i).signal, lap) + w.log_abs_det();
  mean_g /= 3.0;
  CHECK(variational_energy(w, ds, lap, u) == doctest::Approx(mean_g).epsilon(1e-12));
}

TEST_CASE("partial update leaves unsampled entries alone") {
  const auto ds = random_unlabeled(3, 2, 4, 7);
  oracle::TestRng rng(7);
  const UnmixingState w(rng.normal_matrix(2, 2));
  const auto lap = Density::laplace();
  AuxTensor u;
  for (Index i = 0; i < 3; ++i) u.weights.push_back(MatrixXd::Constant(2, 4, -1.0));
  const std::vector<Index> trials{0, 2};
  const std::vector<Index> times{1, 3};
  update_aux(u, w, ds, lap, AuxMode::exact, 1.0, trials, times);
  const auto exact = aux_exact(w, ds, lap);
  for (Index i = 0; i < 3; ++i)
    for (Index c = 0; c < 2; ++c)
      for (Index t = 0; t < 4; ++t) {
        const bool sampled = (i != 1) && (t == 1 || t == 3);
        if (sampled) CHECK(u.trial(i)(c, t) == exact.trial(i)(c, t));
        else CHECK(u.trial(i)(c, t) == -1.0);
      }
}

TEST_CASE("aux_proximal with huge eta matches aux_exact") {
  const auto ds = random_unlabeled(2, 3, 6, 8);
  oracle::TestRng rng(8);
  const UnmixingState w(rng.normal_matrix(3, 3));
  const auto lap = Density::laplace();
  const auto exact = aux_exact(w, ds, lap);
  AuxTensor prev;
  for (Index i = 0; i < 2; ++i) prev.weights.push_back(MatrixXd::Ones(3, 6));
  const auto prox = aux_proximal(w, ds, lap, prev, 1e12);
  for (Index i = 0; i < 2; ++i)
    CHECK(((prox.trial(i) - exact.trial(i)).array().abs() <= 1e-6 * exact.trial(i).array()).all());
}

TEST_CASE("mode names") {
  CHECK(aux_mode_from_string("exact") == AuxMode::exact);
  CHECK(aux_mode_from_string("proximal") == AuxMode::proximal);
  CHECK(to_string(AuxMode::proximal) == "proximal");
  CHECK_THROWS(aux_mode_from_string("nope"));
  CHECK(Density::from_name("huber").kind() == DensityKind::huber);
  CHECK_THROWS(Density::from_name("gauss"));
}
