#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "msica/rng.hpp"

using msica::Xoshiro256pp;

TEST_CASE("same seed gives the same stream") {
  Xoshiro256pp a(42);
  Xoshiro256pp b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a() == b());
}

TEST_CASE("derived seeds differ per stream and are stable") {
  CHECK(msica::derive_seed(1, 0) != msica::derive_seed(1, 1));
  CHECK(msica::derive_seed(1, 0) != msica::derive_seed(2, 0));
  CHECK(msica::derive_seed(7, 3) == msica::derive_seed(7, 3));
}

TEST_CASE("uniform lies in [0, 1) and open variant excludes 0") {
  Xoshiro256pp rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double v = rng.uniform_open();
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("bounded draws cover the range evenly") {
  Xoshiro256pp rng(11);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++counts[rng.bounded(7)];
  for (int c : counts) CHECK(std::abs(c - n / 7) < 5 * std::sqrt(n / 7.0));
}

TEST_CASE("normal and laplace moments") {
  Xoshiro256pp rng(5);
  const int n = 200000;
  double sn = 0, sn2 = 0, sl = 0, sl_abs = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sn += x;
    sn2 += x * x;
    const double y = rng.laplace();
    sl += y;
    sl_abs += std::abs(y);
  }
  CHECK(std::abs(sn / n) < 4.0 / std::sqrt(n));
  CHECK(std::abs(sn2 / n - 1.0) < 0.02);
  CHECK(std::abs(sl / n) < 4.0 * std::sqrt(2.0) / std::sqrt(n));
  CHECK(std::abs(sl_abs / n - 1.0) < 0.01);
}

TEST_CASE("sampling without replacement is sorted, distinct and uniform") {
  Xoshiro256pp rng(9);
  std::vector<int> hits(10, 0);
  const int reps = 20000;
  for (int r = 0; r < reps; ++r) {
    const auto s = msica::sample_without_replacement(rng, 10, 3);
    REQUIRE(s.size() == 3);
    CHECK(std::is_sorted(s.begin(), s.end()));
    CHECK(std::set<Eigen::Index>(s.begin(), s.end()).size() == 3);
    for (auto i : s) ++hits[static_cast<std::size_t>(i)];
  }
  const double expected = reps * 0.3;
  for (int h : hits) CHECK(std::abs(h - expected) < 5 * std::sqrt(expected));
}

TEST_CASE("full sample returns every index") {
  Xoshiro256pp rng(1);
  const auto s = msica::sample_without_replacement(rng, 5, 5);
  CHECK(s == msica::all_indices(5));
}
