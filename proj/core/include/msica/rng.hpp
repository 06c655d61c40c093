#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace msica {

// SplitMix64 step; used for seeding and for deriving independent sub-seeds.
std::uint64_t splitmix64(std::uint64_t& state);

// Mixes a base seed with a stream id so that per-trial / per-purpose streams
// are order independent.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// xoshiro256++ with platform-independent derived distributions. The standard
// library distributions are implementation defined, so normal/laplace draws
// are built here on top of the raw 64-bit stream.
class Xoshiro256pp {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256pp(std::uint64_t seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()();

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  // Uniform on the open interval (0, 1).
  double uniform_open();
  // Uniform integer in [0, bound), unbiased (rejection sampling).
  std::uint64_t bounded(std::uint64_t bound);
  // Standard normal via the Marsaglia polar method.
  double normal();
  // Laplace(0, 1) via inverse CDF.
  double laplace();

 private:
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Draws k distinct indices uniformly from [0, n) with a partial Fisher-Yates
// shuffle and returns them sorted ascending, so downstream reductions run in
// a fixed order.
std::vector<Eigen::Index> sample_without_replacement(Xoshiro256pp& rng, Eigen::Index n,
                                                     Eigen::Index k);

std::vector<Eigen::Index> all_indices(Eigen::Index n);

}  // namespace msica
