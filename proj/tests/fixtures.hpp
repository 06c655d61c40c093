#pragma once

#include "msica/solver.hpp"
#include "msica/synthgen.hpp"

namespace fixture {

// Small supervised instance used by the descent and proximal checks:
// (N, C, T, M) = (8, 3, 256, 1), Laplace sources.
inline msica::GeneratedData descent_data(std::uint64_t seed = 1) {
  msica::RecipeOverrides o;
  o.n_trials = 8;
  o.channels = 3;
  o.samples = 256;
  o.n_targets = 1;
  return msica::gen_dataset(msica::Recipe::supervision, o, seed);
}

inline msica::SolverConfig descent_config(long iterations = 200) {
  msica::SolverConfig c;
  c.iterations = iterations;
  c.lambda = 1e-6;
  c.mu = 0.0;
  c.eta_u = std::nullopt;
  c.eta_p = std::nullopt;
  c.optimizer.rule = msica::OptimizerRule::sgd_wd;
  c.aux_mode = msica::AuxMode::exact;
  c.lemma1_order = true;
  c.seed = 3;
  return c;
}

}  // namespace fixture
