#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "msica/data_model.hpp"
#include "msica/supervision.hpp"

namespace msica {

// N trials of C x T iid Laplace(0, 1) entries. Each trial draws from its own
// stream derived from (seed, trial), filled row-major.
std::vector<MatrixXd> gen_laplace_sources(Index n_trials, Index channels, Index samples,
                                          std::uint64_t seed);

// Standard-normal C x C mixing, redrawn (at most 100 times) while the
// condition number exceeds 1e8.
MixingGroundTruth gen_gaussian_mixing(Index channels, std::uint64_t seed);

// A = V diag(sigma) V^T with V the eigenvectors of the C x C Hilbert matrix and
// sigma geometrically spaced on [1, e^kappa], so cond(A) = e^kappa. The seed
// picks which eigenvector receives which singular value.
MixingGroundTruth gen_hilbert_mixing(Index channels, double kappa, std::uint64_t seed);

double condition_number(const MatrixXd& m);

struct RegressionTargets {
  MatrixXd labels;                // N x M
  std::vector<VectorXd> theta;    // M vectors of length d
};

// y_{i,m} = <theta_m, phi(s_{i,m})> with standard-normal theta_m, noiseless.
RegressionTargets gen_regression_targets(const std::vector<MatrixXd>& sources, Index n_targets,
                                         const FeatureMapConfig& fmap, std::uint64_t seed);

// Same labels for a caller-supplied theta (one vector per target).
MatrixXd regression_labels(const std::vector<MatrixXd>& sources,
                           const std::vector<VectorXd>& theta, const FeatureMapConfig& fmap);

enum class Recipe { multi_trial, supervision };

std::string to_string(Recipe recipe);
Recipe recipe_from_string(const std::string& name);

struct RecipeOverrides {
  std::optional<Index> n_trials;
  std::optional<Index> channels;
  std::optional<Index> samples;
  std::optional<Index> n_targets;
  std::optional<double> kappa;
  FeatureMapConfig features;
};

struct GeneratedData {
  Dataset dataset;
  MixingGroundTruth mixing;
  std::vector<MatrixXd> sources;
  std::vector<VectorXd> theta;  // empty when M = 0
  std::map<std::string, std::string> parameters;  // fully resolved, for manifests
};

// multi_trial: defaults (N, C, T, M) = (80, 10, 1000, 0), Gaussian mixing.
// supervision: defaults (6000, 10, 1000, 3), Hilbert mixing with kappa = 5.
// Either recipe builds z_i = A s_i.
GeneratedData gen_dataset(Recipe recipe, const RecipeOverrides& overrides, std::uint64_t seed);

}  // namespace msica
