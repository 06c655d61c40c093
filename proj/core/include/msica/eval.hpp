#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <span>
#include <vector>

#include "msica/data_model.hpp"
#include "msica/supervision.hpp"

namespace msica {

// Amari distance between an unmixing W and the true mixing A on R = |W A|:
//   sum_j [(sum_c R_jc / max_c' R_jc' - 1) + (sum_c R_cj / max_c' R_c'j - 1)].
// Zero iff W A is a scaled permutation.
double amari_distance(const MatrixXd& w, const MatrixXd& mixing);

struct Whitening {
  MatrixXd whitened;  // V (x - mean)
  MatrixXd transform;  // V = E diag(lambda^{-1/2}) E^T
  VectorXd mean;
};

// Throws NumericalError when the sample covariance is rank deficient.
Whitening whiten(const MatrixXd& x);

struct FobiResult {
  MatrixXd unmixing;    // E^T V, rows in descending eigenvalue order
  VectorXd eigenvalues;  // of the kurtosis-weighted covariance, descending
  bool degenerate = false;
  double min_gap = 0.0;
};

// Fourth-order blind identification. `degenerate` flags eigenvalue ties of
// Q = (1/S) sum ||x~||^2 x~ x~^T: a gap below 1e-8 relative, or below three
// standard errors of the sample eigenvalue difference.
FobiResult fobi(const MatrixXd& x);

// Fraction of values strictly below threshold. Throws on an empty list.
double success_rate(std::span<const double> values, double threshold);

double mean_of(std::span<const double> values);
double median_of(std::vector<double> values);

struct TargetMetric {
  std::string target;
  TargetKind kind = TargetKind::continuous;
  double value = 0.0;  // accuracy for categorical, RMSE for continuous
};

struct EvalReport {
  std::optional<double> amari;
  std::vector<TargetMetric> metrics;
  std::uint64_t seed = 0;
};

// Accuracy / RMSE of the learned models on the given trials, with sources
// s = W_m z_i.
std::vector<TargetMetric> prediction_metrics(const UnmixingState& w,
                                             std::span<const SupervisedTargetModel> models,
                                             const Dataset& dataset, std::span<const Index> trials,
                                             const FeatureMap& fmap);

// Deterministic split: the last ceil(fraction * N) trials are held out.
struct HoldoutSplit {
  std::vector<Index> train;
  std::vector<Index> test;
};
HoldoutSplit holdout_split(Index n_trials, double fraction);

}  // namespace msica
