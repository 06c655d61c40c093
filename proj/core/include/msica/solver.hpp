#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "msica/data_model.hpp"
#include "msica/likelihood.hpp"
#include "msica/supervision.hpp"

namespace msica {

struct SolverConfig {
  long iterations = 100;
  // nullopt means "auto": resolved from the descent guards at W^(0).
  std::optional<double> eta_u = 1.0;
  std::optional<double> eta_p = 1e-3;
  double eta_a = 1.0;
  double lambda = 0.0;
  double mu = 0.0;
  std::string density = "laplace";
  double u_max = kDefaultUMax;
  Index batch_trials = 0;  // 0: all trials
  Index batch_times = 0;   // 0: all samples
  std::uint64_t seed = 0;
  AuxMode aux_mode = AuxMode::exact;
  OptimizerSettings optimizer;  // optimizer.eta_p is overwritten by eta_p
  FeatureMapConfig features;
  long trace_every = 1;
  bool lemma1_order = false;
  double init_scale = 0.01;
  double theta_init_scale = 0.01;
  double lipschitz_theta = 0.0;   // > 0 overrides the estimate
  double lipschitz_source = 0.0;  // > 0 overrides every per-target estimate
  bool record_wall_time = false;
  double holdout = 0.0;  // fraction of trailing trials excluded from fitting

  void validate(const Dims& dims) const;
};

// Descent conditions for the full-batch algorithm:
//   eta_u <= [2 lambda avg_i ||z_i||_2^2 sqrt(sum_m L_m^2)]^{-1}, eta_p <= 1/(L_theta + mu).
struct RateGuards {
  std::vector<double> source_lipschitz;
  double theta_lipschitz = 0.0;
  double mean_sq_spectral_norm = 0.0;
  double w_lipschitz = 0.0;
  double eta_u_max = 0.0;
  double eta_p_max = 0.0;
};

struct LipschitzOverrides {
  double theta = 0.0;
  double source = 0.0;
};

RateGuards rate_guards_from_constants(double mean_sq_spectral_norm,
                                      std::vector<double> source_lipschitz,
                                      double theta_lipschitz, double lambda, double mu);

// Lipschitz constants are estimated at the sources W_m z_i of the current W.
RateGuards compute_rate_guards(const Dataset& dataset,
                               std::span<const SupervisedTargetModel> models,
                               const UnmixingState& w, const FeatureMap& fmap, double lambda,
                               double mu, LipschitzOverrides overrides = {});

// Largest singular value squared, by power iteration on z z^T (tol 1e-8).
double spectral_norm_sq(const MatrixXd& z);

struct TraceRecord {
  long k = 0;
  double loss_unsup = 0.0;  // mean over trials of l0
  double loss_sup = 0.0;    // (lambda/N) sum_{i,m} l_m
  double objective = 0.0;   // F_mu; NaN when f is unavailable
  double amari = 0.0;       // NaN without ground truth
  double wall_ms = 0.0;     // 0 unless record_wall_time
};

struct Trace {
  std::vector<TraceRecord> records;
  bool objective_available = true;

  // Header: k,loss_unsup,loss_sup,F,amari,wall_ms. Optional leading
  // "# ..." comment lines carry the resolved configuration.
  void write_csv(std::ostream& out, const std::vector<std::string>& comments = {}) const;
};

struct ObjectiveParts {
  double loss_unsup = 0.0;
  double loss_sup = 0.0;
  double objective = 0.0;
};

// F_mu(W, theta, U) = L(W) + (1/(N T)) sum [U x^2/2 + f(U)]
//                     + (lambda/N) sum_{i,m} l_m + (lambda mu / 2) ||theta||^2.
ObjectiveParts evaluate_objective(const UnmixingState& w,
                                  std::span<const SupervisedTargetModel> models,
                                  const AuxTensor& aux, const Dataset& dataset,
                                  const Density& density, const FeatureMap* fmap, double lambda,
                                  double mu);

struct IterationView {
  long k;
  const UnmixingState& w;
  const std::vector<SupervisedTargetModel>& models;
  const AuxTensor& aux;
};

using FitObserver = std::function<void(const IterationView&)>;

struct FitResult {
  UnmixingState w;
  UnmixingState w_init;
  std::vector<SupervisedTargetModel> models;
  Trace trace;
  RateGuards guards;
  double eta_u = 0.0;  // resolved rates actually used
  double eta_p = 0.0;
  long iterations_done = 0;
  bool aborted = false;
  std::string abort_reason;
};

// Full-batch block coordinate descent: theta step, U step (exact or
// proximal), B once per iteration, then the cyclic row sweep over W.
FitResult fit_full_batch(const Dataset& dataset, const SolverConfig& config,
                         const std::optional<MixingGroundTruth>& truth = std::nullopt,
                         const FitObserver& observer = {});

// Minibatch variant: each iteration samples n trials and tau samples without
// replacement; g, A_c and B are estimated on the batch and U is refreshed only
// at sampled entries. With n = N and tau = T it reproduces fit_full_batch.
FitResult fit_stochastic(const Dataset& dataset, const SolverConfig& config,
                         const std::optional<MixingGroundTruth>& truth = std::nullopt,
                         const FitObserver& observer = {});

// W^(0) = I + init_scale * G and theta^(0) = theta_init_scale * G', both from
// the seed's init stream. Throws NumericalError if W^(0) is singular.
UnmixingState initial_unmixing(Index channels, const SolverConfig& config);
std::vector<SupervisedTargetModel> initial_models(const Dataset& dataset, const FeatureMap& fmap,
                                                  const SolverConfig& config);

// Flat key=value text. Unknown keys and malformed values throw ConfigError.
SolverConfig parse_solver_config(std::istream& in);
SolverConfig load_solver_config(const std::string& path);
// Canonical key=value lines (sorted keys), round-trippable through the parser.
std::vector<std::string> format_solver_config(const SolverConfig& config);

}  // namespace msica
