#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "msica/data_model.hpp"

namespace msica {

struct FeatureMapConfig {
  Index window = 64;
  Index hop = 32;
  bool log_power = false;
  double log_eps = 1e-6;

  Index n_bins() const { return window / 2 + 1; }
  Index n_windows(Index samples) const;
  Index output_dim(Index samples) const { return n_windows(samples) * n_bins(); }
  // Throws ConfigError unless 1 <= window <= samples, hop >= 1, log_eps > 0.
  void validate(Index samples) const;
};

// Short-time power spectrum of a length-T signal: for each window j the
// real-DFT powers |X_k|^2, k = 0..w/2, of s[j*hop, j*hop + w), optionally
// log(|X_k|^2 + eps). Window-major output layout.
class FeatureMap {
 public:
  FeatureMap(const FeatureMapConfig& config, Index samples);

  const FeatureMapConfig& config() const { return config_; }
  Index samples() const { return samples_; }
  Index dim() const { return dim_; }

  VectorXd operator()(const VectorXd& s) const;

  // J(s)^T v: pulls a feature-space covector back to the signal.
  VectorXd vjp(const VectorXd& s, const VectorXd& v) const;

  // Features and the pullback in one pass (the DFT is shared).
  void evaluate(const VectorXd& s, VectorXd& features, std::vector<double>& re,
                std::vector<double>& im) const;
  VectorXd vjp_from(const std::vector<double>& re, const std::vector<double>& im,
                    const VectorXd& v) const;

  // (sum_k c_k Hess phi_k) x for the plain power map (no log), where
  // c is a feature-space vector. Used for curvature bounds.
  VectorXd weighted_hessian_product(const VectorXd& c, const VectorXd& x) const;

 private:
  FeatureMapConfig config_;
  Index samples_;
  Index windows_;
  Index bins_;
  Index dim_;
  MatrixXd cos_;  // bins x window
  MatrixXd sin_;
};

VectorXd feature_map(const VectorXd& s, const FeatureMapConfig& config);

enum class ModelKind { squared_regression, softmax_classification };

// Linear-in-features predictor. theta is 1 x d for regression and
// n_classes x d for classification (logits theta * phi, no bias).
struct SupervisedTargetModel {
  ModelKind kind = ModelKind::squared_regression;
  MatrixXd theta;

  static SupervisedTargetModel for_target(const TargetSchema& target, Index feature_dim);
  Index n_classes() const { return kind == ModelKind::softmax_classification ? theta.rows() : 0; }
};

struct LossGrads {
  double loss = 0.0;
  VectorXd grad_s;
  MatrixXd grad_theta;
};

LossGrads loss_and_grads(const SupervisedTargetModel& model, const VectorXd& s, double y,
                         const FeatureMap& fmap);

double supervised_loss(const SupervisedTargetModel& model, const VectorXd& s, double y,
                       const FeatureMap& fmap);

// Regression: theta . phi(s). Classification: argmax class index.
double predict(const SupervisedTargetModel& model, const VectorXd& s, const FeatureMap& fmap);

enum class OptimizerRule { sgd_wd, adamw };

std::string to_string(OptimizerRule rule);
OptimizerRule optimizer_rule_from_string(std::string_view name);

struct OptimizerSettings {
  OptimizerRule rule = OptimizerRule::sgd_wd;
  double eta_p = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  OptimizerSettings settings;
  MatrixXd m;
  MatrixXd v;
  long step = 0;

  OptimizerState() = default;
  OptimizerState(const OptimizerSettings& s, Index rows, Index cols);
};

// sgd_wd: (1 - eta mu) theta - eta g.
// adamw:  (1 - eta mu) theta - eta m_hat / (sqrt(v_hat) + eps), bias corrected.
MatrixXd optimizer_step(OptimizerState& state, const MatrixXd& theta, const MatrixXd& grad,
                        double mu);

// s = W_{m.}^T z_i, the m-th candidate source of trial i.
VectorXd source_signal(const UnmixingState& w, const MatrixXd& z, Index m);

// (1/|batch|) sum_{i in batch} grad_theta l_m(W_m z_i, y_{i,m}, theta_m).
MatrixXd batch_param_grad(const SupervisedTargetModel& model, Index target,
                          const UnmixingState& w, std::span<const Index> batch,
                          const Dataset& dataset, const FeatureMap& fmap);

// Lipschitz constant of theta -> grad_theta of the averaged loss over the
// given sources: largest eigenvalue of (1/n) sum phi phi^T (times 1/2 for
// softmax), by power iteration.
double estimate_theta_lipschitz(const SupervisedTargetModel& model,
                                std::span<const VectorXd> sources, const FeatureMap& fmap,
                                int iterations = 50);

// Local Lipschitz constant of s -> grad_s l over the given (source, label)
// pairs (max over pairs). Plain-power regression uses the exact split
// ||J^T theta||^2 + |residual| ||sum_k theta_k Hess phi_k||; other models
// power-iterate finite-difference Hessian-vector products.
double estimate_source_lipschitz(const SupervisedTargetModel& model,
                                 std::span<const VectorXd> sources, std::span<const double> labels,
                                 const FeatureMap& fmap, int iterations = 50);

}  // namespace msica
