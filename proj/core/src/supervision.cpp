#include "msica/supervision.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "msica/errors.hpp"

namespace msica {

Index FeatureMapConfig::n_windows(Index samples) const {
  if (window < 1 || hop < 1 || samples < window) return 0;
  return (samples - window) / hop + 1;
}

void FeatureMapConfig::validate(Index samples) const {
  if (window < 1) throw ConfigError("feature window must be positive");
  if (hop < 1) throw ConfigError("feature hop must be positive");
  if (!(log_eps > 0.0)) throw ConfigError("log_eps must be positive");
  if (samples < window)
    throw ConfigError("feature window (" + std::to_string(window) + ") exceeds samples (" +
                      std::to_string(samples) + ")");
}

FeatureMap::FeatureMap(const FeatureMapConfig& config, Index samples)
    : config_(config), samples_(samples) {
  config_.validate(samples);
  windows_ = config_.n_windows(samples);
  bins_ = config_.n_bins();
  dim_ = windows_ * bins_;
  const Index w = config_.window;
  cos_.resize(bins_, w);
  sin_.resize(bins_, w);
  for (Index k = 0; k < bins_; ++k) {
    for (Index n = 0; n < w; ++n) {
      // Reduce k*n mod w first so the angle stays exact for large windows.
      const double angle = 2.0 * std::numbers::pi * static_cast<double>((k * n) % w) /
                           static_cast<double>(w);
      cos_(k, n) = std::cos(angle);
      sin_(k, n) = std::sin(angle);
    }
  }
}

void FeatureMap::evaluate(const VectorXd& s, VectorXd& features, std::vector<double>& re,
                          std::vector<double>& im) const {
  if (s.size() != samples_) throw DatasetError("feature_map: signal length mismatch");
  features.resize(dim_);
  re.assign(static_cast<std::size_t>(dim_), 0.0);
  im.assign(static_cast<std::size_t>(dim_), 0.0);
  const Index w = config_.window;
  for (Index j = 0; j < windows_; ++j) {
    const auto segment = s.segment(j * config_.hop, w);
    const VectorXd a = cos_ * segment;
    const VectorXd b = sin_ * segment;
    for (Index k = 0; k < bins_; ++k) {
      const Index idx = j * bins_ + k;
      re[static_cast<std::size_t>(idx)] = a(k);
      im[static_cast<std::size_t>(idx)] = b(k);
      const double power = a(k) * a(k) + b(k) * b(k);
      features(idx) = config_.log_power ? std::log(power + config_.log_eps) : power;
    }
  }
}

VectorXd FeatureMap::operator()(const VectorXd& s) const {
  VectorXd features;
  std::vector<double> re;
  std::vector<double> im;
  evaluate(s, features, re, im);
  return features;
}

VectorXd FeatureMap::vjp_from(const std::vector<double>& re, const std::vector<double>& im,
                              const VectorXd& v) const {
  VectorXd grad = VectorXd::Zero(samples_);
  VectorXd ca(bins_);
  VectorXd cb(bins_);
  for (Index j = 0; j < windows_; ++j) {
    for (Index k = 0; k < bins_; ++k) {
      const auto idx = static_cast<std::size_t>(j * bins_ + k);
      double scale = 2.0 * v(static_cast<Index>(idx));
      if (config_.log_power) scale /= re[idx] * re[idx] + im[idx] * im[idx] + config_.log_eps;
      ca(k) = scale * re[idx];
      cb(k) = scale * im[idx];
    }
    grad.segment(j * config_.hop, config_.window).noalias() +=
        cos_.transpose() * ca + sin_.transpose() * cb;
  }
  return grad;
}

VectorXd FeatureMap::vjp(const VectorXd& s, const VectorXd& v) const {
  VectorXd features;
  std::vector<double> re;
  std::vector<double> im;
  evaluate(s, features, re, im);
  return vjp_from(re, im, v);
}

VectorXd FeatureMap::weighted_hessian_product(const VectorXd& c, const VectorXd& x) const {
  // Hess |X_k|^2 = 2 (cos_k cos_k^T + sin_k sin_k^T) on the window's samples.
  VectorXd out = VectorXd::Zero(samples_);
  for (Index j = 0; j < windows_; ++j) {
    const auto segment = x.segment(j * config_.hop, config_.window);
    VectorXd a = cos_ * segment;
    VectorXd b = sin_ * segment;
    for (Index k = 0; k < bins_; ++k) {
      const double weight = 2.0 * c(j * bins_ + k);
      a(k) *= weight;
      b(k) *= weight;
    }
    out.segment(j * config_.hop, config_.window).noalias() +=
        cos_.transpose() * a + sin_.transpose() * b;
  }
  return out;
}

VectorXd feature_map(const VectorXd& s, const FeatureMapConfig& config) {
  return FeatureMap(config, s.size())(s);
}

SupervisedTargetModel SupervisedTargetModel::for_target(const TargetSchema& target,
                                                        Index feature_dim) {
  SupervisedTargetModel model;
  if (target.kind == TargetKind::categorical) {
    model.kind = ModelKind::softmax_classification;
    model.theta = MatrixXd::Zero(target.n_classes, feature_dim);
  } else {
    model.kind = ModelKind::squared_regression;
    model.theta = MatrixXd::Zero(1, feature_dim);
  }
  return model;
}

namespace {

// Gradient of the loss w.r.t. the model output (prediction or logits).
struct OutputGrad {
  double loss;
  VectorXd d_output;
};

OutputGrad output_grad(const SupervisedTargetModel& model, const VectorXd& features, double y) {
  const VectorXd out = model.theta * features;
  if (model.kind == ModelKind::squared_regression) {
    const double residual = out(0) - y;
    return {0.5 * residual * residual, VectorXd::Constant(1, residual)};
  }
  const Index classes = model.theta.rows();
  const auto label = static_cast<Index>(y);
  if (y != std::floor(y) || label < 0 || label >= classes)
    throw DatasetError("class index out of range");
  const double peak = out.maxCoeff();
  const VectorXd shifted = (out.array() - peak).exp();
  const double total = shifted.sum();
  VectorXd probs = shifted / total;
  const double loss = std::log(total) + peak - out(label);
  probs(label) -= 1.0;
  return {loss, probs};
}

}  // namespace

LossGrads loss_and_grads(const SupervisedTargetModel& model, const VectorXd& s, double y,
                         const FeatureMap& fmap) {
  VectorXd features;
  std::vector<double> re;
  std::vector<double> im;
  fmap.evaluate(s, features, re, im);
  if (model.theta.cols() != features.size())
    throw DatasetError("model parameter dimension does not match feature dimension");
  OutputGrad og = output_grad(model, features, y);
  LossGrads result;
  result.loss = og.loss;
  result.grad_theta = og.d_output * features.transpose();
  result.grad_s = fmap.vjp_from(re, im, model.theta.transpose() * og.d_output);
  return result;
}

double supervised_loss(const SupervisedTargetModel& model, const VectorXd& s, double y,
                       const FeatureMap& fmap) {
  return output_grad(model, fmap(s), y).loss;
}

double predict(const SupervisedTargetModel& model, const VectorXd& s, const FeatureMap& fmap) {
  const VectorXd out = model.theta * fmap(s);
  if (model.kind == ModelKind::squared_regression) return out(0);
  Index best = 0;
  out.maxCoeff(&best);
  return static_cast<double>(best);
}

std::string to_string(OptimizerRule rule) { return rule == OptimizerRule::sgd_wd ? "sgd_wd" : "adamw"; }

OptimizerRule optimizer_rule_from_string(std::string_view name) {
  if (name == "sgd_wd" || name == "sgd") return OptimizerRule::sgd_wd;
  if (name == "adamw") return OptimizerRule::adamw;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

OptimizerState::OptimizerState(const OptimizerSettings& s, Index rows, Index cols)
    : settings(s), m(MatrixXd::Zero(rows, cols)), v(MatrixXd::Zero(rows, cols)) {}

MatrixXd optimizer_step(OptimizerState& state, const MatrixXd& theta, const MatrixXd& grad,
                        double mu) {
  if (theta.rows() != grad.rows() || theta.cols() != grad.cols())
    throw DatasetError("optimizer_step: gradient shape mismatch");
  const auto& s = state.settings;
  const double decay = 1.0 - s.eta_p * mu;
  if (s.rule == OptimizerRule::sgd_wd) {
    ++state.step;
    return decay * theta - s.eta_p * grad;
  }
  if (state.m.rows() != theta.rows() || state.m.cols() != theta.cols()) {
    state.m = MatrixXd::Zero(theta.rows(), theta.cols());
    state.v = MatrixXd::Zero(theta.rows(), theta.cols());
  }
  ++state.step;
  state.m = s.beta1 * state.m + (1.0 - s.beta1) * grad;
  state.v = s.beta2 * state.v + (1.0 - s.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(state.step));
  const MatrixXd m_hat = state.m / c1;
  const MatrixXd v_hat = state.v / c2;
  return decay * theta - s.eta_p * (m_hat.array() / (v_hat.array().sqrt() + s.eps)).matrix();
}

VectorXd source_signal(const UnmixingState& w, const MatrixXd& z, Index m) {
  return (w.matrix().row(m) * z).transpose();
}

MatrixXd batch_param_grad(const SupervisedTargetModel& model, Index target,
                          const UnmixingState& w, std::span<const Index> batch,
                          const Dataset& dataset, const FeatureMap& fmap) {
  if (batch.empty()) throw DatasetError("batch_param_grad: empty batch");
  if (target < 0 || target >= dataset.n_targets())
    throw DatasetError("batch_param_grad: target index out of range");
  MatrixXd total = MatrixXd::Zero(model.theta.rows(), model.theta.cols());
  for (Index i : batch) {
    const Trial& trial = dataset.trial(i);
    const VectorXd features = fmap(source_signal(w, trial.signal, target));
    total += output_grad(model, features, trial.labels(target)).d_output * features.transpose();
  }
  return total / static_cast<double>(batch.size());
}

namespace {

// Largest |eigenvalue| of a symmetric operator by power iteration from a fixed
// deterministic start vector.
template <typename Op>
double power_iteration(Index n, const Op& apply, int iterations) {
  if (n == 0) return 0.0;
  VectorXd x(n);
  for (Index j = 0; j < n; ++j) x(j) = 1.0 + 0.01 * static_cast<double>(j % 7);
  x.normalize();
  double estimate = 0.0;
  for (int it = 0; it < iterations; ++it) {
    VectorXd y = apply(x);
    const double norm = y.norm();
    if (norm == 0.0) return 0.0;
    estimate = norm;
    x = y / norm;
  }
  return estimate;
}

}  // namespace

double estimate_theta_lipschitz(const SupervisedTargetModel& model,
                                std::span<const VectorXd> sources, const FeatureMap& fmap,
                                int iterations) {
  if (sources.empty()) return 0.0;
  MatrixXd features(fmap.dim(), static_cast<Index>(sources.size()));
  for (std::size_t i = 0; i < sources.size(); ++i) features.col(static_cast<Index>(i)) = fmap(sources[i]);
  const double inv_n = 1.0 / static_cast<double>(sources.size());
  const double top = power_iteration(
      fmap.dim(),
      [&](const VectorXd& x) { return VectorXd(features * (features.transpose() * x) * inv_n); },
      iterations);
  return model.kind == ModelKind::squared_regression ? top : 0.5 * top;
}

double estimate_source_lipschitz(const SupervisedTargetModel& model,
                                 std::span<const VectorXd> sources, std::span<const double> labels,
                                 const FeatureMap& fmap, int iterations) {
  double best = 0.0;
  const Index n = fmap.samples();
  if (model.kind == ModelKind::squared_regression && !fmap.config().log_power) {
    const VectorXd theta = model.theta.row(0).transpose();
    const double curvature = power_iteration(
        n, [&](const VectorXd& x) { return fmap.weighted_hessian_product(theta, x); }, iterations);
    for (std::size_t i = 0; i < sources.size(); ++i) {
      const VectorXd& s = sources[i];
      const double residual = theta.dot(fmap(s)) - labels[i];
      const double gauss_newton = fmap.vjp(s, theta).squaredNorm();
      best = std::max(best, gauss_newton + std::abs(residual) * curvature);
    }
    return best;
  }
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const VectorXd& s = sources[i];
    const double y = labels[i];
    const double h = 1e-5 * std::max(1.0, s.norm());
    const double est = power_iteration(
        n,
        [&](const VectorXd& x) {
          const VectorXd plus = loss_and_grads(model, s + h * x, y, fmap).grad_s;
          const VectorXd minus = loss_and_grads(model, s - h * x, y, fmap).grad_s;
          return VectorXd((plus - minus) / (2.0 * h));
        },
        iterations);
    best = std::max(best, est);
  }
  return best;
}

}  // namespace msica
