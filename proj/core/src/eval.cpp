#include "msica/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "msica/errors.hpp"

namespace msica {

double amari_distance(const MatrixXd& w, const MatrixXd& mixing) {
  if (w.rows() != w.cols() || mixing.rows() != mixing.cols() || w.cols() != mixing.rows())
    throw DatasetError("amari_distance: shape mismatch");
  const MatrixXd R = (w * mixing).cwiseAbs();
  const Index n = R.rows();
  double total = 0.0;
  for (Index j = 0; j < n; ++j) {
    const double row_max = R.row(j).maxCoeff();
    const double col_max = R.col(j).maxCoeff();
    if (!(row_max > 0.0) || !(col_max > 0.0))
      throw NumericalError("amari_distance: singular product");
    total += R.row(j).sum() / row_max - 1.0;
    total += R.col(j).sum() / col_max - 1.0;
  }
  return total;
}

Whitening whiten(const MatrixXd& x) {
  const Index samples = x.cols();
  if (samples < 2) throw NumericalError("whiten: need at least two samples");
  Whitening out;
  out.mean = x.rowwise().mean();
  const MatrixXd centered = x.colwise() - out.mean;
  const MatrixXd cov = centered * centered.transpose() / static_cast<double>(samples);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
  const VectorXd& vals = eig.eigenvalues();
  if (!(vals.minCoeff() > 1e-12 * std::max(vals.maxCoeff(), 1e-300)))
    throw NumericalError("whiten: covariance is rank deficient");
  const MatrixXd& vecs = eig.eigenvectors();
  out.transform = vecs * vals.cwiseInverse().cwiseSqrt().asDiagonal() * vecs.transpose();
  out.whitened = out.transform * centered;
  return out;
}

FobiResult fobi(const MatrixXd& x) {
  if (x.cols() < x.rows()) throw NumericalError("fobi: need at least C samples");
  const Whitening white = whiten(x);
  const MatrixXd& xw = white.whitened;
  const Index samples = xw.cols();
  const Index n = xw.rows();

  const VectorXd sq_norms = xw.colwise().squaredNorm().transpose();
  const MatrixXd weighted = xw.array().rowwise() * sq_norms.transpose().array();
  const MatrixXd Q = weighted * xw.transpose() / static_cast<double>(samples);

  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(Q);
  // Eigen returns ascending order; flip to descending.
  const VectorXd vals = eig.eigenvalues().reverse();
  const MatrixXd vecs = eig.eigenvectors().rowwise().reverse();

  FobiResult result;
  result.eigenvalues = vals;
  result.unmixing = vecs.transpose() * white.transform;

  // Per-sample contributions q_js = ||x_s||^2 (e_j^T x_s)^2 give standard errors.
  const MatrixXd proj = vecs.transpose() * xw;
  MatrixXd contrib = proj.array().square().rowwise() * sq_norms.transpose().array();
  result.min_gap = std::numeric_limits<double>::infinity();
  const double scale = std::max(vals.cwiseAbs().maxCoeff(), 1e-300);
  for (Index j = 0; j + 1 < n; ++j) {
    const double gap = vals(j) - vals(j + 1);
    result.min_gap = std::min(result.min_gap, gap);
    const VectorXd diff = (contrib.row(j) - contrib.row(j + 1)).transpose();
    const double centered_var = (diff.array() - diff.mean()).square().sum() /
                                static_cast<double>(std::max<Index>(samples - 1, 1));
    const double se = std::sqrt(centered_var / static_cast<double>(samples));
    if (gap <= 1e-8 * scale || gap < 3.0 * se) result.degenerate = true;
  }
  if (n == 1) result.min_gap = 0.0;
  return result;
}

double success_rate(std::span<const double> values, double threshold) {
  if (values.empty()) throw DatasetError("success_rate: empty list");
  const auto hits = std::count_if(values.begin(), values.end(),
                                  [threshold](double v) { return v < threshold; });
  return static_cast<double>(hits) / static_cast<double>(values.size());
}

double mean_of(std::span<const double> values) {
  if (values.empty()) throw DatasetError("mean_of: empty list");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double median_of(std::vector<double> values) {
  if (values.empty()) throw DatasetError("median_of: empty list");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

std::vector<TargetMetric> prediction_metrics(const UnmixingState& w,
                                             std::span<const SupervisedTargetModel> models,
                                             const Dataset& dataset, std::span<const Index> trials,
                                             const FeatureMap& fmap) {
  if (trials.empty()) throw DatasetError("prediction_metrics: no trials");
  if (static_cast<Index>(models.size()) != dataset.n_targets())
    throw DatasetError("prediction_metrics: one model per target required");
  std::vector<TargetMetric> out;
  for (Index m = 0; m < dataset.n_targets(); ++m) {
    const auto& target = dataset.schema()[static_cast<std::size_t>(m)];
    const auto& model = models[static_cast<std::size_t>(m)];
    double acc = 0.0;
    for (Index i : trials) {
      const Trial& trial = dataset.trial(i);
      const double pred = predict(model, source_signal(w, trial.signal, m), fmap);
      if (target.kind == TargetKind::categorical) {
        acc += pred == trial.labels(m) ? 1.0 : 0.0;
      } else {
        acc += (pred - trial.labels(m)) * (pred - trial.labels(m));
      }
    }
    acc /= static_cast<double>(trials.size());
    out.push_back({target.name, target.kind,
                   target.kind == TargetKind::categorical ? acc : std::sqrt(acc)});
  }
  return out;
}

HoldoutSplit holdout_split(Index n_trials, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("holdout fraction must be in [0, 1)");
  const auto test = static_cast<Index>(std::ceil(fraction * static_cast<double>(n_trials)));
  if (n_trials - test < 1) throw ConfigError("holdout leaves no training trials");
  HoldoutSplit split;
  for (Index i = 0; i < n_trials; ++i) (i < n_trials - test ? split.train : split.test).push_back(i);
  return split;
}

}  // namespace msica
