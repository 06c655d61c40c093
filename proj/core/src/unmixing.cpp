#include "msica/unmixing.hpp"

#include <cmath>

#include <Eigen/Cholesky>

#include "msica/errors.hpp"

namespace msica {

MatrixXd compute_A_c(const AuxTensor& aux, const Dataset& dataset, Index c,
                     std::span<const Index> trials, std::span<const Index> times) {
  if (trials.empty() || times.empty()) throw DatasetError("compute_A_c: empty batch");
  const Index channels = dataset.channels();
  const bool full_time = static_cast<Index>(times.size()) == dataset.samples();
  MatrixXd acc = MatrixXd::Zero(channels, channels);
  MatrixXd weighted(channels, static_cast<Index>(times.size()));
  MatrixXd gathered(channels, static_cast<Index>(times.size()));
  for (Index i : trials) {
    const MatrixXd& z = dataset.trial(i).signal;
    const auto u = aux.trial(i).row(c);
    if (full_time) {
      weighted = z.array().rowwise() * u.array();
      acc.noalias() += weighted * z.transpose();
    } else {
      for (std::size_t j = 0; j < times.size(); ++j) {
        const auto col = static_cast<Index>(j);
        gathered.col(col) = z.col(times[j]);
        weighted.col(col) = u(times[j]) * gathered.col(col);
      }
      acc.noalias() += weighted * gathered.transpose();
    }
  }
  return acc / (static_cast<double>(trials.size()) * static_cast<double>(times.size()));
}

MatrixXd compute_B(const UnmixingState& w, std::span<const SupervisedTargetModel> models,
                   const Dataset& dataset, std::span<const Index> trials,
                   std::span<const Index> times, const FeatureMap& fmap) {
  if (trials.empty() || times.empty()) throw DatasetError("compute_B: empty batch");
  const Index channels = dataset.channels();
  const Index targets = dataset.n_targets();
  if (static_cast<Index>(models.size()) != targets)
    throw DatasetError("compute_B: one model per target required");
  const bool full_time = static_cast<Index>(times.size()) == dataset.samples();
  const double time_scale =
      static_cast<double>(dataset.samples()) / static_cast<double>(times.size());

  MatrixXd B = MatrixXd::Zero(channels, channels);
  VectorXd picked(static_cast<Index>(times.size()));
  MatrixXd gathered(channels, static_cast<Index>(times.size()));
  for (Index m = 0; m < targets; ++m) {
    RowVectorXd row = RowVectorXd::Zero(channels);
    for (Index i : trials) {
      const Trial& trial = dataset.trial(i);
      const VectorXd s = source_signal(w, trial.signal, m);
      const VectorXd grad = loss_and_grads(models[static_cast<std::size_t>(m)], s,
                                           trial.labels(m), fmap)
                                .grad_s;
      if (full_time) {
        row.noalias() += time_scale * (trial.signal * grad).transpose();
      } else {
        for (std::size_t j = 0; j < times.size(); ++j) {
          picked(static_cast<Index>(j)) = grad(times[j]);
          gathered.col(static_cast<Index>(j)) = trial.signal.col(times[j]);
        }
        row.noalias() += time_scale * (gathered * picked).transpose();
      }
    }
    B.row(m) = row / static_cast<double>(trials.size());
  }
  return B;
}

RowSolution solve_row(const MatrixXd& K, const VectorXd& b, Index c) {
  Eigen::LLT<MatrixXd> llt(K);
  if (llt.info() != Eigen::Success)
    throw NumericalError("row update: K is not positive definite");
  const VectorXd unit = VectorXd::Unit(K.rows(), c);
  const VectorXd k_inv_e = llt.solve(unit);
  const VectorXd k_inv_b = llt.solve(b);
  const double diag = k_inv_e(c);
  const double proj = k_inv_b(c);
  if (!(diag > 0.0) || !std::isfinite(diag) || !k_inv_b.allFinite())
    throw NumericalError("row update: K is numerically singular");
  RowSolution sol;
  sol.r_cc = std::sqrt(diag + 0.25 * proj * proj) + 0.5 * proj;
  if (!(sol.r_cc > 0.0)) throw NumericalError("row update: non-positive r_cc");
  sol.r = k_inv_e / sol.r_cc + k_inv_b;
  return sol;
}

UnmixingState row_update(const UnmixingState& previous, const MatrixXd& A_c, const MatrixXd& B,
                         Index c, double eta_u, double lambda) {
  const MatrixXd& W = previous.matrix();
  const Index n = W.rows();
  if (A_c.rows() != n || A_c.cols() != n || B.rows() != n || B.cols() != n)
    throw DatasetError("row_update: shape mismatch");
  if (!(eta_u > 0.0)) throw ConfigError("eta_u must be positive");
  const double prox = 1.0 / eta_u;  // zero when eta_u is infinite

  MatrixXd inner = A_c;
  inner.diagonal().array() += prox;
  MatrixXd K = W * inner * W.transpose();
  K = 0.5 * (K + K.transpose());
  const VectorXd target = prox * W.row(c).transpose() - lambda * B.row(c).transpose();
  const VectorXd b = W * target;

  const RowSolution sol = solve_row(K, b, c);
  const RowVectorXd row = sol.r.transpose() * W;
  return previous.with_row(c, row, std::log(sol.r_cc));
}

UnmixingState cyclic_sweep(const UnmixingState& previous, const AcProvider& A_of,
                           const MatrixXd& B, double eta_u, double lambda) {
  UnmixingState current = previous;
  for (Index c = 0; c < previous.dim(); ++c) {
    const MatrixXd A_c = A_of(c);
    current = row_update(current, A_c, B, c, eta_u, lambda);
  }
  return current;
}

UnmixingState cyclic_sweep(const UnmixingState& previous, std::span<const MatrixXd> A_set,
                           const MatrixXd& B, double eta_u, double lambda) {
  if (static_cast<Index>(A_set.size()) != previous.dim())
    throw DatasetError("cyclic_sweep: need one A_c per row");
  return cyclic_sweep(
      previous, [&](Index c) { return A_set[static_cast<std::size_t>(c)]; }, B, eta_u, lambda);
}

double per_iteration_objective(const UnmixingState& w, const MatrixXd& anchor,
                               std::span<const MatrixXd> A_set, const MatrixXd& B, double eta_u,
                               double lambda) {
  const MatrixXd& W = w.matrix();
  double value = w.neg_log_abs_det();
  for (Index c = 0; c < W.rows(); ++c) {
    const VectorXd row = W.row(c).transpose();
    value += 0.5 * row.dot(A_set[static_cast<std::size_t>(c)] * row);
  }
  value += lambda * (B.array() * W.array()).sum();
  if (std::isfinite(eta_u)) value += (W - anchor).squaredNorm() / (2.0 * eta_u);
  return value;
}

}  // namespace msica
