#pragma once

#include <functional>
#include <span>
#include <vector>

#include "msica/data_model.hpp"
#include "msica/supervision.hpp"

namespace msica {

// A_c = (1/(n tau)) sum_{i in trials} sum_{t in times} U_{i,c,t} z_{i,t} z_{i,t}^T.
// With every trial and time index this is the full-batch matrix (1/(N T)).
MatrixXd compute_A_c(const AuxTensor& aux, const Dataset& dataset, Index c,
                     std::span<const Index> trials, std::span<const Index> times);

// C x C supervision gradient matrix. Row m < M is
//   (1/n) sum_{i in trials} (T/tau) sum_{t in times} [grad_s l_m(W_m z_i)]_t z_{i,t}^T,
// rows >= M are zero. lambda is not applied here.
MatrixXd compute_B(const UnmixingState& w, std::span<const SupervisedTargetModel> models,
                   const Dataset& dataset, std::span<const Index> trials,
                   std::span<const Index> times, const FeatureMap& fmap);

// Minimizer of h(r) = r^T K r / 2 - log|r_c| - <b, r> with r_c > 0.
struct RowSolution {
  VectorXd r;
  double r_cc = 0.0;
};

RowSolution solve_row(const MatrixXd& K, const VectorXd& b, Index c);

// Replaces row c of W by the exact minimizer of the per-iteration objective
// restricted to that row, through W_c <- r^T W with
//   K = W (A_c + I/eta_u) W^T,  b = W (W_c/eta_u - lambda B_c).
// eta_u may be +infinity. Throws NumericalError if K is not positive definite.
UnmixingState row_update(const UnmixingState& previous, const MatrixXd& A_c, const MatrixXd& B,
                         Index c, double eta_u, double lambda);

using AcProvider = std::function<MatrixXd(Index c)>;

// Rows 0..C-1 in order, each update consuming the previous intermediate and the
// shared B. A_c is requested lazily, one row at a time.
UnmixingState cyclic_sweep(const UnmixingState& previous, const AcProvider& A_of,
                           const MatrixXd& B, double eta_u, double lambda);
UnmixingState cyclic_sweep(const UnmixingState& previous, std::span<const MatrixXd> A_set,
                           const MatrixXd& B, double eta_u, double lambda);

// L(W) + 1/2 sum_c W_c^T A_c W_c + lambda <B, W> + ||W - W_anchor||_F^2 / (2 eta_u).
double per_iteration_objective(const UnmixingState& w, const MatrixXd& anchor,
                               std::span<const MatrixXd> A_set, const MatrixXd& B, double eta_u,
                               double lambda);

}  // namespace msica
