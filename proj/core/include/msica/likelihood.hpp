#pragma once

#include <span>
#include <string>
#include <string_view>

#include "msica/data_model.hpp"

namespace msica {

inline constexpr double kDefaultUMax = 1e8;

enum class DensityKind { laplace, huber };

// Super-Gaussian source model e^{-g}. g(sqrt(x)) is increasing and concave,
// which gives g(x) = min_{u >= 0} u x^2 / 2 + f(u). Normalization constants
// are dropped.
class Density {
 public:
  static Density laplace(double u_max = kDefaultUMax);
  static Density huber(double u_max = kDefaultUMax);
  static Density from_name(std::string_view name, double u_max = kDefaultUMax);

  DensityKind kind() const { return kind_; }
  std::string name() const;
  double u_max() const { return u_max_; }

  double g(double x) const;
  double g_prime(double x) const;

  // f from the variational form. Only known in closed form for laplace
  // (f(u) = 1 / (2u)); huber throws.
  bool has_variational_f() const { return kind_ == DensityKind::laplace; }
  double f(double u) const;

  // u x^2 / 2 + f(u): one entry of the variational objective.
  double variational_term(double x, double u) const { return 0.5 * u * x * x + f(u); }

  // g'(x) / x clamped to [0, u_max]; the exact minimizer over u.
  double weight(double x) const;

  // argmin_{u >= 0} u x^2 / 2 + f(u) + (u - u_prev)^2 / (2 eta_a), clamped to
  // [0, u_max]. Safeguarded Newton with bisection fallback.
  double proximal_weight(double x, double u_prev, double eta_a) const;

 private:
  Density(DensityKind kind, double u_max);

  DensityKind kind_;
  double u_max_;
};

enum class AuxMode { exact, proximal };

std::string to_string(AuxMode mode);
AuxMode aux_mode_from_string(std::string_view name);

// l0(W, z) = -log|det W| + (1/T) sum_{c,t} g([Wz]_{c,t}).
double unsup_loss(const UnmixingState& w, const MatrixXd& z, const Density& density);

AuxTensor aux_exact(const UnmixingState& w, const Dataset& dataset, const Density& density);

AuxTensor aux_proximal(const UnmixingState& w, const Dataset& dataset, const Density& density,
                       const AuxTensor& previous, double eta_a);

// In-place update restricted to trials x times (every channel). Entries
// outside the index sets keep their previous value.
void update_aux(AuxTensor& aux, const UnmixingState& w, const Dataset& dataset,
                const Density& density, AuxMode mode, double eta_a, std::span<const Index> trials,
                std::span<const Index> times);

// (1/(N T)) sum_{i,c,t} [U x^2 / 2 + f(U)] with x = [W z_i]_{c,t}. Equals the
// average of sum g over samples when U is the exact minimizer.
double variational_energy(const UnmixingState& w, const Dataset& dataset, const Density& density,
                          const AuxTensor& aux);

}  // namespace msica
