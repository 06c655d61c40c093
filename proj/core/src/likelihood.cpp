#include "msica/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "msica/errors.hpp"
#include "msica/rng.hpp"

namespace msica {

Density::Density(DensityKind kind, double u_max) : kind_(kind), u_max_(u_max) {
  if (!(u_max > 0.0)) throw ConfigError("u_max must be positive");
}

Density Density::laplace(double u_max) { return Density(DensityKind::laplace, u_max); }
Density Density::huber(double u_max) { return Density(DensityKind::huber, u_max); }

Density Density::from_name(std::string_view name, double u_max) {
  if (name == "laplace") return laplace(u_max);
  if (name == "huber") return huber(u_max);
  throw ConfigError("unknown density '" + std::string(name) + "'");
}

std::string Density::name() const { return kind_ == DensityKind::laplace ? "laplace" : "huber"; }

double Density::g(double x) const {
  const double a = std::abs(x);
  if (kind_ == DensityKind::laplace) return a;
  return a <= 1.0 ? 0.5 * x * x : a - 0.5;
}

double Density::g_prime(double x) const {
  if (kind_ == DensityKind::laplace) return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
  if (std::abs(x) <= 1.0) return x;
  return x > 0.0 ? 1.0 : -1.0;
}

double Density::f(double u) const {
  if (kind_ != DensityKind::laplace)
    throw ConfigError("variational f is not available for density '" + name() + "'");
  return 0.5 / u;
}

double Density::weight(double x) const {
  const double a = std::abs(x);
  if (kind_ == DensityKind::huber) return std::min(a <= 1.0 ? 1.0 : 1.0 / a, u_max_);
  if (a * u_max_ <= 1.0) return u_max_;
  return 1.0 / a;
}

double Density::proximal_weight(double x, double u_prev, double eta_a) const {
  if (!has_variational_f())
    throw ConfigError("proximal auxiliary update requires f; unsupported for '" + name() + "'");
  if (!(eta_a > 0.0)) throw ConfigError("eta_a must be positive");

  // phi'(u) = x^2/2 - 1/(2u^2) + (u - u_prev)/eta_a, strictly increasing on u > 0.
  const double half_x2 = 0.5 * x * x;
  const double inv_eta = 1.0 / eta_a;
  auto slope = [&](double u) { return half_x2 - 0.5 / (u * u) + (u - u_prev) * inv_eta; };
  auto curvature = [&](double u) { return 1.0 / (u * u * u) + inv_eta; };

  if (slope(u_max_) <= 0.0) return u_max_;

  // Bracket [lo, hi] with slope(lo) < 0 < slope(hi).
  double hi = u_max_;
  double lo = std::min(1.0, u_max_);
  while (slope(lo) >= 0.0) {
    hi = lo;
    lo *= 0.5;
    if (lo < std::numeric_limits<double>::min()) return 0.0;
  }
  if (double guess = std::max(u_prev, lo); guess < hi && slope(guess) < 0.0) lo = guess;

  const double start = std::isfinite(u_prev) && u_prev > lo && u_prev < hi ? u_prev : 0.5 * (lo + hi);
  double u = start;
  for (int iter = 0; iter < 500; ++iter) {
    const double s = slope(u);
    const double scale = half_x2 + 0.5 / (u * u) + std::abs(u - u_prev) * inv_eta;
    if (std::abs(s) <= 1e-12 * std::max(1.0, scale)) break;
    if (s < 0.0) lo = u; else hi = u;
    double next = u - s / curvature(u);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == u || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) {
      u = next;
      break;
    }
    u = next;
  }
  return std::clamp(u, 0.0, u_max_);
}

std::string to_string(AuxMode mode) { return mode == AuxMode::exact ? "exact" : "proximal"; }

AuxMode aux_mode_from_string(std::string_view name) {
  if (name == "exact") return AuxMode::exact;
  if (name == "proximal") return AuxMode::proximal;
  throw ConfigError("unknown aux_mode '" + std::string(name) + "'");
}

double unsup_loss(const UnmixingState& w, const MatrixXd& z, const Density& density) {
  if (z.rows() != w.dim()) throw DatasetError("unsup_loss: channel mismatch");
  const MatrixXd sources = w.matrix() * z;
  double total = 0.0;
  for (Index t = 0; t < sources.cols(); ++t)
    for (Index c = 0; c < sources.rows(); ++c) total += density.g(sources(c, t));
  return w.neg_log_abs_det() + total / static_cast<double>(z.cols());
}

void update_aux(AuxTensor& aux, const UnmixingState& w, const Dataset& dataset,
                const Density& density, AuxMode mode, double eta_a, std::span<const Index> trials,
                std::span<const Index> times) {
  const Index c_dim = dataset.channels();
  const bool full_time = static_cast<Index>(times.size()) == dataset.samples();
  MatrixXd gathered;
  for (Index i : trials) {
    const MatrixXd& z = dataset.trial(i).signal;
    MatrixXd sources;
    if (full_time) {
      sources = w.matrix() * z;
    } else {
      gathered.resize(c_dim, static_cast<Index>(times.size()));
      for (std::size_t j = 0; j < times.size(); ++j) gathered.col(static_cast<Index>(j)) = z.col(times[j]);
      sources = w.matrix() * gathered;
    }
    MatrixXd& u = aux.trial(i);
    for (std::size_t j = 0; j < times.size(); ++j) {
      const Index t = times[j];
      const Index col = full_time ? t : static_cast<Index>(j);
      for (Index c = 0; c < c_dim; ++c) {
        const double x = sources(c, col);
        u(c, t) = mode == AuxMode::exact ? density.weight(x)
                                         : density.proximal_weight(x, u(c, t), eta_a);
      }
    }
  }
}

AuxTensor aux_exact(const UnmixingState& w, const Dataset& dataset, const Density& density) {
  AuxTensor aux;
  aux.weights.assign(static_cast<std::size_t>(dataset.n_trials()),
                     MatrixXd::Zero(dataset.channels(), dataset.samples()));
  const auto trials = all_indices(dataset.n_trials());
  const auto times = all_indices(dataset.samples());
  update_aux(aux, w, dataset, density, AuxMode::exact, 1.0, trials, times);
  return aux;
}

AuxTensor aux_proximal(const UnmixingState& w, const Dataset& dataset, const Density& density,
                       const AuxTensor& previous, double eta_a) {
  if (previous.n_trials() != dataset.n_trials())
    throw DatasetError("aux_proximal: previous tensor has the wrong shape");
  AuxTensor aux = previous;
  const auto trials = all_indices(dataset.n_trials());
  const auto times = all_indices(dataset.samples());
  update_aux(aux, w, dataset, density, AuxMode::proximal, eta_a, trials, times);
  return aux;
}

double variational_energy(const UnmixingState& w, const Dataset& dataset, const Density& density,
                          const AuxTensor& aux) {
  double total = 0.0;
  for (Index i = 0; i < dataset.n_trials(); ++i) {
    const MatrixXd sources = w.matrix() * dataset.trial(i).signal;
    const MatrixXd& u = aux.trial(i);
    for (Index t = 0; t < sources.cols(); ++t)
      for (Index c = 0; c < sources.rows(); ++c)
        total += density.variational_term(sources(c, t), u(c, t));
  }
  return total / (static_cast<double>(dataset.n_trials()) * static_cast<double>(dataset.samples()));
}

}  // namespace msica
