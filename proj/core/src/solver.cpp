#include "msica/solver.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "msica/errors.hpp"
#include "msica/eval.hpp"
#include "msica/rng.hpp"
#include "msica/unmixing.hpp"

namespace msica {

namespace {

constexpr std::uint64_t kInitStream = 0x1001;
constexpr std::uint64_t kSampleStream = 0x1002;

double eta_or_guard(double guard, double fallback) {
  return std::isfinite(guard) ? guard : fallback;
}

}  // namespace

void SolverConfig::validate(const Dims& dims) const {
  if (iterations < 0) throw ConfigError("iterations must be nonnegative");
  if (eta_u && !(*eta_u > 0.0)) throw ConfigError("eta_u must be positive");
  if (eta_p && !(*eta_p > 0.0)) throw ConfigError("eta_p must be positive");
  if (!(eta_a > 0.0)) throw ConfigError("eta_a must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
  if (!(mu >= 0.0)) throw ConfigError("mu must be nonnegative");
  if (batch_trials < 0 || batch_trials > dims.n_trials)
    throw ConfigError("batch_trials must be in [1, N] (0 for all)");
  if (batch_times < 0 || batch_times > dims.samples)
    throw ConfigError("batch_times must be in [1, T] (0 for all)");
  if (trace_every < 1) throw ConfigError("trace_every must be >= 1");
  if (lambda > 0.0 && dims.n_targets == 0)
    throw ConfigError("lambda > 0 requires at least one supervised target");
  if (!(holdout >= 0.0 && holdout < 1.0)) throw ConfigError("holdout must be in [0, 1)");
  const Density d = Density::from_name(density, u_max);
  if (aux_mode == AuxMode::proximal && !d.has_variational_f())
    throw ConfigError("aux_mode=proximal is unsupported for density '" + density + "'");
  if (dims.n_targets > 0) features.validate(dims.samples);
}

double spectral_norm_sq(const MatrixXd& z) {
  const MatrixXd gram = z * z.transpose();
  VectorXd x = VectorXd::Ones(gram.rows()).normalized();
  double estimate = 0.0;
  for (int it = 0; it < 10000; ++it) {
    VectorXd y = gram * x;
    const double norm = y.norm();
    if (norm == 0.0) return 0.0;
    const double prev = estimate;
    estimate = norm;
    x = y / norm;
    if (it > 0 && std::abs(estimate - prev) <= 1e-8 * estimate) break;
  }
  return estimate;
}

RateGuards rate_guards_from_constants(double mean_sq_spectral_norm,
                                      std::vector<double> source_lipschitz,
                                      double theta_lipschitz, double lambda, double mu) {
  RateGuards g;
  g.source_lipschitz = std::move(source_lipschitz);
  g.theta_lipschitz = theta_lipschitz;
  g.mean_sq_spectral_norm = mean_sq_spectral_norm;
  double sum_sq = 0.0;
  for (double l : g.source_lipschitz) sum_sq += l * l;
  g.w_lipschitz = mean_sq_spectral_norm * std::sqrt(sum_sq);
  const double inf = std::numeric_limits<double>::infinity();
  g.eta_u_max = lambda > 0.0 && g.w_lipschitz > 0.0 ? 1.0 / (2.0 * lambda * g.w_lipschitz) : inf;
  g.eta_p_max = theta_lipschitz + mu > 0.0 ? 1.0 / (theta_lipschitz + mu) : inf;
  return g;
}

RateGuards compute_rate_guards(const Dataset& dataset,
                               std::span<const SupervisedTargetModel> models,
                               const UnmixingState& w, const FeatureMap& fmap, double lambda,
                               double mu, LipschitzOverrides overrides) {
  double mean_sq = 0.0;
  for (const auto& trial : dataset.trials()) mean_sq += spectral_norm_sq(trial.signal);
  mean_sq /= static_cast<double>(dataset.n_trials());

  std::vector<double> source_l;
  double theta_l = 0.0;
  for (Index m = 0; m < dataset.n_targets(); ++m) {
    const auto& model = models[static_cast<std::size_t>(m)];
    std::vector<VectorXd> sources;
    std::vector<double> labels;
    for (const auto& trial : dataset.trials()) {
      sources.push_back(source_signal(w, trial.signal, m));
      labels.push_back(trial.labels(m));
    }
    source_l.push_back(overrides.source > 0.0
                           ? overrides.source
                           : estimate_source_lipschitz(model, sources, labels, fmap));
    if (overrides.theta <= 0.0)
      theta_l = std::max(theta_l, estimate_theta_lipschitz(model, sources, fmap));
  }
  if (overrides.theta > 0.0) theta_l = overrides.theta;
  return rate_guards_from_constants(mean_sq, std::move(source_l), theta_l, lambda, mu);
}

void Trace::write_csv(std::ostream& out, const std::vector<std::string>& comments) const {
  for (const auto& line : comments) out << "# " << line << '\n';
  out << "k,loss_unsup,loss_sup,F,amari,wall_ms\n";
  char buf[256];
  auto num = [&](double v) -> std::string {
    if (std::isnan(v)) return "nan";
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  };
  for (const auto& r : records) {
    out << r.k << ',' << num(r.loss_unsup) << ',' << num(r.loss_sup) << ',' << num(r.objective)
        << ',' << num(r.amari) << ',' << num(r.wall_ms) << '\n';
  }
}

ObjectiveParts evaluate_objective(const UnmixingState& w,
                                  std::span<const SupervisedTargetModel> models,
                                  const AuxTensor& aux, const Dataset& dataset,
                                  const Density& density, const FeatureMap* fmap, double lambda,
                                  double mu) {
  const double nt = static_cast<double>(dataset.n_trials()) * static_cast<double>(dataset.samples());
  const bool with_f = density.has_variational_f();
  double g_sum = 0.0;
  double variational = 0.0;
  double sup = 0.0;
  for (Index i = 0; i < dataset.n_trials(); ++i) {
    const Trial& trial = dataset.trial(i);
    const MatrixXd sources = w.matrix() * trial.signal;
    const MatrixXd& u = aux.trial(i);
    for (Index t = 0; t < sources.cols(); ++t) {
      for (Index c = 0; c < sources.rows(); ++c) {
        const double x = sources(c, t);
        g_sum += density.g(x);
        if (with_f) variational += density.variational_term(x, u(c, t));
      }
    }
    if (lambda > 0.0) {
      for (Index m = 0; m < dataset.n_targets(); ++m)
        sup += supervised_loss(models[static_cast<std::size_t>(m)],
                               sources.row(m).transpose(), trial.labels(m), *fmap);
    }
  }
  double theta_sq = 0.0;
  for (const auto& model : models) theta_sq += model.theta.squaredNorm();

  ObjectiveParts parts;
  parts.loss_unsup = w.neg_log_abs_det() + g_sum / nt;
  parts.loss_sup = lambda * sup / static_cast<double>(dataset.n_trials());
  parts.objective = with_f ? w.neg_log_abs_det() + variational / nt + parts.loss_sup +
                                 0.5 * lambda * mu * theta_sq
                           : std::numeric_limits<double>::quiet_NaN();
  return parts;
}

UnmixingState initial_unmixing(Index channels, const SolverConfig& config) {
  Xoshiro256pp rng(derive_seed(config.seed, kInitStream));
  MatrixXd w = MatrixXd::Identity(channels, channels);
  for (Index r = 0; r < channels; ++r)
    for (Index c = 0; c < channels; ++c) w(r, c) += config.init_scale * rng.normal();
  UnmixingState state(std::move(w));
  if (state.log_abs_det() < -50.0 * static_cast<double>(channels))
    throw NumericalError("initial unmixing matrix is numerically singular");
  return state;
}

std::vector<SupervisedTargetModel> initial_models(const Dataset& dataset, const FeatureMap& fmap,
                                                  const SolverConfig& config) {
  // Continue the init stream after W^(0) so both come from one seed.
  Xoshiro256pp rng(derive_seed(config.seed, kInitStream));
  const Index c = dataset.channels();
  for (Index k = 0; k < c * c; ++k) rng.normal();
  std::vector<SupervisedTargetModel> models;
  for (const auto& target : dataset.schema()) {
    auto model = SupervisedTargetModel::for_target(target, fmap.dim());
    for (Index r = 0; r < model.theta.rows(); ++r)
      for (Index j = 0; j < model.theta.cols(); ++j)
        model.theta(r, j) = config.theta_init_scale * rng.normal();
    models.push_back(std::move(model));
  }
  return models;
}

namespace {

FitResult run_fit(const Dataset& dataset, const SolverConfig& config, bool stochastic,
                  const std::optional<MixingGroundTruth>& truth, const FitObserver& observer) {
  config.validate(dataset.dims());
  const Density density = Density::from_name(config.density, config.u_max);
  const Index n_trials = dataset.n_trials();
  const Index samples = dataset.samples();
  const Index channels = dataset.channels();
  const Index targets = dataset.n_targets();

  std::optional<FeatureMap> fmap;
  if (targets > 0) fmap.emplace(config.features, samples);

  const UnmixingState w_init = initial_unmixing(channels, config);
  std::vector<SupervisedTargetModel> models =
      targets > 0 ? initial_models(dataset, *fmap, config) : std::vector<SupervisedTargetModel>{};

  FitResult result{w_init, w_init, models, {}, {}, 0.0, 0.0, 0, false, {}};
  if (targets > 0) {
    result.guards = compute_rate_guards(dataset, models, w_init, *fmap, config.lambda, config.mu,
                                        {config.lipschitz_theta, config.lipschitz_source});
  } else {
    result.guards = rate_guards_from_constants(0.0, {}, 0.0, config.lambda, config.mu);
  }
  const double eta_u = config.eta_u.value_or(eta_or_guard(result.guards.eta_u_max, 1.0));
  const double eta_p = config.eta_p.value_or(eta_or_guard(result.guards.eta_p_max, 1e-3));
  result.eta_u = eta_u;
  result.eta_p = eta_p;

  OptimizerSettings opt = config.optimizer;
  opt.eta_p = eta_p;
  std::vector<OptimizerState> optimizers;
  for (const auto& model : models)
    optimizers.emplace_back(opt, model.theta.rows(), model.theta.cols());

  UnmixingState w = w_init;
  AuxTensor aux = aux_exact(w, dataset, density);
  result.trace.objective_available = density.has_variational_f();

  const auto start = std::chrono::steady_clock::now();
  auto record = [&](long k) {
    const ObjectiveParts parts = evaluate_objective(w, models, aux, dataset, density,
                                                    fmap ? &*fmap : nullptr, config.lambda,
                                                    config.mu);
    if (!std::isfinite(parts.loss_unsup) || !std::isfinite(parts.loss_sup))
      throw NumericalError("non-finite loss at iteration " + std::to_string(k));
    TraceRecord rec;
    rec.k = k;
    rec.loss_unsup = parts.loss_unsup;
    rec.loss_sup = parts.loss_sup;
    rec.objective = parts.objective;
    rec.amari = truth ? amari_distance(w.matrix(), truth->mixing)
                      : std::numeric_limits<double>::quiet_NaN();
    rec.wall_ms = config.record_wall_time
                      ? std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - start)
                            .count()
                      : 0.0;
    result.trace.records.push_back(rec);
  };

  const Index n_batch = stochastic && config.batch_trials > 0 ? config.batch_trials : n_trials;
  const Index t_batch = stochastic && config.batch_times > 0 ? config.batch_times : samples;
  Xoshiro256pp sampler(derive_seed(config.seed, kSampleStream));
  const std::vector<Index> every_trial = all_indices(n_trials);
  const std::vector<Index> every_time = all_indices(samples);
  const MatrixXd zero_b = MatrixXd::Zero(channels, channels);
  const double singular_floor = -50.0 * static_cast<double>(channels);

  try {
    record(0);
    if (observer) observer({0, w, models, aux});
    for (long k = 1; k <= config.iterations; ++k) {
      std::vector<Index> trials = every_trial;
      std::vector<Index> times = every_time;
      if (stochastic) {
        trials = sample_without_replacement(sampler, n_trials, n_batch);
        times = sample_without_replacement(sampler, samples, t_batch);
      }

      auto theta_step = [&] {
        for (Index m = 0; m < targets; ++m) {
          auto& model = models[static_cast<std::size_t>(m)];
          const MatrixXd grad = batch_param_grad(model, m, w, trials, dataset, *fmap);
          model.theta = optimizer_step(optimizers[static_cast<std::size_t>(m)], model.theta,
                                       grad, config.mu);
        }
      };
      auto aux_step = [&] {
        update_aux(aux, w, dataset, density, config.aux_mode, config.eta_a, trials, times);
      };
      if (config.lemma1_order) {
        aux_step();
        theta_step();
      } else {
        theta_step();
        aux_step();
      }

      const MatrixXd B = config.lambda > 0.0 && targets > 0
                             ? compute_B(w, models, dataset, trials, times, *fmap)
                             : zero_b;
      UnmixingState next = cyclic_sweep(
          w, [&](Index c) { return compute_A_c(aux, dataset, c, trials, times); }, B, eta_u,
          config.lambda);
      if (!(next.log_abs_det() >= singular_floor))
        throw NumericalError("unmixing matrix became singular at iteration " + std::to_string(k));
      w = std::move(next);
      result.iterations_done = k;

      if (k % config.trace_every == 0 || k == config.iterations) record(k);
      if (observer) observer({k, w, models, aux});
    }
  } catch (const NumericalError& e) {
    result.aborted = true;
    result.abort_reason = e.what();
  }

  result.w = w;
  result.models = std::move(models);
  return result;
}

}  // namespace

FitResult fit_full_batch(const Dataset& dataset, const SolverConfig& config,
                         const std::optional<MixingGroundTruth>& truth,
                         const FitObserver& observer) {
  return run_fit(dataset, config, false, truth, observer);
}

FitResult fit_stochastic(const Dataset& dataset, const SolverConfig& config,
                         const std::optional<MixingGroundTruth>& truth,
                         const FitObserver& observer) {
  return run_fit(dataset, config, true, truth, observer);
}

}  // namespace msica
