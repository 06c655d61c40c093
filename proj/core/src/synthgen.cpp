#include "msica/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "msica/errors.hpp"
#include "msica/rng.hpp"

namespace msica {

namespace {

// Purpose-specific stream ids so adding a generator never shifts another.
constexpr std::uint64_t kSourceStream = 0x5001;
constexpr std::uint64_t kMixingStream = 0x5002;
constexpr std::uint64_t kThetaStream = 0x5003;

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

std::vector<MatrixXd> gen_laplace_sources(Index n_trials, Index channels, Index samples,
                                          std::uint64_t seed) {
  if (n_trials < 1 || channels < 1 || samples < 1)
    throw ConfigError("gen_laplace_sources: dimensions must be positive");
  std::vector<MatrixXd> out(static_cast<std::size_t>(n_trials));
  for (Index i = 0; i < n_trials; ++i) {
    Xoshiro256pp rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    MatrixXd s(channels, samples);
    for (Index c = 0; c < channels; ++c)
      for (Index t = 0; t < samples; ++t) s(c, t) = rng.laplace();
    out[static_cast<std::size_t>(i)] = std::move(s);
  }
  return out;
}

double condition_number(const MatrixXd& m) {
  Eigen::JacobiSVD<MatrixXd> svd(m);
  const VectorXd& sv = svd.singularValues();
  const double smallest = sv(sv.size() - 1);
  if (!(smallest > 0.0)) return std::numeric_limits<double>::infinity();
  return sv(0) / smallest;
}

MixingGroundTruth gen_gaussian_mixing(Index channels, std::uint64_t seed) {
  if (channels < 1) throw ConfigError("gen_gaussian_mixing: channels must be positive");
  Xoshiro256pp rng(seed);
  for (int attempt = 0; attempt < 100; ++attempt) {
    MatrixXd a(channels, channels);
    for (Index r = 0; r < channels; ++r)
      for (Index c = 0; c < channels; ++c) a(r, c) = rng.normal();
    if (condition_number(a) <= 1e8) return {a};
  }
  throw NumericalError("gen_gaussian_mixing: no well-conditioned draw after 100 attempts");
}

MixingGroundTruth gen_hilbert_mixing(Index channels, double kappa, std::uint64_t seed) {
  if (channels < 1) throw ConfigError("gen_hilbert_mixing: channels must be positive");
  if (!(kappa > 0.0)) throw ConfigError("gen_hilbert_mixing: kappa must be positive");
  MatrixXd hilbert(channels, channels);
  for (Index i = 0; i < channels; ++i)
    for (Index j = 0; j < channels; ++j) hilbert(i, j) = 1.0 / static_cast<double>(i + j + 1);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(hilbert);
  const MatrixXd& vecs = eig.eigenvectors();

  VectorXd sigma(channels);
  for (Index j = 0; j < channels; ++j) {
    const double frac = channels == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(channels - 1);
    sigma(j) = std::exp(kappa * frac);
  }
  Xoshiro256pp rng(seed);
  for (Index j = channels - 1; j > 0; --j) {
    const auto k = static_cast<Index>(rng.bounded(static_cast<std::uint64_t>(j + 1)));
    std::swap(sigma(j), sigma(k));
  }
  MatrixXd a = vecs * sigma.asDiagonal() * vecs.transpose();
  a = 0.5 * (a + a.transpose());
  return {a};
}

MatrixXd regression_labels(const std::vector<MatrixXd>& sources,
                           const std::vector<VectorXd>& theta, const FeatureMapConfig& fmap_cfg) {
  const auto n = static_cast<Index>(sources.size());
  const auto m = static_cast<Index>(theta.size());
  MatrixXd labels(n, m);
  if (n == 0 || m == 0) return labels;
  const FeatureMap fmap(fmap_cfg, sources.front().cols());
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < m; ++k)
      labels(i, k) = theta[static_cast<std::size_t>(k)].dot(
          fmap(sources[static_cast<std::size_t>(i)].row(k).transpose()));
  return labels;
}

RegressionTargets gen_regression_targets(const std::vector<MatrixXd>& sources, Index n_targets,
                                         const FeatureMapConfig& fmap_cfg, std::uint64_t seed) {
  if (sources.empty()) throw ConfigError("gen_regression_targets: no sources");
  if (n_targets > sources.front().rows())
    throw ConfigError("gen_regression_targets: M must not exceed C");
  const Index d = fmap_cfg.output_dim(sources.front().cols());
  fmap_cfg.validate(sources.front().cols());
  RegressionTargets out;
  Xoshiro256pp rng(seed);
  for (Index k = 0; k < n_targets; ++k) {
    VectorXd theta(d);
    for (Index j = 0; j < d; ++j) theta(j) = rng.normal();
    out.theta.push_back(std::move(theta));
  }
  out.labels = regression_labels(sources, out.theta, fmap_cfg);
  return out;
}

std::string to_string(Recipe recipe) {
  return recipe == Recipe::multi_trial ? "multi_trial" : "supervision";
}

Recipe recipe_from_string(const std::string& name) {
  if (name == "multi_trial") return Recipe::multi_trial;
  if (name == "supervision") return Recipe::supervision;
  throw ConfigError("unknown recipe '" + name + "'");
}

GeneratedData gen_dataset(Recipe recipe, const RecipeOverrides& overrides, std::uint64_t seed) {
  const bool supervised = recipe == Recipe::supervision;
  const Index n = overrides.n_trials.value_or(supervised ? 6000 : 80);
  const Index c = overrides.channels.value_or(10);
  const Index t = overrides.samples.value_or(1000);
  const Index m = overrides.n_targets.value_or(supervised ? 3 : 0);
  const double kappa = overrides.kappa.value_or(5.0);
  if (m < 0 || m > c) throw ConfigError("gen_dataset: need 0 <= M <= C");

  std::vector<MatrixXd> sources = gen_laplace_sources(n, c, t, derive_seed(seed, kSourceStream));
  MixingGroundTruth mixing = supervised
                                 ? gen_hilbert_mixing(c, kappa, derive_seed(seed, kMixingStream))
                                 : gen_gaussian_mixing(c, derive_seed(seed, kMixingStream));

  RegressionTargets targets;
  if (m > 0) targets = gen_regression_targets(sources, m, overrides.features,
                                              derive_seed(seed, kThetaStream));

  std::vector<Trial> trials(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    auto& trial = trials[static_cast<std::size_t>(i)];
    trial.signal = mixing.mixing * sources[static_cast<std::size_t>(i)];
    trial.labels = m > 0 ? VectorXd(targets.labels.row(i).transpose()) : VectorXd(0);
  }
  std::vector<TargetSchema> schema;
  for (Index k = 0; k < m; ++k)
    schema.push_back({"y" + std::to_string(k), TargetKind::continuous, 0});

  GeneratedData out{Dataset(std::move(trials), std::move(schema)), std::move(mixing),
                    std::move(sources), std::move(targets.theta), {}};
  out.parameters = {
      {"recipe", to_string(recipe)},
      {"seed", std::to_string(seed)},
      {"n", std::to_string(n)},
      {"c", std::to_string(c)},
      {"t", std::to_string(t)},
      {"m", std::to_string(m)},
      {"mixing", supervised ? "hilbert" : "gaussian"},
      {"window", std::to_string(overrides.features.window)},
      {"hop", std::to_string(overrides.features.hop)},
      {"log_power", overrides.features.log_power ? "true" : "false"},
      {"log_eps", format_double(overrides.features.log_eps)},
  };
  if (supervised) out.parameters["kappa"] = format_double(kappa);
  return out;
}

}  // namespace msica
