#include "msica_cli/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <atomic>
#include <cctype>
#include <cmath>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "msica/data_model.hpp"
#include "msica/errors.hpp"
#include "msica/eval.hpp"
#include "msica/solver.hpp"
#include "msica/synthgen.hpp"

namespace msica::cli {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

std::string safe_name(const std::string& name) {
  std::string out = name;
  for (char& ch : out)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-')) ch = '_';
  return out;
}

void write_text(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& line : lines) out << line << '\n';
}

// ---- gen -------------------------------------------------------------------

struct GenArgs {
  std::string recipe;
  std::string out;
  std::uint64_t seed = 0;
  std::optional<Index> n, c, t, m;
  std::optional<double> kappa;
  Index window = 64;
  Index hop = 32;
  bool log_power = false;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  RecipeOverrides ov;
  ov.n_trials = a.n;
  ov.channels = a.c;
  ov.samples = a.t;
  ov.n_targets = a.m;
  ov.kappa = a.kappa;
  ov.features.window = a.window;
  ov.features.hop = a.hop;
  ov.features.log_power = a.log_power;
  const GeneratedData data = gen_dataset(recipe_from_string(a.recipe), ov, a.seed);
  const fs::path dir(a.out);
  save_dataset(data.dataset, dir, data.parameters);

  std::vector<std::string> comments;
  for (const auto& [k, v] : data.parameters) comments.push_back(k + "=" + v);
  write_matrix(dir / "mixing", data.mixing.mixing, comments);
  for (std::size_t k = 0; k < data.theta.size(); ++k)
    write_matrix(dir / ("theta_true_" + data.dataset.schema()[k].name),
                 MatrixXd(data.theta[k].transpose()), comments);
  out << "wrote " << dir.string() << " (" << data.dataset.n_trials() << " trials, "
      << data.dataset.channels() << " channels, " << data.dataset.samples() << " samples, "
      << data.dataset.n_targets() << " targets)\n";
  return kOk;
}

// ---- preprocess ------------------------------------------------------------

int cmd_preprocess(const std::string& data_dir, const std::string& out_dir, bool center,
                   bool scale, std::ostream& out) {
  const Dataset ds = load_dataset(data_dir);
  std::vector<Trial> trials = ds.trials();
  for (auto& trial : trials) {
    if (center) trial.signal = trial.signal.colwise() - trial.signal.rowwise().mean();
    if (scale) {
      for (Index c = 0; c < trial.signal.rows(); ++c) {
        const double sd = std::sqrt(trial.signal.row(c).squaredNorm() /
                                    static_cast<double>(trial.signal.cols()));
        if (sd > 0.0) trial.signal.row(c) /= sd;
      }
    }
  }
  auto info = load_generator_info(data_dir);
  info["preprocess_center"] = center ? "true" : "false";
  info["preprocess_scale"] = scale ? "true" : "false";
  save_dataset(Dataset(std::move(trials), ds.schema()), out_dir, info);
  const fs::path mixing = fs::path(data_dir) / "mixing.bin";
  if (fs::exists(mixing) && !scale) {
    fs::copy_file(mixing, fs::path(out_dir) / "mixing.bin", fs::copy_options::overwrite_existing);
    fs::copy_file(fs::path(data_dir) / "mixing.txt", fs::path(out_dir) / "mixing.txt",
                  fs::copy_options::overwrite_existing);
  }
  out << "wrote " << out_dir << '\n';
  return kOk;
}

// ---- fit -------------------------------------------------------------------

struct FitArgs {
  std::string data;
  std::string config;
  std::string out;
  std::string ground_truth;
  bool stochastic = false;
  bool lemma1_order = false;
  std::string seeds;
};

std::pair<std::uint64_t, std::uint64_t> parse_seed_range(const std::string& text) {
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) {
      const auto s = std::stoull(text);
      return {s, s};
    }
    const auto lo = std::stoull(text.substr(0, dots));
    const auto hi = std::stoull(text.substr(dots + 2));
    if (hi < lo) throw ConfigError("--seeds: empty range " + text);
    return {lo, hi};
  } catch (const std::logic_error&) {
    throw ConfigError("--seeds: expected a..b, got '" + text + "'");
  }
}

struct RunOutcome {
  int code = kOk;
  std::string message;
};

RunOutcome fit_one(const Dataset& train, const SolverConfig& config, bool stochastic,
                   const std::optional<MixingGroundTruth>& truth, const fs::path& dir) {
  fs::create_directories(dir);
  FitResult result = stochastic ? fit_stochastic(train, config, truth)
                                : fit_full_batch(train, config, truth);

  std::vector<std::string> comments = format_solver_config(config);
  comments.push_back("mode=" + std::string(stochastic ? "stochastic" : "full_batch"));
  comments.push_back("resolved_eta_u=" + num(result.eta_u));
  comments.push_back("resolved_eta_p=" + num(result.eta_p));
  comments.push_back("iterations_done=" + std::to_string(result.iterations_done));
  if (!result.trace.objective_available) comments.push_back("F=unavailable for this density");
  if (result.aborted) comments.push_back("aborted=" + result.abort_reason);

  write_text(dir / "config.resolved.txt", format_solver_config(config));
  write_matrix(dir / "W", result.w.matrix(), comments);
  write_matrix(dir / "W_init", result.w_init.matrix(), comments);
  for (std::size_t m = 0; m < result.models.size(); ++m)
    write_matrix(dir / ("theta_" + safe_name(train.schema()[m].name)), result.models[m].theta,
                 comments);
  {
    std::ofstream csv(dir / "trace.csv", std::ios::binary);
    if (!csv) throw Error("cannot write trace.csv in " + dir.string());
    result.trace.write_csv(csv, comments);
  }
  if (result.aborted) return {kAbort, "numerical abort: " + result.abort_reason};
  return {kOk, {}};
}

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  SolverConfig config = load_solver_config(a.config);
  if (a.lemma1_order) config.lemma1_order = true;
  const Dataset full = load_dataset(a.data);
  const HoldoutSplit split = holdout_split(full.n_trials(), config.holdout);
  const Dataset train = config.holdout > 0.0 ? full.subset(split.train) : full;
  std::optional<MixingGroundTruth> truth;
  if (!a.ground_truth.empty()) truth = MixingGroundTruth{read_matrix(a.ground_truth)};
  config.validate(train.dims());

  const fs::path root(a.out);
  if (a.seeds.empty()) {
    RunOutcome r;
    try {
      r = fit_one(train, config, a.stochastic, truth, root);
    } catch (const NumericalError& e) {
      r = {kAbort, std::string("numerical abort: ") + e.what()};
    }
    if (r.code != kOk) err << r.message << '\n';
    else out << "wrote " << root.string() << '\n';
    return r.code;
  }

  const auto [lo, hi] = parse_seed_range(a.seeds);
  const std::size_t count = static_cast<std::size_t>(hi - lo + 1);
  std::vector<RunOutcome> outcomes(count);
  const std::size_t workers =
      std::min<std::size_t>(count, std::max(1u, std::thread::hardware_concurrency()));
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t j = next++; j < count; j = next++) {
          SolverConfig run_cfg = config;
          run_cfg.seed = lo + j;
          const fs::path dir = root / ("seed_" + std::to_string(lo + j));
          try {
            outcomes[j] = fit_one(train, run_cfg, a.stochastic, truth, dir);
          } catch (const NumericalError& e) {
            outcomes[j] = {kAbort, std::string("numerical abort: ") + e.what()};
          } catch (const std::exception& e) {
            outcomes[j] = {kFailure, e.what()};
          }
        }
      });
    }
  }
  int code = kOk;
  for (std::size_t j = 0; j < count; ++j) {
    if (outcomes[j].code != kOk) {
      err << "seed " << lo + j << ": " << outcomes[j].message << '\n';
      code = std::max(code, outcomes[j].code);
    }
  }
  out << "wrote " << count << " runs under " << root.string() << '\n';
  return code;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> w;
  std::string mixing;
  std::string data;
  std::string fit;
  double holdout = -1.0;
};

void print_aggregates(std::ostream& out, const std::vector<double>& values, int pad_columns) {
  const std::string pad(static_cast<std::size_t>(pad_columns), ',');
  out << "mean," << num(mean_of(values)) << pad << '\n';
  out << "median," << num(median_of(values)) << pad << '\n';
}

int cmd_eval_amari(const EvalArgs& a, std::ostream& out) {
  const MatrixXd mixing = read_matrix(a.mixing);
  std::vector<double> values;
  out << "run,amari\n";
  for (const auto& path : a.w) {
    const double d = amari_distance(read_matrix(path), mixing);
    values.push_back(d);
    out << path << ',' << num(d) << '\n';
  }
  print_aggregates(out, values, 0);
  return kOk;
}

int cmd_eval_holdout(const EvalArgs& a, std::ostream& out) {
  const Dataset ds = load_dataset(a.data);
  const fs::path dir(a.fit);
  const SolverConfig config = load_solver_config((dir / "config.resolved.txt").string());
  const HoldoutSplit split = holdout_split(ds.n_trials(), a.holdout);
  if (split.test.empty()) throw ConfigError("--holdout leaves no test trials");
  const UnmixingState w(read_matrix(dir / "W.bin"));
  if (w.dim() != ds.channels()) throw DatasetError("W does not match the dataset channels");

  const FeatureMap fmap(config.features, ds.samples());
  std::vector<SupervisedTargetModel> models;
  for (const auto& target : ds.schema()) {
    auto model = SupervisedTargetModel::for_target(target, fmap.dim());
    const MatrixXd theta = read_matrix(dir / ("theta_" + safe_name(target.name) + ".txt"));
    if (theta.rows() != model.theta.rows() || theta.cols() != model.theta.cols())
      throw DatasetError("theta for target '" + target.name + "' has the wrong shape");
    model.theta = theta;
    models.push_back(std::move(model));
  }
  const auto metrics = prediction_metrics(w, models, ds, split.test, fmap);
  out << "target,kind,metric,value,n_test\n";
  for (const auto& m : metrics) {
    out << m.target << ',' << to_string(m.kind) << ','
        << (m.kind == TargetKind::categorical ? "accuracy" : "rmse") << ',' << num(m.value) << ','
        << split.test.size() << '\n';
  }
  if (!a.mixing.empty())
    out << "unmixing,matrix,amari," << num(amari_distance(w.matrix(), read_matrix(a.mixing)))
        << ",\n";
  return kOk;
}

// ---- baseline --------------------------------------------------------------

int cmd_baseline(const std::string& data_dir, const std::string& method, const std::string& mode,
                 const std::string& mixing_path, std::ostream& out, std::ostream& err) {
  if (method != "fobi") throw ConfigError("unknown baseline method '" + method + "'");
  const Dataset ds = load_dataset(data_dir);
  const MatrixXd mixing = read_matrix(mixing_path);
  std::vector<double> values;
  bool any_degenerate = false;
  out << "trial,amari,degenerate,min_gap\n";
  auto emit = [&](const std::string& label, const MatrixXd& x) {
    const FobiResult r = fobi(x);
    const double d = amari_distance(r.unmixing, mixing);
    values.push_back(d);
    any_degenerate = any_degenerate || r.degenerate;
    out << label << ',' << num(d) << ',' << (r.degenerate ? 1 : 0) << ',' << num(r.min_gap) << '\n';
  };
  if (mode == "per_trial") {
    for (Index i = 0; i < ds.n_trials(); ++i) emit(std::to_string(i), ds.trial(i).signal);
  } else if (mode == "concat") {
    emit("concat", concat_trials(ds));
  } else {
    throw ConfigError("unknown baseline mode '" + mode + "'");
  }
  print_aggregates(out, values, 2);
  if (any_degenerate)
    err << "warning: FOBI kurtosis eigenvalues are not separated; the estimate is unreliable\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-trial supervised ICA"};
  app.name("msica");
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic dataset");
  gen_cmd->add_option("--recipe", gen.recipe)->required()->check(
      CLI::IsMember({"multi_trial", "supervision"}));
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed)->required();
  gen_cmd->add_option("--n", gen.n, "Trials");
  gen_cmd->add_option("--c", gen.c, "Channels");
  gen_cmd->add_option("--t", gen.t, "Samples per trial");
  gen_cmd->add_option("--m", gen.m, "Supervised targets");
  gen_cmd->add_option("--kappa", gen.kappa, "Log condition number of the Hilbert mixing");
  gen_cmd->add_option("--window", gen.window, "Feature window for the labels");
  gen_cmd->add_option("--hop", gen.hop, "Feature hop for the labels");
  gen_cmd->add_flag("--log-power", gen.log_power, "Log-power features for the labels");

  std::string pre_data, pre_out;
  bool pre_center = false, pre_scale = false;
  auto* pre_cmd = app.add_subcommand("preprocess", "Center and/or scale every trial");
  pre_cmd->add_option("--data", pre_data)->required();
  pre_cmd->add_option("--out", pre_out)->required();
  pre_cmd->add_flag("--center", pre_center, "Subtract each channel's per-trial mean");
  pre_cmd->add_flag("--scale", pre_scale, "Divide each channel by its per-trial RMS");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit W and the target models");
  fit_cmd->add_option("--data", fit.data)->required();
  fit_cmd->add_option("--config", fit.config)->required();
  fit_cmd->add_option("--out", fit.out)->required();
  fit_cmd->add_option("--ground-truth", fit.ground_truth, "Mixing matrix for the amari column");
  fit_cmd->add_flag("--stochastic", fit.stochastic);
  fit_cmd->add_flag("--lemma1-order", fit.lemma1_order, "Update U before theta");
  fit_cmd->add_option("--seeds", fit.seeds, "Seed sweep a..b, one subdirectory per seed");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Amari distances or held-out prediction metrics");
  auto* w_opt = eval_cmd->add_option("--w", ev.w, "Unmixing matrices (.bin or .txt)");
  eval_cmd->add_option("--mixing", ev.mixing);
  auto* data_opt = eval_cmd->add_option("--data", ev.data);
  auto* holdout_opt = eval_cmd->add_option("--holdout", ev.holdout);
  auto* fitdir_opt = eval_cmd->add_option("--fit", ev.fit, "Output directory of a fit");
  w_opt->excludes(data_opt);
  data_opt->needs(holdout_opt)->needs(fitdir_opt);

  std::string bl_data, bl_method = "fobi", bl_mode, bl_mixing;
  auto* bl_cmd = app.add_subcommand("baseline", "FOBI baseline per trial or on the concatenation");
  bl_cmd->add_option("--data", bl_data)->required();
  bl_cmd->add_option("--method", bl_method)->check(CLI::IsMember({"fobi"}));
  bl_cmd->add_option("--mode", bl_mode)->required()->check(CLI::IsMember({"per_trial", "concat"}));
  bl_cmd->add_option("--mixing", bl_mixing)->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    if (eval_cmd->parsed()) {
      if (ev.w.empty() && ev.data.empty())
        throw CLI::ValidationError("eval", "give --w FILE... --mixing FILE or --data DIR --holdout F --fit DIR");
      if (!ev.w.empty() && ev.mixing.empty())
        throw CLI::RequiredError("--mixing");
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen(gen, out);
    if (pre_cmd->parsed()) return cmd_preprocess(pre_data, pre_out, pre_center, pre_scale, out);
    if (fit_cmd->parsed()) return cmd_fit(fit, out, err);
    if (eval_cmd->parsed()) return ev.w.empty() ? cmd_eval_holdout(ev, out) : cmd_eval_amari(ev, out);
    if (bl_cmd->parsed()) return cmd_baseline(bl_data, bl_method, bl_mode, bl_mixing, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalError& e) {
    err << "numerical abort: " << e.what() << '\n';
    return kAbort;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

}  // namespace msica::cli
