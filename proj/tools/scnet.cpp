// scnet command-line driver: dataset generation, training and the three
// experiments (convergence, profile, transfer).
//
// Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "scnet/experiments.hpp"
#include "scnet/io.hpp"
#include "scnet/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace scnet;

namespace {

/// Fully resolved settings of one invocation.
struct RunConfig {
  ExperimentConfig exp;
  double delta = 0.05;          ///< noise level for train / profile / transfer
  bool delta_given = false;     ///< train: only this level instead of all
  std::string out = "scnet_out";
  bool fast = false;
  bool train_inline = false;
  bool gradcheck = false;

  json to_json() const {
    const auto& t = exp.train;
    return {{"p", exp.problem.p},
            {"s", exp.problem.s},
            {"n_modes", exp.problem.n_modes},
            {"resolution", exp.resolution},
            {"n_train", exp.n_train},
            {"n_test", exp.n_test},
            {"deltas", exp.deltas},
            {"resolutions", exp.resolutions},
            {"tau_safety", exp.tau_safety},
            {"threads", exp.threads},
            {"learning_rate", t.learning_rate},
            {"batch_size", t.batch_size},
            {"epochs", t.epochs},
            {"gamma", t.gamma},
            {"adam_beta1", t.adam_beta1},
            {"adam_beta2", t.adam_beta2},
            {"adam_eps", t.adam_eps},
            {"hidden", t.arch.hidden},
            {"seed", exp.seed},
            {"delta", delta},
            {"out", out},
            {"fast", fast},
            {"train_inline", train_inline},
            {"gradcheck", gradcheck}};
  }
};

/// Flat keys accepted in the config file and as `--key value` overrides.
struct Overrides {
  std::optional<double> p, s, tau_safety, learning_rate, gamma, adam_beta1, adam_beta2, adam_eps;
  std::optional<std::size_t> n_modes, resolution, n_train, n_test, batch_size, epochs;
  std::optional<std::vector<double>> deltas;
  std::optional<std::vector<std::size_t>> resolutions, hidden;

  void apply(RunConfig& rc) const {
    auto& e = rc.exp;
    auto& t = e.train;
    if (p) e.problem.p = *p;
    if (s) e.problem.s = *s;
    if (n_modes) e.problem.n_modes = *n_modes;
    if (resolution) e.resolution = *resolution;
    if (n_train) e.n_train = *n_train;
    if (n_test) e.n_test = *n_test;
    if (deltas) e.deltas = *deltas;
    if (resolutions) e.resolutions = *resolutions;
    if (tau_safety) e.tau_safety = *tau_safety;
    if (learning_rate) t.learning_rate = *learning_rate;
    if (batch_size) t.batch_size = *batch_size;
    if (epochs) t.epochs = *epochs;
    if (gamma) t.gamma = *gamma;
    if (adam_beta1) t.adam_beta1 = *adam_beta1;
    if (adam_beta2) t.adam_beta2 = *adam_beta2;
    if (adam_eps) t.adam_eps = *adam_eps;
    if (hidden) t.arch.hidden = *hidden;
  }
};

template <class T>
void take(const json& j, const char* key, std::optional<T>& slot) {
  if (j.contains(key)) slot = j.at(key).get<T>();
}

struct Cli {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> delta;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
  bool fast = false, train_inline = false, gradcheck = false;
  Overrides flags;

  void add_options(CLI::App& app) {
    app.add_option("--config", config_path, "JSON config file with flat keys");
    app.add_option("--seed", seed, "root seed (default 42)");
    app.add_option("--delta", delta, "noise level for train/profile/transfer");
    app.add_option("--out", out, "output directory");
    app.add_option("--threads", threads, "worker threads (default: all cores)");
    app.add_flag("--fast", fast, "scaled CI mode: 200 train / 100 test samples");
    app.add_flag("--train-inline", train_inline, "train missing models instead of loading them");
    app.add_flag("--gradcheck", gradcheck, "run the gradient oracle before training");
    app.add_option("--p", flags.p, "operator smoothing order");
    app.add_option("--s", flags.s, "source regularity");
    app.add_option("--n_modes,--n-modes", flags.n_modes, "retained modes N");
    app.add_option("--resolution", flags.resolution, "training grid size M");
    app.add_option("--n_train,--n-train", flags.n_train, "training samples per noise level");
    app.add_option("--n_test,--n-test", flags.n_test, "test samples per noise level");
    app.add_option("--deltas", flags.deltas, "noise levels of the sweep")->delimiter(',');
    app.add_option("--resolutions", flags.resolutions, "transfer grids")->delimiter(',');
    app.add_option("--tau_safety,--tau-safety", flags.tau_safety, "discrepancy safety factor");
    app.add_option("--learning_rate,--learning-rate", flags.learning_rate, "Adam step size");
    app.add_option("--batch_size,--batch-size", flags.batch_size, "minibatch size");
    app.add_option("--epochs", flags.epochs, "training epochs");
    app.add_option("--gamma", flags.gamma, "Sobolev loss weight");
    app.add_option("--adam_beta1", flags.adam_beta1, "Adam beta1");
    app.add_option("--adam_beta2", flags.adam_beta2, "Adam beta2");
    app.add_option("--adam_eps", flags.adam_eps, "Adam epsilon");
    app.add_option("--hidden", flags.hidden, "hidden layer widths")->delimiter(',');
  }

  /// defaults < fast preset < config file < command-line flags
  RunConfig resolve() const {
    json file = json::object();
    if (!config_path.empty()) {
      file = io::read_json(config_path);
      if (!file.is_object()) throw ConfigError("config: top level must be an object");
    }
    RunConfig rc;
    rc.exp.threads = std::max(1u, std::thread::hardware_concurrency());
    try {
      rc.fast = fast || file.value("fast", false);
      if (rc.fast) rc.exp.apply_fast();

      Overrides from_file;
      take(file, "p", from_file.p);
      take(file, "s", from_file.s);
      take(file, "n_modes", from_file.n_modes);
      take(file, "resolution", from_file.resolution);
      take(file, "n_train", from_file.n_train);
      take(file, "n_test", from_file.n_test);
      take(file, "deltas", from_file.deltas);
      take(file, "resolutions", from_file.resolutions);
      take(file, "tau_safety", from_file.tau_safety);
      take(file, "learning_rate", from_file.learning_rate);
      take(file, "batch_size", from_file.batch_size);
      take(file, "epochs", from_file.epochs);
      take(file, "gamma", from_file.gamma);
      take(file, "adam_beta1", from_file.adam_beta1);
      take(file, "adam_beta2", from_file.adam_beta2);
      take(file, "adam_eps", from_file.adam_eps);
      take(file, "hidden", from_file.hidden);
      from_file.apply(rc);
      if (file.contains("seed")) rc.exp.seed = file.at("seed").get<std::uint64_t>();
      if (file.contains("threads")) rc.exp.threads = file.at("threads").get<std::size_t>();
      if (file.contains("delta")) {
        rc.delta = file.at("delta").get<double>();
        rc.delta_given = true;
      }
      if (file.contains("out")) rc.out = file.at("out").get<std::string>();
      rc.train_inline = file.value("train_inline", false);
      rc.gradcheck = file.value("gradcheck", false);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }

    flags.apply(rc);
    if (seed) rc.exp.seed = *seed;
    if (threads) rc.exp.threads = *threads;
    if (delta) {
      rc.delta = *delta;
      rc.delta_given = true;
    }
    if (out) rc.out = *out;
    rc.train_inline = rc.train_inline || train_inline;
    rc.gradcheck = rc.gradcheck || gradcheck;

    if (rc.exp.threads == 0) throw ConfigError("threads must be >= 1");
    if (!(rc.delta > 0.0)) throw ConfigError("delta must be > 0");
    rc.exp.validate();
    return rc;
  }
};

// ------------------------------------------------------------------ layout

fs::path dataset_path(const RunConfig& rc, const char* split, double delta) {
  return fs::path(rc.out) / "dataset" /
         (std::string(split) + "_delta_" + io::format_double(delta) + ".csv");
}

fs::path model_path(const RunConfig& rc, double delta) {
  return fs::path(rc.out) / "models" / io::model_filename(delta);
}

fs::path report_path(const RunConfig& rc, const std::string& name) {
  return fs::path(rc.out) / "reports" / name;
}

json metadata(const RunConfig& rc, const char* command, double seconds) {
  return {{"command", command}, {"config", rc.to_json()}, {"seed", rc.exp.seed},
          {"wall_clock_seconds", seconds}};
}

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<double> levels_for(const RunConfig& rc) {
  return rc.delta_given ? std::vector<double>{rc.delta} : rc.exp.deltas;
}

/// Loads the stored model for a noise level, or trains it with --train-inline.
FilterNet model_for(const RunConfig& rc, double delta) {
  const fs::path path = model_path(rc, delta);
  if (fs::exists(path)) {
    io::ModelFile m = io::load_model(path);
    if (m.problem.n_modes != rc.exp.problem.n_modes || m.problem.p != rc.exp.problem.p ||
        m.problem.s != rc.exp.problem.s)
      throw ConfigError("model " + path.string() + " was trained for a different problem");
    return m.net;
  }
  if (!rc.train_inline)
    throw ConfigError("missing model " + path.string() +
                      " (run `scnet train` first or pass --train-inline)");
  std::printf("training inline model for delta = %s\n", io::format_double(delta).c_str());
  return train_for_delta(rc.exp, delta).net;
}

bool run_gradcheck() {
  const GradCheckResult r = standard_gradient_check();
  const bool ok = r.max_rel_error < 1e-5;
  std::printf("gradient check: max relative error %.3g over %zu parameters: %s\n",
              r.max_rel_error, static_cast<std::size_t>(r.analytic.size()), ok ? "ok" : "FAILED");
  return ok;
}

// ---------------------------------------------------------------- commands

int cmd_gen(const RunConfig& rc) {
  const auto t0 = Clock::now();
  json files = json::array();
  for (double delta : levels_for(rc)) {
    const auto train = training_set(rc.exp, delta);
    const auto test = test_set(rc.exp, delta);
    io::write_dataset_csv(dataset_path(rc, "train", delta), train);
    io::write_dataset_csv(dataset_path(rc, "test", delta), test);
    files.push_back({{"delta", delta},
                     {"train", dataset_path(rc, "train", delta).filename().string()},
                     {"test", dataset_path(rc, "test", delta).filename().string()},
                     {"n_train", train.size()},
                     {"n_test", test.size()}});
    std::printf("delta %s: %zu train / %zu test samples\n", io::format_double(delta).c_str(),
                train.size(), test.size());
  }
  json meta = metadata(rc, "gen", since(t0));
  meta["files"] = files;
  io::write_json(fs::path(rc.out) / "dataset" / "dataset.meta.json", meta);
  return 0;
}

int cmd_train(const RunConfig& rc) {
  if (rc.gradcheck && !run_gradcheck()) return 2;
  const SpectralOperator op = build_operator(rc.exp.problem);
  for (double delta : levels_for(rc)) {
    const auto t0 = Clock::now();
    const fs::path train_file = dataset_path(rc, "train", delta);
    if (!fs::exists(train_file))
      throw ConfigError("missing dataset " + train_file.string() + " (run `scnet gen` first)");
    const auto pairs = training_pairs(io::read_dataset_csv(train_file, rc.exp.problem.n_modes));
    std::vector<TrainingSample> test;
    if (const fs::path f = dataset_path(rc, "test", delta); fs::exists(f))
      test = training_pairs(io::read_dataset_csv(f, rc.exp.problem.n_modes));

    TrainConfig tc = rc.exp.train;
    tc.seed = SeedSequence(rc.exp.seed).key("model", {real_key(delta)});
    const TrainResult result = train(pairs, tc, op, test);
    io::save_model(model_path(rc, delta), result.net, rc.exp.problem, delta);
    const std::string stem = "history_delta_" + io::format_double(delta);
    io::write_history_csv(report_path(rc, stem + ".csv"), result.history);
    json meta = metadata(rc, "train", since(t0));
    meta["delta"] = delta;
    meta["initial_loss"] = result.initial_loss();
    meta["final_loss"] = result.final_loss();
    io::write_json(report_path(rc, stem + ".meta.json"), meta);
    std::printf("delta %s: loss %.6g -> %.6g, model %s\n", io::format_double(delta).c_str(),
                result.initial_loss(), result.final_loss(),
                model_path(rc, delta).string().c_str());
  }
  return 0;
}

int cmd_convergence(const RunConfig& rc) {
  const auto t0 = Clock::now();
  const ExperimentReport report =
      convergence_experiment(rc.exp, default_methods(), [&](double d) { return model_for(rc, d); });
  io::write_report_csv(report_path(rc, "convergence.csv"), report);

  // Per-sample oracle choices, one file per noise level.
  const SpectralOperator op = build_operator(rc.exp.problem);
  const auto tik_grid = default_alpha_grid();
  const auto tsvd_grid = truncation_alpha_grid(op);
  for (double delta : rc.exp.deltas) {
    std::vector<io::OracleRecord> rows;
    for (const auto& s : test_set(rc.exp, delta)) {
      const auto tik = oracle_search(FilterFamily::Tikhonov, op, s.y_coeffs, s.f, tik_grid);
      const auto tsvd = oracle_search(FilterFamily::TSVD, op, s.y_coeffs, s.f, tsvd_grid);
      rows.push_back({s.id, to_string(FilterFamily::Tikhonov), tik.alpha, tik.error});
      rows.push_back({s.id, to_string(FilterFamily::TSVD), tsvd.alpha, tsvd.error});
    }
    io::write_oracle_csv(report_path(rc, "oracle_delta_" + io::format_double(delta) + ".csv"),
                         rows);
  }

  json meta = metadata(rc, "convergence", since(t0));
  meta["slopes"] = io::slopes_to_json(report);
  meta["minimax_exponent"] = rc.exp.problem.s / (rc.exp.problem.s + rc.exp.problem.p);
  io::write_json(report_path(rc, "convergence.meta.json"), meta);
  for (const auto& [method, fit] : report.slopes)
    std::printf("%-22s slope %.4f (r^2 %.4f)\n", method.c_str(), fit.slope, fit.r_squared);
  return 0;
}

int cmd_profile(const RunConfig& rc) {
  const auto t0 = Clock::now();
  const SpectralOperator op = build_operator(rc.exp.problem);
  const FilterNet net = model_for(rc, rc.delta);
  const auto batch = test_set(rc.exp, rc.delta);
  const FilterProfile profile = filter_profile(net, op, batch);
  io::write_profile_csv(report_path(rc, "profile.csv"), profile);
  // Discrepancy residual against truncation level for the trained filter,
  // first test sample. Recorded only: monotonicity is not guaranteed for a
  // data-dependent Psi.
  const auto residuals =
      truncation_residuals(net, op, batch.front().y_coeffs, batch.front().out_of_band_sq);
  std::vector<double> psi, tik;
  for (const auto& r : profile.rows) {
    psi.push_back(r.psi_mean);
    tik.push_back(r.tikhonov);
  }
  json meta = metadata(rc, "profile", since(t0));
  meta["delta"] = rc.delta;
  meta["alpha_star"] = profile.alpha_star;
  meta["low_band_max_mode"] = 3;
  meta["high_band_min_mode"] = 32;
  meta["transition_width_scnet"] = transition_width(psi);
  meta["transition_width_tikhonov"] = transition_width(tik);
  meta["residual_curve_sample0"] = residuals;
  meta["residual_curve_monotone"] = std::is_sorted(residuals.rbegin(), residuals.rend());
  io::write_json(report_path(rc, "profile.meta.json"), meta);
  std::printf("profile written (%zu modes, alpha* = %.4g)\n", profile.rows.size(),
              profile.alpha_star);
  return 0;
}

int cmd_transfer(const RunConfig& rc) {
  const auto t0 = Clock::now();
  const FilterNet net = model_for(rc, rc.delta);
  const ExperimentReport report = resolution_transfer(net, rc.exp, rc.delta);
  io::write_report_csv(report_path(rc, "transfer.csv"), report);
  json meta = metadata(rc, "transfer", since(t0));
  meta["delta"] = rc.delta;
  meta["noise_scaling"] = "resolution_invariant";
  meta["reference_resolution"] = rc.exp.resolution;
  meta["replay_mean_errors"] = transfer_replay(net, rc.exp, rc.delta);
  io::write_json(report_path(rc, "transfer.meta.json"), meta);
  for (const auto& r : report.rows)
    std::printf("M = %5zu  mean error %.5f\n", r.resolution, r.mean_rel_error);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned spectral filters for linear inverse problems"};
  app.require_subcommand(1);
  Cli cli;
  cli.add_options(app);
  struct Command {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&);
  };
  const std::vector<Command> commands{
      {"gen", "generate train/test datasets", cmd_gen},
      {"train", "train per-noise-level models", cmd_train},
      {"convergence", "error versus noise level for all methods", cmd_convergence},
      {"profile", "learned filter against classical filters", cmd_profile},
      {"transfer", "zero-shot evaluation on finer grids", cmd_transfer},
      {"gradcheck", "finite-difference gradient oracle",
       [](const RunConfig&) { return run_gradcheck() ? 0 : 2; }},
  };
  for (const auto& c : commands) app.add_subcommand(c.name, c.help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const RunConfig rc = cli.resolve();
    std::cout << "config: " << rc.to_json().dump() << '\n' << std::flush;
    for (const auto& c : commands)
      if (app.got_subcommand(c.name)) return c.run(rc);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
