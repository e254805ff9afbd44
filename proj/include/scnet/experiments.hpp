#pragma once

// Data generation and the three experiments: convergence-rate sweep, learned
// filter profile, and zero-shot resolution transfer.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scnet/error.hpp"
#include "scnet/filters.hpp"
#include "scnet/network.hpp"
#include "scnet/rng.hpp"
#include "scnet/spectral.hpp"
#include "scnet/training.hpp"

namespace scnet {

/// One simulated measurement: source, clean and noisy data on the grid, and
/// the noisy data projected onto the retained modes.
struct Sample {
  std::size_t id = 0;
  SpectralCoeffs f;
  GridFunction y_clean;
  GridFunction y_noisy;
  SpectralCoeffs y_coeffs;
  double noise_norm = 0.0;      ///< ||y_noisy - y_clean|| on the grid
  double out_of_band_sq = 0.0;  ///< energy of y_noisy outside the retained modes

  TrainingSample training_pair() const { return {y_coeffs, f}; }
};

/// How the noise level is tied to the grid.
enum class NoiseScaling {
  /// ||e|| = delta ||y|| on every grid.
  FixedGridNorm,
  /// Cell-averaged white noise whose intensity is fixed at the training
  /// resolution: ||e|| = delta ||y|| sqrt(M / M_train). The noise in each
  /// retained coefficient then has the same variance on every grid.
  ResolutionInvariant,
};

struct SampleRequest {
  std::string split;           ///< stream label for sources, e.g. "train"
  double delta = 0.0;
  std::size_t resolution = 256;
  std::size_t reference_resolution = 0;  ///< 0: plain relative noise
  std::size_t first_id = 0;
  std::size_t count = 0;
};

/// Sources are keyed by (split, id) so that every noise level and resolution
/// sees the same sources; noise is keyed by (split, delta, resolution, id).
inline Sample generate_sample(const ProblemConfig& problem, const SpectralOperator& op,
                              const SineBasis& basis, const SeedSequence& seeds,
                              const SampleRequest& req, std::size_t id) {
  Sample s;
  s.id = id;
  Engine src = seeds.stream(req.split + "/source", {id});
  s.f = sample_source(problem, src);
  s.y_clean = basis.synthesize(forward(op, s.f));
  Engine noise = seeds.stream(req.split + "/noise", {real_key(req.delta), req.resolution, id});
  s.y_noisy = add_noise(s.y_clean, req.delta, noise, req.reference_resolution);
  GridFunction e = s.y_noisy;
  for (std::size_t i = 0; i < e.values.size(); ++i) e.values[i] -= s.y_clean.values[i];
  s.noise_norm = norm(e);
  s.y_coeffs = basis.analyze(s.y_noisy);
  s.out_of_band_sq = out_of_band_energy(s.y_noisy, s.y_coeffs);
  return s;
}

inline std::vector<Sample> generate_samples(const ProblemConfig& problem, const SeedSequence& seeds,
                                            const SampleRequest& req) {
  const SpectralOperator op = build_operator(problem);
  if (req.resolution < 2 * problem.n_modes)
    throw NumericalError("generate_samples: resolution " + std::to_string(req.resolution) +
                         " violates the aliasing guard for " + std::to_string(problem.n_modes) +
                         " modes");
  const SineBasis basis(req.resolution, problem.n_modes);
  std::vector<Sample> out;
  out.reserve(req.count);
  for (std::size_t k = 0; k < req.count; ++k)
    out.push_back(generate_sample(problem, op, basis, seeds, req, req.first_id + k));
  return out;
}

inline std::vector<TrainingSample> training_pairs(const std::vector<Sample>& samples) {
  std::vector<TrainingSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.training_pair());
  return out;
}

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Least squares fit of log10(error) = slope * log10(delta) + intercept.
inline SlopeFit fit_slope(std::span<const double> deltas, std::span<const double> errors) {
  detail::require_same_size(deltas.size(), errors.size(), "fit_slope");
  detail::require(deltas.size() >= 3, "fit_slope: need at least 3 points");
  const std::size_t n = deltas.size();
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(deltas[i] > 0.0) || !(errors[i] > 0.0))
      throw ConfigError("fit_slope: inputs must be positive");
    x[i] = std::log10(deltas[i]);
    y[i] = std::log10(errors[i]);
  }
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  detail::require(sxx > 0.0, "fit_slope: deltas must not all be equal");
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (fit.slope * x[i] + fit.intercept);
    ss_res += r * r;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return fit;
}

struct ReportRow {
  std::string method;
  double delta = 0.0;
  std::size_t resolution = 0;
  double mean_rel_error = 0.0;
  double std_rel_error = 0.0;
  std::size_t n_test = 0;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
  std::map<std::string, SlopeFit> slopes;

  const ReportRow* find(const std::string& method, double delta, std::size_t resolution = 0) const {
    for (const auto& r : rows)
      if (r.method == method && r.delta == delta && (resolution == 0 || r.resolution == resolution))
        return &r;
    return nullptr;
  }

  /// Fits a slope for every method with at least three noise levels.
  void fit_slopes() {
    slopes.clear();
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_method;
    for (const auto& r : rows) {
      by_method[r.method].first.push_back(r.delta);
      by_method[r.method].second.push_back(r.mean_rel_error);
    }
    for (const auto& [method, xy] : by_method) {
      std::vector<double> distinct = xy.first;
      std::sort(distinct.begin(), distinct.end());
      distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
      if (distinct.size() >= 3) slopes[method] = fit_slope(xy.first, xy.second);
    }
  }
};

inline ReportRow summarize(std::string method, double delta, std::size_t resolution,
                           const std::vector<double>& errors) {
  detail::require(!errors.empty(), "summarize: no samples");
  ReportRow row{std::move(method), delta, resolution};
  row.n_test = errors.size();
  const double n = static_cast<double>(errors.size());
  row.mean_rel_error = std::accumulate(errors.begin(), errors.end(), 0.0) / n;
  double var = 0.0;
  for (double e : errors) var += (e - row.mean_rel_error) * (e - row.mean_rel_error);
  row.std_rel_error = errors.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  return row;
}

/// Parameters shared by all experiments.
struct ExperimentConfig {
  ProblemConfig problem{};
  std::size_t resolution = 256;  ///< training grid
  std::size_t n_train = 2000;
  std::size_t n_test = 500;
  std::vector<double> deltas{1e-1, 5e-2, 1e-2, 5e-3, 1e-3};
  std::vector<std::size_t> resolutions{256, 512, 1024, 2048};
  double tau_safety = 1.1;
  std::size_t threads = 1;
  TrainConfig train{};
  std::uint64_t seed = 42;

  /// Scaled CI mode: 200 training / 100 test samples. Small batches and a
  /// larger step keep the number of optimizer updates close to the full run.
  void apply_fast() {
    n_train = 200;
    n_test = 100;
    train.epochs = 300;
    train.batch_size = 16;
    train.learning_rate = 3e-3;
  }

  void validate() const {
    problem.validate();
    train.validate();
    detail::require(n_train >= 1 && n_test >= 1, "ExperimentConfig: empty split");
    detail::require(tau_safety > 1.0, "ExperimentConfig: tau_safety must be > 1");
    for (double d : deltas) detail::require(d > 0.0, "ExperimentConfig: deltas must be > 0");
    if (resolution < 2 * problem.n_modes)
      throw NumericalError("ExperimentConfig: training resolution violates the aliasing guard");
    for (std::size_t m : resolutions)
      if (m < 2 * problem.n_modes)
        throw NumericalError("ExperimentConfig: resolution " + std::to_string(m) +
                             " violates the aliasing guard");
  }
};

/// Training set for one noise level on the training grid.
inline std::vector<Sample> training_set(const ExperimentConfig& cfg, double delta) {
  return generate_samples(cfg.problem, SeedSequence(cfg.seed),
                          {"train", delta, cfg.resolution, 0, 0, cfg.n_train});
}

inline std::vector<Sample> test_set(const ExperimentConfig& cfg, double delta) {
  return generate_samples(cfg.problem, SeedSequence(cfg.seed),
                          {"test", delta, cfg.resolution, 0, 0, cfg.n_test});
}

/// Trains the per-noise-level network with the experiment's settings.
inline TrainResult train_for_delta(const ExperimentConfig& cfg, double delta) {
  const SpectralOperator op = build_operator(cfg.problem);
  const auto pairs = training_pairs(training_set(cfg, delta));
  TrainConfig tc = cfg.train;
  tc.seed = SeedSequence(cfg.seed).key("model", {real_key(delta)});
  return train(pairs, tc, op);
}

/// Supplies the trained network for a noise level.
using ModelProvider = std::function<FilterNet(double delta)>;

inline ModelProvider inline_trainer(const ExperimentConfig& cfg) {
  return [cfg](double delta) { return train_for_delta(cfg, delta).net; };
}

namespace methods {
inline constexpr const char* scnet = "scnet";
inline constexpr const char* oracle_tikhonov = "oracle_tikhonov";
inline constexpr const char* oracle_tsvd = "oracle_tsvd";
inline constexpr const char* discrepancy_tikhonov = "discrepancy_tikhonov";
inline constexpr const char* discrepancy_tsvd = "discrepancy_tsvd";
inline constexpr const char* naive = "naive";
}  // namespace methods

inline std::vector<std::string> default_methods() {
  return {methods::scnet,          methods::oracle_tikhonov,  methods::oracle_tsvd,
          methods::discrepancy_tikhonov, methods::discrepancy_tsvd, methods::naive};
}

/// Per-sample errors of every requested method on one test set.
inline std::map<std::string, std::vector<double>> evaluate_methods(
    const std::vector<std::string>& method_names, const FilterNet* net,
    const SpectralOperator& op, const std::vector<Sample>& test, double tau_safety) {
  std::map<std::string, std::vector<double>> errors;
  const auto want = [&](const char* m) {
    return std::find(method_names.begin(), method_names.end(), m) != method_names.end();
  };
  const std::vector<double> alpha_grid = default_alpha_grid();
  const std::vector<double> tsvd_grid = truncation_alpha_grid(op);

  if (want(methods::scnet)) {
    if (!net) throw ConfigError("evaluate_methods: scnet requested without a model");
    std::vector<SpectralCoeffs> ys;
    for (const auto& s : test) ys.push_back(s.y_coeffs);
    const Matrix psi = net->psi_batch(op, ys);
    auto& out = errors[methods::scnet];
    for (std::size_t k = 0; k < test.size(); ++k) {
      SpectralCoeffs f_hat(op.size());
      for (std::size_t i = 0; i < op.size(); ++i)
        f_hat[i] = psi(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) *
                   test[k].y_coeffs[i] / op.sigma()[i];
      out.push_back(rel_l2_error(f_hat, test[k].f));
    }
  }
  for (const auto& s : test) {
    if (want(methods::oracle_tikhonov))
      errors[methods::oracle_tikhonov].push_back(
          oracle_search(FilterFamily::Tikhonov, op, s.y_coeffs, s.f, alpha_grid).error);
    if (want(methods::oracle_tsvd))
      errors[methods::oracle_tsvd].push_back(
          oracle_search(FilterFamily::TSVD, op, s.y_coeffs, s.f, tsvd_grid).error);
    if (want(methods::discrepancy_tikhonov)) {
      const auto choice = discrepancy_alpha(FilterFamily::Tikhonov, op, s.y_coeffs, s.noise_norm,
                                            alpha_grid, tau_safety, s.out_of_band_sq);
      errors[methods::discrepancy_tikhonov].push_back(
          rel_l2_error(apply_filter(FilterSpec::tikhonov(choice.alpha), op, s.y_coeffs), s.f));
    }
    if (want(methods::discrepancy_tsvd)) {
      const auto choice = discrepancy_truncation(op, UnitFilter{}, s.y_coeffs, s.noise_norm,
                                                 tau_safety, s.out_of_band_sq);
      errors[methods::discrepancy_tsvd].push_back(
          rel_l2_error(naive_inverse(op, s.y_coeffs, choice.n_opt), s.f));
    }
    if (want(methods::naive))
      errors[methods::naive].push_back(rel_l2_error(naive_inverse(op, s.y_coeffs), s.f));
  }
  return errors;
}

/// Runs `tasks` functions with at most `threads` in flight; results keep the
/// task order.
template <class T>
std::vector<T> run_ordered(std::vector<std::function<T()>> tasks, std::size_t threads) {
  std::vector<T> out;
  out.reserve(tasks.size());
  if (threads <= 1) {
    for (auto& t : tasks) out.push_back(t());
    return out;
  }
  for (std::size_t start = 0; start < tasks.size(); start += threads) {
    std::vector<std::future<T>> running;
    const std::size_t end = std::min(tasks.size(), start + threads);
    for (std::size_t i = start; i < end; ++i)
      running.push_back(std::async(std::launch::async, tasks[i]));
    for (auto& f : running) out.push_back(f.get());
  }
  return out;
}

/// Mean relative test error per (method, delta), with fitted log-log slopes.
inline ExperimentReport convergence_experiment(const ExperimentConfig& cfg,
                                               const std::vector<std::string>& method_names,
                                               const ModelProvider& models) {
  cfg.validate();
  const SpectralOperator op = build_operator(cfg.problem);
  const bool needs_net =
      std::find(method_names.begin(), method_names.end(), methods::scnet) != method_names.end();
  std::vector<std::function<std::map<std::string, std::vector<double>>()>> tasks;
  for (double delta : cfg.deltas) {
    tasks.push_back([&, delta] {
      std::optional<FilterNet> net;
      if (needs_net) net = models(delta);
      return evaluate_methods(method_names, net ? &*net : nullptr, op, test_set(cfg, delta),
                              cfg.tau_safety);
    });
  }
  const auto results = run_ordered(std::move(tasks), cfg.threads);
  ExperimentReport report;
  for (const auto& name : method_names)
    for (std::size_t d = 0; d < cfg.deltas.size(); ++d)
      report.rows.push_back(
          summarize(name, cfg.deltas[d], cfg.resolution, results[d].at(name)));
  report.fit_slopes();
  return report;
}

struct ProfileRow {
  std::size_t n = 0;
  double sigma = 0.0;
  double psi_mean = 0.0;
  double psi_std = 0.0;
  double tikhonov = 0.0;
  double tsvd = 0.0;
};

struct FilterProfile {
  std::vector<ProfileRow> rows;
  double alpha_star = 0.0;  ///< Wiener-equivalent Tikhonov penalty
};

/// Batch statistics of Psi per mode, next to the Tikhonov coefficient with
/// the Wiener penalty alpha* = (delta_abs / ||f||)^2 (batch means) and the
/// matching TSVD step sigma_n^2 >= alpha*.
inline FilterProfile filter_profile(const FilterNet& net, const SpectralOperator& op,
                                    const std::vector<Sample>& batch) {
  detail::require(!batch.empty(), "filter_profile: empty batch");
  std::vector<SpectralCoeffs> ys;
  double noise = 0.0, fnorm = 0.0;
  for (const auto& s : batch) {
    ys.push_back(s.y_coeffs);
    noise += s.noise_norm;
    fnorm += norm(s.f);
  }
  noise /= static_cast<double>(batch.size());
  fnorm /= static_cast<double>(batch.size());
  const FilterSpec wiener = FilterSpec::wiener(noise, fnorm);
  const Matrix psi = net.psi_batch(op, ys);

  FilterProfile profile;
  profile.alpha_star = wiener.wiener_alpha();
  const double count = static_cast<double>(batch.size());
  for (std::size_t i = 0; i < op.size(); ++i) {
    ProfileRow row;
    row.n = i + 1;
    row.sigma = op.sigma()[i];
    double mean = 0.0;
    for (std::size_t k = 0; k < batch.size(); ++k)
      mean += psi(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i));
    mean /= count;
    double var = 0.0;
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const double d = psi(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) - mean;
      var += d * d;
    }
    row.psi_mean = mean;
    row.psi_std = batch.size() > 1 ? std::sqrt(var / (count - 1.0)) : 0.0;
    row.tikhonov = filter_coefficient(FilterSpec::tikhonov(profile.alpha_star), row.sigma);
    row.tsvd = row.sigma * row.sigma >= profile.alpha_star ? 1.0 : 0.0;
    profile.rows.push_back(row);
  }
  return profile;
}

/// Number of entries strictly between 0.1 and 0.9.
inline std::size_t transition_width(const std::vector<double>& coefficients) {
  return static_cast<std::size_t>(std::count_if(coefficients.begin(), coefficients.end(),
                                                [](double v) { return v > 0.1 && v < 0.9; }));
}

/// Evaluates a frozen network on fresh test data generated at each
/// resolution: sources, clean data synthesized on the grid, noise, analysis
/// to the retained modes, reconstruction, and grid-space relative error.
inline ExperimentReport resolution_transfer(const FilterNet& net, const ExperimentConfig& cfg,
                                            double delta,
                                            NoiseScaling scaling = NoiseScaling::ResolutionInvariant) {
  cfg.validate();
  const SpectralOperator op = build_operator(cfg.problem);
  const SeedSequence seeds(cfg.seed);
  ExperimentReport report;
  for (std::size_t m : cfg.resolutions) {
    SampleRequest req{"transfer/" + std::to_string(m), delta, m,
                      scaling == NoiseScaling::ResolutionInvariant ? cfg.resolution : 0, 0,
                      cfg.n_test};
    const auto samples = generate_samples(cfg.problem, seeds, req);
    const SineBasis basis(m, op.size());
    std::vector<SpectralCoeffs> ys;
    for (const auto& s : samples) ys.push_back(s.y_coeffs);
    const Matrix psi = net.psi_batch(op, ys);
    std::vector<double> errors;
    for (std::size_t k = 0; k < samples.size(); ++k) {
      SpectralCoeffs f_hat(op.size());
      for (std::size_t i = 0; i < op.size(); ++i)
        f_hat[i] = psi(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) *
                   samples[k].y_coeffs[i] / op.sigma()[i];
      errors.push_back(rel_l2_error(basis.synthesize(f_hat), basis.synthesize(samples[k].f)));
    }
    report.rows.push_back(summarize(methods::scnet, delta, m, errors));
  }
  return report;
}

/// Controlled replay: one fixed set of in-band coefficient noise is added to
/// the clean data on every grid, so any change in the spectral-domain error
/// across resolutions comes from quadrature alone. Returns the mean spectral
/// error per resolution.
inline std::vector<double> transfer_replay(const FilterNet& net, const ExperimentConfig& cfg,
                                           double delta) {
  cfg.validate();
  const SpectralOperator op = build_operator(cfg.problem);
  const SeedSequence seeds(cfg.seed);
  std::vector<SpectralCoeffs> f(cfg.n_test), noisy_coeffs(cfg.n_test);
  for (std::size_t k = 0; k < cfg.n_test; ++k) {
    Engine src = seeds.stream("replay/source", {k});
    f[k] = sample_source(cfg.problem, src);
    SpectralCoeffs y = forward(op, f[k]);
    Engine noise = seeds.stream("replay/noise", {real_key(delta), k});
    SpectralCoeffs e(op.size());
    for (std::size_t i = 0; i < op.size(); ++i) e[i] = standard_normal(noise);
    const double scale = delta * norm(y) / norm(e);
    for (std::size_t i = 0; i < op.size(); ++i) y[i] += scale * e[i];
    noisy_coeffs[k] = y;
  }
  std::vector<double> means;
  for (std::size_t m : cfg.resolutions) {
    const SineBasis basis(m, op.size());
    double total = 0.0;
    for (std::size_t k = 0; k < cfg.n_test; ++k) {
      const SpectralCoeffs y = basis.analyze(basis.synthesize(noisy_coeffs[k]));
      total += rel_l2_error(reconstruct(net, op, y), f[k]);
    }
    means.push_back(total / static_cast<double>(cfg.n_test));
  }
  return means;
}

}  // namespace scnet
