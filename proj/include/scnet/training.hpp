#pragma once

// Sobolev-weighted spectral loss, its exact gradient, Adam, and the training
// loop for FilterNet.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "scnet/error.hpp"
#include "scnet/filters.hpp"
#include "scnet/network.hpp"
#include "scnet/rng.hpp"
#include "scnet/spectral.hpp"

namespace scnet {

struct TrainConfig {
  double learning_rate = 1e-2;
  std::size_t batch_size = 64;
  std::size_t epochs = 200;
  double gamma = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 42;
  NetArchitecture arch{};

  void validate() const {
    detail::require(learning_rate > 0.0, "TrainConfig: learning_rate must be > 0");
    detail::require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
    detail::require(epochs >= 1, "TrainConfig: epochs must be >= 1");
    detail::require(gamma >= 0.0, "TrainConfig: gamma must be >= 0");
    detail::require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "TrainConfig: beta1 in [0,1)");
    detail::require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "TrainConfig: beta2 in [0,1)");
    detail::require(adam_eps > 0.0, "TrainConfig: adam_eps must be > 0");
    arch.validate();
  }
};

/// One training pair in coefficient space.
struct TrainingSample {
  SpectralCoeffs y_noisy;
  SpectralCoeffs f_true;
};

/// Per-mode loss weights 1 + gamma lambda_n.
inline std::vector<double> sobolev_weights(const SpectralOperator& op, double gamma) {
  std::vector<double> w(op.size());
  for (std::size_t i = 0; i < op.size(); ++i) w[i] = 1.0 + gamma * op.lambda()[i];
  return w;
}

/// sum_n (1 + gamma lambda_n) (f_hat_n - f_n)^2 over the retained modes.
inline double sobolev_loss(const SpectralCoeffs& f_hat, const SpectralCoeffs& f_true,
                           const SpectralOperator& op, double gamma) {
  detail::require_same_size(f_hat.size(), f_true.size(), "sobolev_loss");
  detail::require_same_size(f_hat.size(), op.size(), "sobolev_loss");
  double loss = 0.0;
  for (std::size_t i = 0; i < f_hat.size(); ++i) {
    const double r = f_hat[i] - f_true[i];
    loss += (1.0 + gamma * op.lambda()[i]) * r * r;
  }
  return loss;
}

/// Gradient-norm tail sum_{n > N} lambda_n |f_n|^2 of a source known beyond
/// the retained modes. Constant in the network parameters.
inline double sobolev_tail(const SpectralCoeffs& f_full, std::size_t n_modes) {
  double tail = 0.0;
  for (std::size_t i = n_modes; i < f_full.size(); ++i) {
    const double n = static_cast<double>(i + 1);
    tail += n * n * std::numbers::pi * std::numbers::pi * f_full[i] * f_full[i];
  }
  return tail;
}

struct LossGradient {
  double loss = 0.0;
  Vector grad;
};

/// Mean per-sample Sobolev loss of the batch and its exact gradient with
/// respect to every network parameter (flat layout of FilterNet::parameters).
inline LossGradient loss_gradient(const FilterNet& net, std::span<const TrainingSample> batch,
                                  const SpectralOperator& op, double gamma) {
  detail::require(!batch.empty(), "loss_gradient: empty batch");
  const std::size_t n = op.size();
  const auto cols = static_cast<Eigen::Index>(batch.size() * n);
  Matrix x(2, cols);
  std::vector<double> sig_feat(n);
  for (std::size_t i = 0; i < n; ++i) sig_feat[i] = net.normalizer().sigma_feature(op.sigma()[i]);
  for (std::size_t s = 0; s < batch.size(); ++s) {
    detail::require_same_size(batch[s].y_noisy.size(), n, "loss_gradient");
    detail::require_same_size(batch[s].f_true.size(), n, "loss_gradient");
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<Eigen::Index>(s * n + i);
      x(0, c) = net.normalizer().y_feature(i + 1, batch[s].y_noisy[i]);
      x(1, c) = sig_feat[i];
    }
  }
  ForwardCache cache;
  const Matrix psi = net.forward_features(x, &cache);
  const std::vector<double> w = sobolev_weights(op, gamma);
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  Matrix d_psi(1, cols);
  double loss = 0.0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<Eigen::Index>(s * n + i);
      const double naive = batch[s].y_noisy[i] / op.sigma()[i];
      const double r = psi(0, c) * naive - batch[s].f_true[i];
      loss += w[i] * r * r;
      d_psi(0, c) = 2.0 * inv_b * w[i] * r * naive;
    }
  }
  LossGradient out;
  out.loss = loss * inv_b;
  out.grad = Vector::Zero(static_cast<Eigen::Index>(net.n_params()));
  net.backward(cache, d_psi, out.grad);
  return out;
}

/// Mean Sobolev loss without the gradient.
inline double mean_loss(const FilterNet& net, std::span<const TrainingSample> data,
                        const SpectralOperator& op, double gamma) {
  detail::require(!data.empty(), "mean_loss: empty data");
  const std::vector<double> w = sobolev_weights(op, gamma);
  double total = 0.0;
  constexpr std::size_t chunk = 256;
  std::vector<SpectralCoeffs> ys;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t end = std::min(data.size(), start + chunk);
    ys.clear();
    for (std::size_t s = start; s < end; ++s) ys.push_back(data[s].y_noisy);
    const Matrix psi = net.psi_batch(op, ys);
    for (std::size_t s = start; s < end; ++s)
      for (std::size_t i = 0; i < op.size(); ++i) {
        const double r = psi(static_cast<Eigen::Index>(s - start), static_cast<Eigen::Index>(i)) *
                             data[s].y_noisy[i] / op.sigma()[i] -
                         data[s].f_true[i];
        total += w[i] * r * r;
      }
  }
  return total / static_cast<double>(data.size());
}

/// Mean relative L2 error of the network reconstruction against the truth.
inline double mean_relative_error(const FilterNet& net, std::span<const TrainingSample> data,
                                  const SpectralOperator& op) {
  detail::require(!data.empty(), "mean_relative_error: empty data");
  std::vector<SpectralCoeffs> ys;
  ys.reserve(data.size());
  for (const auto& d : data) ys.push_back(d.y_noisy);
  const Matrix psi = net.psi_batch(op, ys);
  double total = 0.0;
  for (std::size_t s = 0; s < data.size(); ++s) {
    double diff = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < op.size(); ++i) {
      const double f_hat = psi(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i)) *
                           data[s].y_noisy[i] / op.sigma()[i];
      diff += (f_hat - data[s].f_true[i]) * (f_hat - data[s].f_true[i]);
      ref += data[s].f_true[i] * data[s].f_true[i];
    }
    if (ref == 0.0) throw NumericalError("mean_relative_error: zero reference source");
    total += std::sqrt(diff / ref);
  }
  return total / static_cast<double>(data.size());
}

struct AdamState {
  Vector m;
  Vector v;
  std::size_t t = 0;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamConfig from(const TrainConfig& cfg) {
    return {cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
  }
};

/// Bias-corrected Adam update, in place.
inline void adam_step(Vector& params, const Vector& grads, AdamState& state,
                      const AdamConfig& cfg) {
  detail::require_same_size(static_cast<std::size_t>(params.size()),
                            static_cast<std::size_t>(grads.size()), "adam_step");
  if (state.m.size() != params.size()) {
    state.m = Vector::Zero(params.size());
    state.v = Vector::Zero(params.size());
    state.t = 0;
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

struct HistoryRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double test_rel_error = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  FilterNet net;
  std::vector<HistoryRow> history;  ///< row 0 is the untrained network

  double initial_loss() const { return history.front().train_loss; }
  double final_loss() const { return history.back().train_loss; }
};

/// Trains a fresh network on `dataset`. The feature normalizer is fit on the
/// training inputs; `test` (optional) is scored after every epoch.
///
/// Throws NumericalError when the loss becomes non-finite or exceeds 1e3
/// times its initial value. The returned net is the final iterate.
inline TrainResult train(std::span<const TrainingSample> dataset, const TrainConfig& cfg,
                         const SpectralOperator& op, std::span<const TrainingSample> test = {}) {
  cfg.validate();
  detail::require(!dataset.empty(), "train: empty dataset");
  const SeedSequence seeds(cfg.seed);

  std::vector<SpectralCoeffs> inputs;
  inputs.reserve(dataset.size());
  for (const auto& d : dataset) inputs.push_back(d.y_noisy);
  Engine init_rng = seeds.stream("init");
  TrainResult result;
  result.net = FilterNet::glorot(cfg.arch, FeatureNormalizer::fit(op, inputs), init_rng);

  auto record = [&](std::size_t epoch) {
    HistoryRow row{epoch, mean_loss(result.net, dataset, op, cfg.gamma)};
    if (!test.empty()) row.test_rel_error = mean_relative_error(result.net, test, op);
    result.history.push_back(row);
    return row.train_loss;
  };
  const double initial = record(0);
  if (!std::isfinite(initial)) throw NumericalError("train: initial loss is not finite");

  Vector params = result.net.parameters();
  AdamState adam;
  const AdamConfig adam_cfg = AdamConfig::from(cfg);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Engine shuffle_rng = seeds.stream("shuffle");
  std::vector<TrainingSample> batch;
  batch.reserve(cfg.batch_size);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(dataset[order[k]]);
      const LossGradient lg = loss_gradient(result.net, batch, op, cfg.gamma);
      if (!std::isfinite(lg.loss) || !lg.grad.allFinite())
        throw NumericalError("train: non-finite loss or gradient at epoch " +
                             std::to_string(epoch));
      adam_step(params, lg.grad, adam, adam_cfg);
      result.net.set_parameters(params);
    }
    const double loss = record(epoch);
    if (!std::isfinite(loss) || loss > 1e3 * initial)
      throw NumericalError("train: diverged at epoch " + std::to_string(epoch) +
                           " (loss " + std::to_string(loss) + ", initial " +
                           std::to_string(initial) + ")");
  }
  return result;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  Vector analytic;
  Vector numeric;
};

/// Central finite differences of the mean batch loss against loss_gradient.
/// Relative error per entry is |a - n| / max(|a|, |n|, floor).
inline GradCheckResult gradient_check(const FilterNet& net, std::span<const TrainingSample> batch,
                                      const SpectralOperator& op, double gamma,
                                      double step = 1e-5, double floor = 1e-8) {
  GradCheckResult out;
  out.analytic = loss_gradient(net, batch, op, gamma).grad;
  FilterNet probe = net;
  Vector params = net.parameters();
  out.numeric = Vector::Zero(params.size());
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + step;
    probe.set_parameters(params);
    const double up = mean_loss(probe, batch, op, gamma);
    params[i] = saved - step;
    probe.set_parameters(params);
    const double down = mean_loss(probe, batch, op, gamma);
    params[i] = saved;
    out.numeric[i] = (up - down) / (2.0 * step);
    const double a = out.analytic[i], n = out.numeric[i];
    const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
    if (rel > out.max_rel_error) {
      out.max_rel_error = rel;
      out.worst_index = static_cast<std::size_t>(i);
    }
  }
  return out;
}

/// The fixed small problem used as the pre-training gradient gate:
/// one hidden layer of 2 units, 3 modes, 2 samples.
inline GradCheckResult standard_gradient_check(std::uint64_t seed = 42) {
  ProblemConfig pc;
  pc.n_modes = 3;
  const SpectralOperator op = build_operator(pc);
  const SeedSequence seeds(seed);
  Engine rng = seeds.stream("gradcheck");
  std::vector<TrainingSample> batch;
  std::vector<SpectralCoeffs> ys;
  for (int s = 0; s < 2; ++s) {
    SpectralCoeffs f = sample_source(pc, rng);
    SpectralCoeffs y = forward(op, f);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += 0.05 * standard_normal(rng);
    ys.push_back(y);
    batch.push_back({y, f});
  }
  NetArchitecture arch;
  arch.hidden = {2};
  FilterNet net = FilterNet::glorot(arch, FeatureNormalizer::fit(op, ys), rng);
  Vector p = net.parameters();
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] += 0.3 * standard_normal(rng);
  net.set_parameters(p);
  return gradient_check(net, batch, op, 0.1);
}

struct TargetFitResult {
  FilterNet net;
  double sup_error = std::numeric_limits<double>::infinity();
  bool reached = false;
  std::size_t iterations = 0;
};

struct TargetFitConfig {
  std::size_t width = 32;
  std::size_t max_iterations = 20000;
  std::size_t train_points = 256;
  std::size_t eval_points = 4096;
  double learning_rate = 1e-2;
  std::uint64_t seed = 42;
};

/// Regresses the sigma-only network Psi(0, .) onto a multiplicative target
/// coefficient (e.g. g*(sigma) sigma for a classical filter) over [sigma_lo, sigma_hi] with one hidden layer of the given
/// width. Stops as soon as the sup error on a dense log-spaced grid drops
/// below `tolerance`; otherwise reports the best sup error reached.
inline TargetFitResult fit_to_target_filter(const std::function<double(double)>& target,
                                            double sigma_lo, double sigma_hi, double tolerance,
                                            const TargetFitConfig& cfg = {}) {
  detail::require(sigma_lo > 0.0 && sigma_hi > sigma_lo, "fit_to_target_filter: bad sigma range");
  detail::require(cfg.width >= 1, "fit_to_target_filter: width must be >= 1");

  const std::vector<double> train_sigma = log_grid(sigma_lo, sigma_hi, cfg.train_points);
  const std::vector<double> eval_sigma = log_grid(sigma_lo, sigma_hi, cfg.eval_points);

  FeatureNormalizer norm;
  norm.logsig_mean = 0.5 * (std::log(sigma_lo) + std::log(sigma_hi));
  norm.logsig_scale = 0.5 * (std::log(sigma_hi) - std::log(sigma_lo));

  NetArchitecture arch;
  arch.hidden = {cfg.width};
  Engine rng = SeedSequence(cfg.seed).stream("fit-target", {cfg.width});
  FilterNet net = FilterNet::glorot(arch, norm, rng);

  auto inputs = [&](const std::vector<double>& sig) {
    Matrix x(2, static_cast<Eigen::Index>(sig.size()));
    for (std::size_t j = 0; j < sig.size(); ++j) {
      const auto f = net.features(1, 0.0, sig[j]);
      x(0, static_cast<Eigen::Index>(j)) = f[0];
      x(1, static_cast<Eigen::Index>(j)) = f[1];
    }
    return x;
  };
  auto targets = [&](const std::vector<double>& sig) {
    std::vector<double> t(sig.size());
    for (std::size_t j = 0; j < sig.size(); ++j) t[j] = target(sig[j]);
    return t;
  };
  const Matrix x_train = inputs(train_sigma), x_eval = inputs(eval_sigma);
  const std::vector<double> t_train = targets(train_sigma), t_eval = targets(eval_sigma);

  auto sup_error = [&](const FilterNet& candidate) {
    const Matrix out = candidate.forward_features(x_eval);
    double worst = 0.0;
    for (std::size_t j = 0; j < t_eval.size(); ++j)
      worst = std::max(worst, std::abs(out(0, static_cast<Eigen::Index>(j)) - t_eval[j]));
    return worst;
  };

  TargetFitResult best;
  best.net = net;
  best.sup_error = sup_error(net);
  Vector params = net.parameters();
  AdamState adam;
  const double inv_n = 1.0 / static_cast<double>(t_train.size());
  for (std::size_t it = 1; it <= cfg.max_iterations && best.sup_error >= tolerance; ++it) {
    ForwardCache cache;
    const Matrix out = net.forward_features(x_train, &cache);
    Matrix d(1, out.cols());
    for (Eigen::Index j = 0; j < out.cols(); ++j)
      d(0, j) = 2.0 * inv_n * (out(0, j) - t_train[static_cast<std::size_t>(j)]);
    Vector grad = Vector::Zero(params.size());
    net.backward(cache, d, grad);
    // Step size decays by 10x over the budget.
    const double frac = static_cast<double>(it) / static_cast<double>(cfg.max_iterations);
    adam_step(params, grad, adam, {cfg.learning_rate * std::pow(0.1, frac)});
    net.set_parameters(params);
    if (it % 50 == 0 || it == cfg.max_iterations) {
      const double e = sup_error(net);
      if (e < best.sup_error) {
        best.sup_error = e;
        best.net = net;
        best.iterations = it;
      }
    }
  }
  best.reached = best.sup_error < tolerance;
  return best;
}

inline TargetFitResult fit_to_target_filter(const FilterSpec& target, double sigma_lo,
                                            double sigma_hi, double tolerance,
                                            const TargetFitConfig& cfg = {}) {
  target.validate();
  return fit_to_target_filter([&](double s) { return filter_coefficient(target, s); }, sigma_lo,
                              sigma_hi, tolerance, cfg);
}

/// max |Psi(0, sigma) - target(sigma)| over `points` log-spaced sigmas.
inline double target_sup_error(const FilterNet& net, const std::function<double(double)>& target,
                               double sigma_lo, double sigma_hi, std::size_t points = 4096) {
  double worst = 0.0;
  for (double s : log_grid(sigma_lo, sigma_hi, points))
    worst = std::max(worst, std::abs(net.psi(1, 0.0, s) - target(s)));
  return worst;
}

}  // namespace scnet
