#pragma once

// Pointwise filter network Psi(y_n, sigma_n): a small tanh MLP with a
// sigmoid output, so every evaluation lies in (0, 1).

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "scnet/error.hpp"
#include "scnet/filters.hpp"
#include "scnet/rng.hpp"
#include "scnet/spectral.hpp"

namespace scnet {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct NetArchitecture {
  static constexpr std::size_t input_dim = 2;
  std::vector<std::size_t> hidden{32, 32};

  std::size_t n_layers() const noexcept { return hidden.size() + 1; }
  std::size_t fan_in(std::size_t layer) const { return layer == 0 ? input_dim : hidden[layer - 1]; }
  std::size_t fan_out(std::size_t layer) const {
    return layer == hidden.size() ? 1 : hidden[layer];
  }

  void validate() const {
    for (std::size_t w : hidden) detail::require(w >= 1, "NetArchitecture: zero-width layer");
  }
};

/// Maps raw (y_n, sigma_n) to network inputs:
///   yhat = (y_n - y_mean[n]) / y_scale[n]       (identity when no statistics)
///   shat = (log sigma_n - logsig_mean) / logsig_scale
/// The per-mode statistics are indexed by mode number only, never by grid
/// size, so the same normalizer applies at every resolution.
struct FeatureNormalizer {
  std::vector<double> y_mean;
  std::vector<double> y_scale;
  double logsig_mean = 0.0;
  double logsig_scale = 1.0;

  bool per_mode() const noexcept { return !y_mean.empty(); }

  void validate() const {
    detail::require_same_size(y_mean.size(), y_scale.size(), "FeatureNormalizer");
    for (double s : y_scale)
      detail::require(s != 0.0 && std::isfinite(s), "FeatureNormalizer: zero scale");
    detail::require(logsig_scale != 0.0 && std::isfinite(logsig_scale),
                    "FeatureNormalizer: zero scale");
  }

  double y_feature(std::size_t mode, double y) const {
    if (!per_mode()) return y;
    if (mode == 0 || mode > y_mean.size())
      throw ConfigError("FeatureNormalizer: mode " + std::to_string(mode) +
                        " outside the recorded statistics");
    return (y - y_mean[mode - 1]) / y_scale[mode - 1];
  }

  double sigma_feature(double sigma) const {
    return (std::log(sigma) - logsig_mean) / logsig_scale;
  }

  /// log sigma standardized over the operator's modes; y left unscaled.
  static FeatureNormalizer for_spectrum(const SpectralOperator& op) {
    FeatureNormalizer norm;
    double mean = 0.0;
    for (double s : op.sigma()) mean += std::log(s);
    mean /= static_cast<double>(op.size());
    double var = 0.0;
    for (double s : op.sigma()) var += (std::log(s) - mean) * (std::log(s) - mean);
    var /= static_cast<double>(op.size());
    norm.logsig_mean = mean;
    norm.logsig_scale = var > 0.0 ? std::sqrt(var) : 1.0;
    return norm;
  }

  /// Per-mode mean and standard deviation of the training data coefficients.
  static FeatureNormalizer fit(const SpectralOperator& op,
                               std::span<const SpectralCoeffs> training_data) {
    detail::require(!training_data.empty(), "FeatureNormalizer::fit: no data");
    FeatureNormalizer norm = for_spectrum(op);
    const std::size_t n = op.size();
    norm.y_mean.assign(n, 0.0);
    norm.y_scale.assign(n, 0.0);
    for (const auto& y : training_data) {
      detail::require_same_size(y.size(), n, "FeatureNormalizer::fit");
      for (std::size_t i = 0; i < n; ++i) norm.y_mean[i] += y[i];
    }
    const double count = static_cast<double>(training_data.size());
    for (double& m : norm.y_mean) m /= count;
    for (const auto& y : training_data)
      for (std::size_t i = 0; i < n; ++i)
        norm.y_scale[i] += (y[i] - norm.y_mean[i]) * (y[i] - norm.y_mean[i]);
    for (double& s : norm.y_scale) {
      s = std::sqrt(s / count);
      if (!(s > 0.0)) s = 1.0;
    }
    return norm;
  }
};

/// Cached activations of one batched forward pass. Column j is one
/// (sample, mode) evaluation.
struct ForwardCache {
  std::vector<Matrix> activations;  ///< activations[0] = inputs, back() = Psi
};

class FilterNet {
 public:
  FilterNet() = default;

  /// All weights and biases zero: Psi = sigmoid(0) = 1/2 everywhere.
  static FilterNet zeros(NetArchitecture arch, FeatureNormalizer normalizer = {}) {
    arch.validate();
    normalizer.validate();
    FilterNet net;
    net.arch_ = std::move(arch);
    net.normalizer_ = std::move(normalizer);
    for (std::size_t l = 0; l < net.arch_.n_layers(); ++l) {
      net.weights_.push_back(Matrix::Zero(net.arch_.fan_out(l), net.arch_.fan_in(l)));
      net.biases_.push_back(Vector::Zero(net.arch_.fan_out(l)));
    }
    return net;
  }

  /// Glorot-uniform weights, zero biases.
  static FilterNet glorot(NetArchitecture arch, FeatureNormalizer normalizer, Engine& rng) {
    FilterNet net = zeros(std::move(arch), std::move(normalizer));
    for (auto& w : net.weights_) {
      const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
    }
    return net;
  }

  const NetArchitecture& architecture() const noexcept { return arch_; }
  const FeatureNormalizer& normalizer() const noexcept { return normalizer_; }
  void set_normalizer(FeatureNormalizer n) {
    n.validate();
    normalizer_ = std::move(n);
  }

  std::size_t n_layers() const noexcept { return weights_.size(); }
  Matrix& weight(std::size_t l) { return weights_.at(l); }
  const Matrix& weight(std::size_t l) const { return weights_.at(l); }
  Vector& bias(std::size_t l) { return biases_.at(l); }
  const Vector& bias(std::size_t l) const { return biases_.at(l); }

  std::size_t n_params() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
    return n;
  }

  /// Flat parameter vector: per layer, W in row-major order then b.
  Vector parameters() const {
    Vector out(static_cast<Eigen::Index>(n_params()));
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      for (Eigen::Index i = 0; i < weights_[l].size(); ++i) out[k++] = weights_[l].data()[i];
      for (Eigen::Index i = 0; i < biases_[l].size(); ++i) out[k++] = biases_[l][i];
    }
    return out;
  }

  void set_parameters(const Vector& flat) {
    detail::require_same_size(static_cast<std::size_t>(flat.size()), n_params(),
                              "FilterNet::set_parameters");
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      for (Eigen::Index i = 0; i < weights_[l].size(); ++i) weights_[l].data()[i] = flat[k++];
      for (Eigen::Index i = 0; i < biases_[l].size(); ++i) biases_[l][i] = flat[k++];
    }
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights_.size(); ++l)
      if (!weights_[l].allFinite() || !biases_[l].allFinite()) return false;
    return true;
  }

  /// Normalized network input for one (mode, y_n, sigma_n).
  std::array<double, 2> features(std::size_t mode, double y, double sigma) const {
    return {normalizer_.y_feature(mode, y), normalizer_.sigma_feature(sigma)};
  }

  /// Forward pass on a 2 x B matrix of normalized features.
  Matrix forward_features(const Matrix& inputs, ForwardCache* cache = nullptr) const {
    Matrix a = inputs;
    if (cache) {
      cache->activations.clear();
      cache->activations.push_back(a);
    }
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Matrix z = weights_[l] * a;
      z.colwise() += biases_[l];
      if (l + 1 < weights_.size())
        a = z.array().tanh().matrix();
      else
        a = (1.0 / (1.0 + (-z.array()).exp())).matrix();
      if (cache) cache->activations.push_back(a);
    }
    return a;
  }

  /// Reverse pass: given dLoss/dPsi (1 x B), accumulate parameter gradients
  /// into `grad` (same flat layout as parameters()).
  void backward(const ForwardCache& cache, const Matrix& d_psi, Vector& grad) const {
    const std::size_t n_l = weights_.size();
    const auto& out = cache.activations.back();
    Matrix delta = (d_psi.array() * out.array() * (1.0 - out.array())).matrix();
    std::vector<Eigen::Index> offsets(n_l);
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < n_l; ++l) {
      offsets[l] = k;
      k += weights_[l].size() + biases_[l].size();
    }
    for (std::size_t l = n_l; l-- > 0;) {
      const Matrix& a_prev = cache.activations[l];
      const Matrix dw = delta * a_prev.transpose();
      const Vector db = delta.rowwise().sum();
      Eigen::Index o = offsets[l];
      for (Eigen::Index i = 0; i < dw.size(); ++i) grad[o + i] += dw.data()[i];
      o += dw.size();
      for (Eigen::Index i = 0; i < db.size(); ++i) grad[o + i] += db[i];
      if (l > 0) {
        Matrix da = weights_[l].transpose() * delta;
        delta = (da.array() * (1.0 - a_prev.array().square())).matrix();
      }
    }
  }

  /// Psi(y_n, sigma_n) for mode n (1-based), in (0, 1).
  double psi(std::size_t mode, double y, double sigma) const {
    const auto f = features(mode, y, sigma);
    Matrix x(2, 1);
    x(0, 0) = f[0];
    x(1, 0) = f[1];
    return forward_features(x)(0, 0);
  }

  double operator()(std::size_t mode, double y, double sigma) const { return psi(mode, y, sigma); }

  /// Psi evaluated with the raw data input held at y = 0 (the sigma-only
  /// variant of the filter).
  double psi_sigma_only(std::size_t mode, double sigma) const { return psi(mode, 0.0, sigma); }

  /// Psi for every (sample, mode) of a batch; row-major samples x modes.
  Matrix psi_batch(const SpectralOperator& op, std::span<const SpectralCoeffs> ys) const {
    const std::size_t n = op.size();
    Matrix x(2, static_cast<Eigen::Index>(ys.size() * n));
    fill_features(op, ys, x);
    Matrix out = forward_features(x);
    return Eigen::Map<Matrix>(out.data(), static_cast<Eigen::Index>(ys.size()),
                              static_cast<Eigen::Index>(n));
  }

  void fill_features(const SpectralOperator& op, std::span<const SpectralCoeffs> ys,
                     Matrix& x) const {
    const std::size_t n = op.size();
    std::vector<double> sig_feat(n);
    for (std::size_t i = 0; i < n; ++i) sig_feat[i] = normalizer_.sigma_feature(op.sigma()[i]);
    for (std::size_t s = 0; s < ys.size(); ++s) {
      detail::require_same_size(ys[s].size(), n, "FilterNet: coefficient length");
      for (std::size_t i = 0; i < n; ++i) {
        const auto col = static_cast<Eigen::Index>(s * n + i);
        x(0, col) = normalizer_.y_feature(i + 1, ys[s][i]);
        x(1, col) = sig_feat[i];
      }
    }
  }

  /// Lipschitz constant of y -> Psi(mode, y, sigma) with sigma fixed, bounded
  /// by the product of layer spectral norms (tanh is 1-Lipschitz, the
  /// sigmoid 1/4-Lipschitz). Only the y column of the first layer enters.
  double lipschitz_in_y(std::size_t mode) const {
    double l = 0.25;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      if (k == 0) {
        l *= weights_[0].col(0).norm();
      } else {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(weights_[k]));
        l *= svd.singularValues()[0];
      }
    }
    if (normalizer_.per_mode()) l /= std::abs(normalizer_.y_scale.at(mode - 1));
    return l;
  }

 private:
  NetArchitecture arch_;
  FeatureNormalizer normalizer_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

static_assert(PointwiseFilter<FilterNet>);

/// f_n = Psi(y_n, sigma_n) y_n / sigma_n using the network.
inline SpectralCoeffs reconstruct(const FilterNet& net, const SpectralOperator& op,
                                  const SpectralCoeffs& y) {
  detail::require_same_size(op.size(), y.size(), "reconstruct");
  const SpectralCoeffs* one = &y;
  const Matrix psi = net.psi_batch(op, std::span<const SpectralCoeffs>(one, 1));
  SpectralCoeffs f(y.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    f[i] = psi(0, static_cast<Eigen::Index>(i)) * y[i] / op.sigma()[i];
  return f;
}

}  // namespace scnet
