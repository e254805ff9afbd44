#pragma once

// Synthetic diagonal ill-posed problem on (0,1): operator spectrum, random
// Sobolev-type sources, sine-basis synthesis/analysis on midpoint grids, noise
// injection and norms.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "scnet/error.hpp"
#include "scnet/rng.hpp"

namespace scnet {

struct ProblemConfig {
  double p = 1.5;  ///< singular values decay as n^-p
  double s = 1.5;  ///< source coefficients decay as n^-(s + 1/2)
  std::size_t n_modes = 64;

  void validate() const {
    detail::require(p > 0.0 && std::isfinite(p), "ProblemConfig: p must be > 0");
    detail::require(s > 0.0 && std::isfinite(s), "ProblemConfig: s must be > 0");
    detail::require(n_modes >= 1, "ProblemConfig: n_modes must be >= 1");
  }
};

/// Finite vector of basis coefficients, index 0 holds mode n = 1.
struct SpectralCoeffs {
  std::vector<double> coeffs;

  SpectralCoeffs() = default;
  explicit SpectralCoeffs(std::size_t n) : coeffs(n, 0.0) {}
  explicit SpectralCoeffs(std::vector<double> c) : coeffs(std::move(c)) {}

  std::size_t size() const noexcept { return coeffs.size(); }
  double& operator[](std::size_t i) { return coeffs[i]; }
  double operator[](std::size_t i) const { return coeffs[i]; }
  std::span<const double> view() const noexcept { return coeffs; }

  static SpectralCoeffs unit(std::size_t n_modes, std::size_t mode) {
    SpectralCoeffs e(n_modes);
    e[mode - 1] = 1.0;
    return e;
  }

  bool operator==(const SpectralCoeffs&) const = default;
};

/// Samples on the midpoint grid x_i = (i + 1/2) / M of (0,1).
struct GridFunction {
  std::vector<double> values;

  GridFunction() = default;
  explicit GridFunction(std::vector<double> v) : values(std::move(v)) {}

  std::size_t resolution() const noexcept { return values.size(); }
  std::span<const double> view() const noexcept { return values; }

  static double node(std::size_t i, std::size_t resolution) noexcept {
    return (static_cast<double>(i) + 0.5) / static_cast<double>(resolution);
  }

  bool operator==(const GridFunction&) const = default;
};

/// Diagonal forward map K v_n = sigma_n v_n with sigma_n = n^-p, together
/// with the Dirichlet Laplacian eigenvalues lambda_n = (n pi)^2 of the basis.
class SpectralOperator {
 public:
  SpectralOperator() = default;
  SpectralOperator(std::vector<double> sigma, std::vector<double> lambda)
      : sigma_(std::move(sigma)), lambda_(std::move(lambda)) {
    detail::require_same_size(sigma_.size(), lambda_.size(), "SpectralOperator");
    for (std::size_t i = 0; i < sigma_.size(); ++i) {
      detail::require(sigma_[i] > 0.0, "SpectralOperator: sigma must be positive");
      if (i > 0)
        detail::require(sigma_[i] <= sigma_[i - 1],
                        "SpectralOperator: sigma must be non-increasing");
    }
  }

  std::size_t size() const noexcept { return sigma_.size(); }
  std::span<const double> sigma() const noexcept { return sigma_; }
  std::span<const double> lambda() const noexcept { return lambda_; }
  double sigma(std::size_t mode) const { return sigma_.at(mode - 1); }
  double lambda(std::size_t mode) const { return lambda_.at(mode - 1); }

 private:
  std::vector<double> sigma_;
  std::vector<double> lambda_;
};

inline SpectralOperator build_operator(const ProblemConfig& cfg) {
  cfg.validate();
  std::vector<double> sigma(cfg.n_modes), lambda(cfg.n_modes);
  for (std::size_t i = 0; i < cfg.n_modes; ++i) {
    const double n = static_cast<double>(i + 1);
    sigma[i] = std::pow(n, -cfg.p);
    lambda[i] = (n * std::numbers::pi) * (n * std::numbers::pi);
  }
  return SpectralOperator(std::move(sigma), std::move(lambda));
}

/// Decay envelope n^-(s + 1/2) of the random source coefficients.
inline double source_envelope(const ProblemConfig& cfg, std::size_t mode) {
  return std::pow(static_cast<double>(mode), -(cfg.s + 0.5));
}

/// f_n = xi_n n^-(s+1/2) with xi_n i.i.d. standard normal.
inline SpectralCoeffs sample_source(const ProblemConfig& cfg, Engine& rng) {
  cfg.validate();
  SpectralCoeffs f(cfg.n_modes);
  for (std::size_t i = 0; i < cfg.n_modes; ++i)
    f[i] = standard_normal(rng) * source_envelope(cfg, i + 1);
  return f;
}

inline SpectralCoeffs forward(const SpectralOperator& op, const SpectralCoeffs& f) {
  detail::require_same_size(op.size(), f.size(), "forward");
  SpectralCoeffs y(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) y[i] = op.sigma()[i] * f[i];
  return y;
}

/// Unregularized inverse y_n / sigma_n on the first `n_keep` modes (all modes
/// when n_keep is 0), zero beyond.
inline SpectralCoeffs naive_inverse(const SpectralOperator& op, const SpectralCoeffs& y,
                                    std::size_t n_keep = 0) {
  detail::require_same_size(op.size(), y.size(), "naive_inverse");
  if (n_keep == 0 || n_keep > y.size()) n_keep = y.size();
  SpectralCoeffs f(y.size());
  for (std::size_t i = 0; i < n_keep; ++i) f[i] = y[i] / op.sigma()[i];
  return f;
}

/// Tabulated basis v_n(x_i) = sqrt(2) sin(n pi x_i) on an M-point midpoint grid.
///
/// On the midpoint grid the first M - 1 sampled modes are exactly orthonormal
/// under the (1/M) sum inner product (the DST-II identity), so analysis of a
/// band-limited function recovers its coefficients to rounding error.
class SineBasis {
 public:
  SineBasis(std::size_t resolution, std::size_t n_modes)
      : resolution_(resolution), n_modes_(n_modes), table_(resolution * n_modes) {
    detail::require(resolution >= 1, "SineBasis: resolution must be >= 1");
    for (std::size_t n = 1; n <= n_modes; ++n) {
      double* row = &table_[(n - 1) * resolution];
      for (std::size_t i = 0; i < resolution; ++i)
        row[i] = std::numbers::sqrt2 *
                 std::sin(static_cast<double>(n) * std::numbers::pi *
                          GridFunction::node(i, resolution));
    }
  }

  std::size_t resolution() const noexcept { return resolution_; }
  std::size_t n_modes() const noexcept { return n_modes_; }
  double operator()(std::size_t mode, std::size_t i) const {
    return table_[(mode - 1) * resolution_ + i];
  }

  GridFunction synthesize(const SpectralCoeffs& c) const {
    detail::require_same_size(c.size(), n_modes_, "synthesize");
    std::vector<double> values(resolution_, 0.0);
    for (std::size_t n = 0; n < n_modes_; ++n) {
      const double cn = c[n];
      if (cn == 0.0) continue;
      const double* row = &table_[n * resolution_];
      for (std::size_t i = 0; i < resolution_; ++i) values[i] += cn * row[i];
    }
    return GridFunction(std::move(values));
  }

  /// Midpoint quadrature of <g, v_n>; requires resolution >= 2 N.
  SpectralCoeffs analyze(const GridFunction& g) const {
    detail::require_same_size(g.resolution(), resolution_, "analyze");
    if (resolution_ < 2 * n_modes_)
      throw NumericalError("analyze: aliasing guard violated (resolution " +
                           std::to_string(resolution_) + " < 2 * n_modes " +
                           std::to_string(n_modes_) + ")");
    SpectralCoeffs c(n_modes_);
    const double inv_m = 1.0 / static_cast<double>(resolution_);
    for (std::size_t n = 0; n < n_modes_; ++n) {
      const double* row = &table_[n * resolution_];
      double acc = 0.0;
      for (std::size_t i = 0; i < resolution_; ++i) acc += g.values[i] * row[i];
      c[n] = acc * inv_m;
    }
    return c;
  }

 private:
  std::size_t resolution_;
  std::size_t n_modes_;
  std::vector<double> table_;
};

inline GridFunction synthesize(const SpectralCoeffs& c, std::size_t resolution) {
  return SineBasis(resolution, c.size()).synthesize(c);
}

inline SpectralCoeffs analyze(const GridFunction& g, std::size_t n_modes) {
  if (g.resolution() < 2 * n_modes)
    throw NumericalError("analyze: aliasing guard violated");
  return SineBasis(g.resolution(), n_modes).analyze(g);
}

/// Euclidean norm of the coefficients.
inline double norm(const SpectralCoeffs& c) {
  double acc = 0.0;
  for (double v : c.coeffs) acc += v * v;
  return std::sqrt(acc);
}

/// Discrete L2 norm sqrt((1/M) sum v_i^2), comparable across resolutions.
inline double norm(const GridFunction& g) {
  if (g.resolution() == 0) return 0.0;
  double acc = 0.0;
  for (double v : g.values) acc += v * v;
  return std::sqrt(acc / static_cast<double>(g.resolution()));
}

namespace detail {

template <class V>
double rel_error(const V& a, const V& b, const char* ctx) {
  require_same_size(a.size(), b.size(), ctx);
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    ref += b[i] * b[i];
  }
  if (ref == 0.0) throw NumericalError(std::string(ctx) + ": reference is zero");
  return std::sqrt(diff / ref);
}

}  // namespace detail

/// ||a - b|| / ||b||.
inline double rel_l2_error(const SpectralCoeffs& a, const SpectralCoeffs& b) {
  return detail::rel_error(a.coeffs, b.coeffs, "rel_l2_error");
}

inline double rel_l2_error(const GridFunction& a, const GridFunction& b) {
  return detail::rel_error(a.values, b.values, "rel_l2_error");
}

/// Adds i.i.d. Gaussian noise e rescaled so that the discrete L2 norm is
/// ||e|| = delta * ||y|| * sqrt(M / reference_resolution).
///
/// With reference_resolution == 0 (or equal to M) this is the plain relative
/// noise contract ||e|| = delta ||y||. A fixed reference resolution M_ref
/// models cell-averaged white noise of fixed intensity: each retained
/// coefficient then carries noise of the same variance on every grid, which
/// is what makes errors comparable across resolutions.
inline GridFunction add_noise(const GridFunction& y, double delta, Engine& rng,
                              std::size_t reference_resolution = 0) {
  detail::require(delta >= 0.0 && std::isfinite(delta), "add_noise: delta must be >= 0");
  if (delta == 0.0) return y;
  const double y_norm = norm(y);
  if (y_norm == 0.0)
    throw NumericalError("add_noise: relative noise undefined for zero data");
  const std::size_t m = y.resolution();
  std::vector<double> e(m);
  for (double& v : e) v = standard_normal(rng);
  const double e_norm = norm(GridFunction(e));
  double target = delta * y_norm;
  if (reference_resolution != 0 && reference_resolution != m)
    target *= std::sqrt(static_cast<double>(m) / static_cast<double>(reference_resolution));
  const double scale = target / e_norm;
  GridFunction out = y;
  for (std::size_t i = 0; i < m; ++i) out.values[i] += scale * e[i];
  return out;
}

/// Squared grid norm of g that lies outside the span of the retained modes,
/// ||g||^2 - ||P_N g||^2 (clamped at zero).
inline double out_of_band_energy(const GridFunction& g, const SpectralCoeffs& projected) {
  const double total = norm(g);
  const double in_band = norm(projected);
  return std::max(0.0, total * total - in_band * in_band);
}

}  // namespace scnet
