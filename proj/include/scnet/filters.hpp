#pragma once

// Classical spectral filters g(sigma), filtered reconstruction, per-sample
// oracle parameter search and discrepancy-principle parameter rules.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "scnet/error.hpp"
#include "scnet/spectral.hpp"

namespace scnet {

enum class FilterFamily { Tikhonov, TSVD, Landweber, WienerOracle };

inline std::string to_string(FilterFamily f) {
  switch (f) {
    case FilterFamily::Tikhonov: return "tikhonov";
    case FilterFamily::TSVD: return "tsvd";
    case FilterFamily::Landweber: return "landweber";
    case FilterFamily::WienerOracle: return "wiener";
  }
  return "unknown";
}

struct FilterSpec {
  FilterFamily family = FilterFamily::Tikhonov;
  double alpha = 0.0;        ///< Tikhonov penalty / TSVD threshold on sigma^2
  double tau_lw = 1.0;       ///< Landweber step size
  std::size_t k_lw = 1;      ///< Landweber iteration count
  double fdag_norm = 1.0;    ///< ||f_true|| seen by the Wiener oracle
  double noise_level = 0.0;  ///< absolute noise norm seen by the Wiener oracle

  static FilterSpec tikhonov(double alpha) { return {FilterFamily::Tikhonov, alpha}; }
  static FilterSpec tsvd(double alpha) { return {FilterFamily::TSVD, alpha}; }
  static FilterSpec landweber(double tau, std::size_t k) {
    FilterSpec f{FilterFamily::Landweber};
    f.tau_lw = tau;
    f.k_lw = k;
    return f;
  }
  static FilterSpec wiener(double noise_level, double fdag_norm) {
    FilterSpec f{FilterFamily::WienerOracle};
    f.noise_level = noise_level;
    f.fdag_norm = fdag_norm;
    return f;
  }

  /// Parameter-only checks. Landweber's step bound also needs sigma_1, see
  /// validate_for().
  void validate() const {
    switch (family) {
      case FilterFamily::Tikhonov:
      case FilterFamily::TSVD:
        detail::require(alpha > 0.0 && std::isfinite(alpha), "FilterSpec: alpha must be > 0");
        break;
      case FilterFamily::Landweber:
        detail::require(tau_lw > 0.0, "FilterSpec: Landweber step must be > 0");
        detail::require(k_lw >= 1, "FilterSpec: Landweber needs k >= 1");
        break;
      case FilterFamily::WienerOracle:
        detail::require(fdag_norm > 0.0, "FilterSpec: Wiener oracle needs ||f|| > 0");
        detail::require(noise_level >= 0.0, "FilterSpec: noise level must be >= 0");
        break;
    }
  }

  void validate_for(const SpectralOperator& op) const {
    validate();
    if (family == FilterFamily::Landweber && op.size() > 0) {
      const double s1 = op.sigma(1);
      detail::require(tau_lw < 2.0 / (s1 * s1), "FilterSpec: Landweber step must be < 2/sigma_1^2");
    }
  }

  /// Equivalent Tikhonov penalty of the Wiener oracle, (delta / ||f||)^2.
  double wiener_alpha() const {
    const double r = noise_level / fdag_norm;
    return r * r;
  }
};

/// g(sigma). For the Wiener oracle this is lambda_opt / sigma, so that
/// g(sigma) sigma is the oracle's multiplicative coefficient.
inline double filter_value(const FilterSpec& spec, double sigma) {
  spec.validate();
  detail::require(sigma > 0.0, "filter_value: sigma must be > 0");
  switch (spec.family) {
    case FilterFamily::Tikhonov:
      return sigma / (sigma * sigma + spec.alpha);
    case FilterFamily::TSVD:
      return sigma >= std::sqrt(spec.alpha) ? 1.0 / sigma : 0.0;
    case FilterFamily::Landweber: {
      const double q = 1.0 - spec.tau_lw * sigma * sigma;
      return (1.0 - std::pow(q, static_cast<double>(spec.k_lw))) / sigma;
    }
    case FilterFamily::WienerOracle: {
      const double s2 = sigma * sigma;
      return s2 / (s2 + spec.wiener_alpha()) / sigma;
    }
  }
  return 0.0;
}

/// Multiplicative coefficient g(sigma) * sigma applied to the naive inverse.
inline double filter_coefficient(const FilterSpec& spec, double sigma) {
  return filter_value(spec, sigma) * sigma;
}

/// f_n = g(sigma_n) y_n.
inline SpectralCoeffs apply_filter(const FilterSpec& spec, const SpectralOperator& op,
                                   const SpectralCoeffs& y) {
  spec.validate_for(op);
  detail::require_same_size(op.size(), y.size(), "apply_filter");
  SpectralCoeffs f(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) f[i] = filter_value(spec, op.sigma()[i]) * y[i];
  return f;
}

/// A pointwise spectral filter Psi(mode, y_n, sigma_n): the multiplicative
/// coefficient applied to y_n / sigma_n.
template <class F>
concept PointwiseFilter = requires(const F& f, std::size_t mode, double y, double sigma) {
  { f(mode, y, sigma) } -> std::convertible_to<double>;
};

/// f_n = Psi(n, y_n, sigma_n) y_n / sigma_n.
template <PointwiseFilter F>
SpectralCoeffs reconstruct_with(const F& psi, const SpectralOperator& op,
                                const SpectralCoeffs& y) {
  detail::require_same_size(op.size(), y.size(), "reconstruct");
  SpectralCoeffs f(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double s = op.sigma()[i];
    f[i] = psi(i + 1, y[i], s) * y[i] / s;
  }
  return f;
}

/// `count` log-uniform points on [lo, hi], ascending.
inline std::vector<double> log_grid(double lo, double hi, std::size_t count) {
  detail::require(lo > 0.0 && hi >= lo && count >= 1, "log_grid: invalid range");
  std::vector<double> g(count);
  if (count == 1) {
    g[0] = lo;
    return g;
  }
  const double a = std::log10(lo), b = std::log10(hi);
  for (std::size_t i = 0; i < count; ++i)
    g[i] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  return g;
}

/// Default oracle grid: 60 log-uniform points on [1e-10, 10].
inline std::vector<double> default_alpha_grid() { return log_grid(1e-10, 1e1, 60); }

/// Thresholds alpha = sigma_k^2, k = 1..N: one grid point per TSVD truncation index.
inline std::vector<double> truncation_alpha_grid(const SpectralOperator& op) {
  std::vector<double> g;
  g.reserve(op.size());
  for (std::size_t i = op.size(); i-- > 0;) g.push_back(op.sigma()[i] * op.sigma()[i]);
  return g;
}

struct OracleResult {
  double alpha = 0.0;
  double error = std::numeric_limits<double>::infinity();
  SpectralCoeffs f_hat;
};

/// Grid point minimizing the relative error against the truth. Ties go to
/// the larger alpha.
inline OracleResult oracle_search(FilterFamily family, const SpectralOperator& op,
                                  const SpectralCoeffs& y_noisy, const SpectralCoeffs& f_true,
                                  std::span<const double> alpha_grid) {
  detail::require(!alpha_grid.empty(), "oracle_search: empty parameter grid");
  OracleResult best;
  for (double alpha : alpha_grid) {
    FilterSpec spec{family, alpha};
    SpectralCoeffs f_hat = apply_filter(spec, op, y_noisy);
    const double err = rel_l2_error(f_hat, f_true);
    if (err < best.error || (err == best.error && alpha > best.alpha)) {
      best.alpha = alpha;
      best.error = err;
      best.f_hat = std::move(f_hat);
    }
  }
  return best;
}

struct TruncationResult {
  std::size_t n_opt = 0;
  bool saturated = false;
  std::vector<double> residuals;  ///< residual for N = 1..n_modes
};

/// Data residual ||K R_N(y) - y|| for every truncation N = 1..n_modes, where
/// R_N applies Psi on the first N modes and discards the rest.
/// `out_of_band_sq` adds the part of the measured data outside the retained
/// modes, which no truncated reconstruction can fit.
template <PointwiseFilter F>
std::vector<double> truncation_residuals(const F& psi, const SpectralOperator& op,
                                         const SpectralCoeffs& y, double out_of_band_sq = 0.0) {
  detail::require_same_size(op.size(), y.size(), "truncation_residuals");
  const std::size_t n = y.size();
  std::vector<double> fitted(n), tail(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = (1.0 - psi(i + 1, y[i], op.sigma()[i])) * y[i];
    fitted[i] = r * r;
  }
  for (std::size_t i = n; i-- > 0;) tail[i] = tail[i + 1] + y[i] * y[i];
  std::vector<double> residuals(n);
  double head = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    head += fitted[k - 1];
    residuals[k - 1] = std::sqrt(head + tail[k] + out_of_band_sq);
  }
  return residuals;
}

/// Smallest N with residual <= tau * delta_abs. When no N qualifies the
/// result is N = n_modes with the saturation flag set.
template <PointwiseFilter F>
TruncationResult discrepancy_truncation(const SpectralOperator& op, const F& psi,
                                        const SpectralCoeffs& y_noisy, double delta_abs,
                                        double tau_safety = 1.1, double out_of_band_sq = 0.0) {
  detail::require(tau_safety > 1.0, "discrepancy_truncation: tau must be > 1");
  detail::require(delta_abs > 0.0, "discrepancy_truncation: delta must be > 0");
  TruncationResult out;
  out.residuals = truncation_residuals(psi, op, y_noisy, out_of_band_sq);
  const double threshold = tau_safety * delta_abs;
  for (std::size_t k = 1; k <= out.residuals.size(); ++k) {
    if (out.residuals[k - 1] <= threshold) {
      out.n_opt = k;
      return out;
    }
  }
  out.n_opt = y_noisy.size();
  out.saturated = true;
  return out;
}

/// Psi = 1: plain spectral truncation.
struct UnitFilter {
  double operator()(std::size_t, double, double) const { return 1.0; }
};

struct DiscrepancyAlphaResult {
  double alpha = 0.0;
  bool saturated = false;
};

/// Discrepancy principle for a one-parameter family: the largest grid alpha
/// whose residual ||K f_alpha - y|| stays within tau * delta_abs. Falls back
/// to the smallest alpha (flagged) when none does.
inline DiscrepancyAlphaResult discrepancy_alpha(FilterFamily family, const SpectralOperator& op,
                                                const SpectralCoeffs& y_noisy, double delta_abs,
                                                std::span<const double> alpha_grid,
                                                double tau_safety = 1.1,
                                                double out_of_band_sq = 0.0) {
  detail::require(tau_safety > 1.0, "discrepancy_alpha: tau must be > 1");
  detail::require(delta_abs > 0.0, "discrepancy_alpha: delta must be > 0");
  detail::require(!alpha_grid.empty(), "discrepancy_alpha: empty parameter grid");
  detail::require_same_size(op.size(), y_noisy.size(), "discrepancy_alpha");
  const double threshold = tau_safety * delta_abs;
  DiscrepancyAlphaResult best{std::numeric_limits<double>::infinity(), true};
  double largest_ok = -1.0;
  for (double alpha : alpha_grid) {
    const FilterSpec spec{family, alpha};
    double r2 = out_of_band_sq;
    for (std::size_t i = 0; i < y_noisy.size(); ++i) {
      const double r = (1.0 - filter_coefficient(spec, op.sigma()[i])) * y_noisy[i];
      r2 += r * r;
    }
    if (std::sqrt(r2) <= threshold && alpha > largest_ok) largest_ok = alpha;
    best.alpha = std::min(best.alpha, alpha);
  }
  if (largest_ok > 0.0) return {largest_ok, false};
  return best;
}

}  // namespace scnet
