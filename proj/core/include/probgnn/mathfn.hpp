#pragma once

#include <cmath>
#include <limits>

namespace probgnn {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2*pi))

/// Standard normal density.
inline double norm_pdf(double z) { return std::exp(-0.5 * z * z - kLogSqrt2Pi); }

/// Standard normal CDF via erfc; accurate over the full double range.
inline double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

namespace detail {
// Asymptotic tail series for Phi(z), z << 0:
//   Phi(z) = phi(z)/(-z) * (1 - 1/z^2 + 3/z^4 - 15/z^6 + 105/z^8 - ...)
inline double tail_series(double z) {
    const double z2 = z * z;
    return 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2) +
           105.0 / (z2 * z2 * z2 * z2);
}
}  // namespace detail

/// log(Phi(z)), stable far into the left tail where erfc underflows.
inline double log_norm_cdf(double z) {
    if (z > -8.0) return std::log(norm_cdf(z));
    return -0.5 * z * z - kLogSqrt2Pi - std::log(-z) + std::log(detail::tail_series(z));
}

/// Normal hazard phi(z)/Phi(z); the derivative of log_norm_cdf.
inline double norm_hazard(double z) {
    if (z > -8.0) return norm_pdf(z) / norm_cdf(z);
    return -z / detail::tail_series(z);
}

/// Inverse standard normal CDF by safeguarded Newton on Phi.
/// Terminates with |Phi(z) - p| <= 1e-13 (or a collapsed bracket).
inline double norm_quantile(double p) {
    double lo = -40.0, hi = 40.0;
    double z = 0.0;
    for (int it = 0; it < 200; ++it) {
        const double f = norm_cdf(z) - p;
        if (std::abs(f) <= 1e-13) return z;
        if (f > 0.0) hi = z; else lo = z;
        const double d = norm_pdf(z);
        double step = d > 0.0 ? z - f / d : 0.5 * (lo + hi);
        if (!(step > lo && step < hi)) step = 0.5 * (lo + hi);
        if (hi - lo < 1e-14) return 0.5 * (lo + hi);
        z = step;
    }
    return z;
}

/// log(1 + exp(s)) without overflow.
inline double softplus(double s) {
    return s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
}

/// d softplus / ds = logistic(s), overflow-safe.
inline double logistic(double s) {
    return s >= 0.0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s));
}

/// log( exp(a) + exp(b) ) without overflow.
inline double logaddexp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double m = a > b ? a : b;
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace probgnn
