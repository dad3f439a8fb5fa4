#pragma once

// Smooth functions of the squared norm rho = |x|^2:
//
//   tanhc_sq(rho, g)     = tanh(g sqrt(rho)) / sqrt(rho)   (limit g at 0)
//   sinh_sq_norm(rho, g) = sinh^2(g sqrt(rho))
//
// Both are even analytic functions of sqrt(rho), hence analytic in rho. A
// direct evaluation through sqrt loses all precision in higher derivatives
// as rho -> 0, so near zero both use their power series in u = g^2 rho.

#include <array>
#include <cstddef>

#include "nhtrack/dual.hpp"
#include "nhtrack/errors.hpp"

namespace nhtrack::ad {

namespace detail {

inline constexpr std::size_t kTanhcTerms = 14;
inline constexpr std::size_t kSinhSqTerms = 14;

// tanh(x)/x = sum_k c_k x^{2k}, from the Taylor recursion of t' = 1 - t^2.
constexpr std::array<double, kTanhcTerms> tanhc_coefficients() {
  constexpr std::size_t kOrder = 2 * kTanhcTerms;
  std::array<double, kOrder + 1> a{};
  a[1] = 1.0;
  for (std::size_t k = 1; k < kOrder; ++k) {
    double conv = 0.0;
    for (std::size_t j = 0; j <= k; ++j) conv += a[j] * a[k - j];
    a[k + 1] = -conv / static_cast<double>(k + 1);
  }
  std::array<double, kTanhcTerms> c{};
  for (std::size_t m = 0; m < kTanhcTerms; ++m) c[m] = a[2 * m + 1];
  return c;
}

// sinh^2(x) = (cosh 2x - 1)/2 = sum_{k>=1} 2^{2k-1} x^{2k} / (2k)!
constexpr std::array<double, kSinhSqTerms> sinh_sq_coefficients() {
  std::array<double, kSinhSqTerms> e{};
  double term = 0.5;  // 2^{2k-1}/(2k)! at k = 0
  for (std::size_t k = 1; k < kSinhSqTerms; ++k) {
    term *= 4.0 / static_cast<double>((2 * k - 1) * (2 * k));
    e[k] = term;
  }
  return e;
}

inline constexpr auto kTanhcCoefficients = tanhc_coefficients();
inline constexpr auto kSinhSqCoefficients = sinh_sq_coefficients();

template <class T, std::size_t M>
T horner(const std::array<double, M>& c, const T& u) {
  T acc(c[M - 1]);
  for (std::size_t k = M - 1; k-- > 0;) acc = acc * u + c[k];
  return acc;
}

}  // namespace detail

// Series branch is used for g^2 rho below these values.
inline constexpr double kTanhcSeriesBound = 0.1;
inline constexpr double kSinhSqSeriesBound = 1.0;

template <Scalar T>
T tanhc_sq(const T& rho, double gamma) {
  const double r0 = value_of(rho);
  if (r0 < 0.0) throw DomainError("tanhc_sq: negative squared norm");
  const double g2 = gamma * gamma;
  if (g2 * r0 < kTanhcSeriesBound) {
    const T u = rho * g2;
    return detail::horner(detail::kTanhcCoefficients, u) * gamma;
  }
  const T r = sqrt(rho);
  return tanh(r * gamma) / r;
}

template <Scalar T>
T sinh_sq_norm(const T& rho, double gamma) {
  const double r0 = value_of(rho);
  if (r0 < 0.0) throw DomainError("sinh_sq_norm: negative squared norm");
  const double g2 = gamma * gamma;
  if (g2 * r0 < kSinhSqSeriesBound) {
    const T u = rho * g2;
    return detail::horner(detail::kSinhSqCoefficients, u);
  }
  const T s = sinh(sqrt(rho) * gamma);
  return s * s;
}

}  // namespace nhtrack::ad
