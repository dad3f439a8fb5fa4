#pragma once

// Nestable forward-mode dual numbers.
//
// Dual<T, N> carries a value and N tangent components, all of type T. T may be
// double or another Dual, so Dual<Dual<double, 1>, 1> holds second
// derivatives along one direction, Dual<Dual<double, 2>, 2> holds all first
// and mixed second derivatives along two directions, and so on. Every
// operation works on the value and tangents of the outermost layer and
// recurses through T for the inner layers.
//
// Elementary functions are declared for double and for Dual in this
// namespace; generic code calls them unqualified (ADL resolves the Dual
// overloads, ordinary lookup the double ones).

#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <string>
#include <type_traits>
#include <utility>

#include "nhtrack/errors.hpp"

namespace nhtrack::ad {

template <class T, int N>
struct Dual;

template <class T>
struct is_dual : std::false_type {};
template <class T, int N>
struct is_dual<Dual<T, N>> : std::true_type {};
template <class T>
inline constexpr bool is_dual_v = is_dual<std::remove_cvref_t<T>>::value;

// Nesting depth: 0 for double, 1 + depth(T) for Dual<T, N>.
template <class T>
struct nesting : std::integral_constant<int, 0> {};
template <class T, int N>
struct nesting<Dual<T, N>> : std::integral_constant<int, 1 + nesting<T>::value> {};
template <class T>
inline constexpr int nesting_v = nesting<std::remove_cvref_t<T>>::value;

// U can be mixed into arithmetic on T without lifting: U is arithmetic, T
// itself, or a constant of T's value type.
template <class U, class T>
struct is_constant_of
    : std::bool_constant<std::is_arithmetic_v<U> || std::is_same_v<U, T>> {};
template <class U, class T, int N>
struct is_constant_of<U, Dual<T, N>>
    : std::bool_constant<std::is_arithmetic_v<U> || std::is_same_v<U, Dual<T, N>> ||
                         is_constant_of<U, T>::value> {};

template <class T>
concept Scalar = std::floating_point<T> || is_dual_v<T>;

// Singular-argument tolerance for tan/sec: |cos x| below this is a pole.
inline constexpr double kPoleTolerance = 1e-12;

template <class T, int N>
struct Dual {
  using value_type = T;
  static constexpr int kTangents = N;

  T v;
  std::array<T, N> d;

  // Members are left uninitialized; use Dual{} for a zero.
  Dual() = default;

  Dual(const T& value) : v(value) {  // NOLINT: implicit lifting of constants
    for (auto& t : d) t = T{};
  }

  template <class U>
    requires(!std::is_same_v<U, T> && is_constant_of<U, T>::value)
  Dual(const U& value) : v(value) {  // NOLINT
    for (auto& t : d) t = T{};
  }

  Dual(const T& value, const std::array<T, N>& tangent) : v(value), d(tangent) {}

  Dual& operator+=(const Dual& o) {
    v += o.v;
    for (int i = 0; i < N; ++i) d[i] += o.d[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    for (int i = 0; i < N; ++i) d[i] -= o.d[i];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    for (int i = 0; i < N; ++i) d[i] = d[i] * o.v + v * o.d[i];
    v *= o.v;
    return *this;
  }
  Dual& operator/=(const Dual& o) { return *this = *this / o; }

  template <class U>
    requires is_constant_of<U, T>::value
  Dual& operator+=(const U& c) {
    v += c;
    return *this;
  }
  template <class U>
    requires is_constant_of<U, T>::value
  Dual& operator-=(const U& c) {
    v -= c;
    return *this;
  }
  template <class U>
    requires is_constant_of<U, T>::value
  Dual& operator*=(const U& c) {
    v *= c;
    for (auto& t : d) t *= c;
    return *this;
  }
};

// ---------------------------------------------------------------------------
// Value extraction

inline double value_of(double x) { return x; }
template <class T, int N>
double value_of(const Dual<T, N>& x) {
  return value_of(x.v);
}

// Constant of any nesting depth.
template <class T>
T constant(double c) {
  return T(c);
}

// ---------------------------------------------------------------------------
// Arithmetic

template <class T, int N>
Dual<T, N> operator-(const Dual<T, N>& a) {
  Dual<T, N> r;
  r.v = -a.v;
  for (int i = 0; i < N; ++i) r.d[i] = -a.d[i];
  return r;
}
template <class T, int N>
const Dual<T, N>& operator+(const Dual<T, N>& a) {
  return a;
}

template <class T, int N>
Dual<T, N> operator+(const Dual<T, N>& a, const Dual<T, N>& b) {
  Dual<T, N> r;
  r.v = a.v + b.v;
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] + b.d[i];
  return r;
}
template <class T, int N>
Dual<T, N> operator-(const Dual<T, N>& a, const Dual<T, N>& b) {
  Dual<T, N> r;
  r.v = a.v - b.v;
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] - b.d[i];
  return r;
}
template <class T, int N>
Dual<T, N> operator*(const Dual<T, N>& a, const Dual<T, N>& b) {
  Dual<T, N> r;
  r.v = a.v * b.v;
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return r;
}
template <class T, int N>
Dual<T, N> operator/(const Dual<T, N>& a, const Dual<T, N>& b) {
  Dual<T, N> r;
  r.v = a.v / b.v;
  const T inv = T(1.0) / b.v;
  for (int i = 0; i < N; ++i) r.d[i] = (a.d[i] - r.v * b.d[i]) * inv;
  return r;
}

template <class T, int N, class U>
  requires is_constant_of<U, T>::value
Dual<T, N> operator+(const Dual<T, N>& a, const U& c) {
  Dual<T, N> r = a;
  r.v = a.v + c;
  return r;
}
template <class T, int N, class U>
  requires is_constant_of<U, T>::value
Dual<T, N> operator+(const U& c, const Dual<T, N>& a) {
  return a + c;
}
template <class T, int N, class U>
  requires is_constant_of<U, T>::value
Dual<T, N> operator-(const Dual<T, N>& a, const U& c) {
  Dual<T, N> r = a;
  r.v = a.v - c;
  return r;
}
template <class T, int N, class U>
  requires is_constant_of<U, T>::value
Dual<T, N> operator-(const U& c, const Dual<T, N>& a) {
  Dual<T, N> r;
  r.v = c - a.v;
  for (int i = 0; i < N; ++i) r.d[i] = -a.d[i];
  return r;
}
template <class T, int N, class U>
  requires is_constant_of<U, T>::value
Dual<T, N> operator*(const Dual<T, N>& a, const U& c) {
  Dual<T, N> r;
  r.v = a.v * c;
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * c;
  return r;
}
template <class T, int N, class U>
  requires is_constant_of<U, T>::value
Dual<T, N> operator*(const U& c, const Dual<T, N>& a) {
  return a * c;
}
template <class T, int N, class U>
  requires is_constant_of<U, T>::value
Dual<T, N> operator/(const Dual<T, N>& a, const U& c) {
  Dual<T, N> r;
  r.v = a.v / c;
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] / c;
  return r;
}
template <class T, int N, class U>
  requires is_constant_of<U, T>::value
Dual<T, N> operator/(const U& c, const Dual<T, N>& a) {
  return Dual<T, N>(T(c)) / a;
}

// ---------------------------------------------------------------------------
// Elementary functions, double overloads. These carry the singularity checks
// so every nesting level reports the offending input.

inline double sin(double x) { return std::sin(x); }
inline double cos(double x) { return std::cos(x); }
inline std::pair<double, double> sincos(double x) { return {std::sin(x), std::cos(x)}; }
inline double tan(double x) {
  const double c = std::cos(x);
  if (std::abs(c) < kPoleTolerance) throw SingularityError("tan evaluated at a pole", x);
  return std::tan(x);
}
inline double sec(double x) {
  const double c = std::cos(x);
  if (std::abs(c) < kPoleTolerance) throw SingularityError("sec evaluated at a pole", x);
  return 1.0 / c;
}
inline double atan(double x) { return std::atan(x); }
inline double atan2(double y, double x) {
  if (x == 0.0 && y == 0.0) throw SingularityError("atan2 evaluated at the origin", 0.0);
  return std::atan2(y, x);
}
inline double tanh(double x) { return std::tanh(x); }
inline double sinh(double x) { return std::sinh(x); }
inline double cosh(double x) { return std::cosh(x); }
inline std::pair<double, double> sinhcosh(double x) { return {std::sinh(x), std::cosh(x)}; }
inline double exp(double x) { return std::exp(x); }
inline double log(double x) {
  if (x <= 0.0) throw DomainError("log of a non-positive number");
  return std::log(x);
}
inline double sqrt(double x) {
  if (x < 0.0) throw DomainError("sqrt of a negative number: " + std::to_string(x));
  return std::sqrt(x);
}
inline double pow(double x, double p) { return std::pow(x, p); }
inline double abs(double x) { return std::abs(x); }

// Forward declarations so the recursive definitions below see each other.
template <class T, int N>
std::pair<Dual<T, N>, Dual<T, N>> sincos(const Dual<T, N>& x);
template <class T, int N>
std::pair<Dual<T, N>, Dual<T, N>> sinhcosh(const Dual<T, N>& x);
template <class T, int N>
Dual<T, N> tan(const Dual<T, N>& x);
template <class T, int N>
Dual<T, N> tanh(const Dual<T, N>& x);
template <class T, int N>
Dual<T, N> exp(const Dual<T, N>& x);
template <class T, int N>
Dual<T, N> log(const Dual<T, N>& x);
template <class T, int N>
Dual<T, N> sqrt(const Dual<T, N>& x);
template <class T, int N>
Dual<T, N> pow(const Dual<T, N>& x, double p);

namespace detail {
// r = {f, f' * x.d}
template <class T, int N>
Dual<T, N> chain(const Dual<T, N>& x, const T& f, const T& df) {
  Dual<T, N> r;
  r.v = f;
  for (int i = 0; i < N; ++i) r.d[i] = df * x.d[i];
  return r;
}
}  // namespace detail

template <class T, int N>
std::pair<Dual<T, N>, Dual<T, N>> sincos(const Dual<T, N>& x) {
  const auto [s, c] = sincos(x.v);
  return {detail::chain(x, s, c), detail::chain(x, c, T(-s))};
}
template <class T, int N>
Dual<T, N> sin(const Dual<T, N>& x) {
  return sincos(x).first;
}
template <class T, int N>
Dual<T, N> cos(const Dual<T, N>& x) {
  return sincos(x).second;
}
template <class T, int N>
Dual<T, N> tan(const Dual<T, N>& x) {
  const T t = tan(x.v);
  return detail::chain(x, t, T(1.0 + t * t));
}
template <class T, int N>
Dual<T, N> sec(const Dual<T, N>& x) {
  const auto [s, c] = sincos(x.v);
  if (std::abs(value_of(c)) < kPoleTolerance) {
    throw SingularityError("sec evaluated at a pole", value_of(x));
  }
  const T sc = T(1.0) / c;
  return detail::chain(x, sc, T(sc * (s * sc)));
}
template <class T, int N>
Dual<T, N> atan(const Dual<T, N>& x) {
  return detail::chain(x, T(atan(x.v)), T(1.0 / (1.0 + x.v * x.v)));
}
template <class T, int N>
Dual<T, N> atan2(const Dual<T, N>& y, const Dual<T, N>& x) {
  const T r2 = x.v * x.v + y.v * y.v;
  if (value_of(r2) == 0.0) throw SingularityError("atan2 evaluated at the origin", 0.0);
  Dual<T, N> r;
  r.v = atan2(y.v, x.v);
  const T inv = T(1.0) / r2;
  for (int i = 0; i < N; ++i) r.d[i] = (x.v * y.d[i] - y.v * x.d[i]) * inv;
  return r;
}
template <class T, int N>
Dual<T, N> tanh(const Dual<T, N>& x) {
  const T t = tanh(x.v);
  return detail::chain(x, t, T(1.0 - t * t));
}
template <class T, int N>
std::pair<Dual<T, N>, Dual<T, N>> sinhcosh(const Dual<T, N>& x) {
  const auto [s, c] = sinhcosh(x.v);
  return {detail::chain(x, s, c), detail::chain(x, c, s)};
}
template <class T, int N>
Dual<T, N> sinh(const Dual<T, N>& x) {
  return sinhcosh(x).first;
}
template <class T, int N>
Dual<T, N> cosh(const Dual<T, N>& x) {
  return sinhcosh(x).second;
}
template <class T, int N>
Dual<T, N> exp(const Dual<T, N>& x) {
  const T e = exp(x.v);
  return detail::chain(x, e, e);
}
template <class T, int N>
Dual<T, N> log(const Dual<T, N>& x) {
  return detail::chain(x, T(log(x.v)), T(1.0 / x.v));
}
template <class T, int N>
Dual<T, N> sqrt(const Dual<T, N>& x) {
  if (value_of(x.v) <= 0.0) {
    throw SingularityError("sqrt differentiated at or below zero", value_of(x));
  }
  const T r = sqrt(x.v);
  return detail::chain(x, r, T(0.5 / r));
}
template <class T, int N>
Dual<T, N> pow(const Dual<T, N>& x, double p) {
  return detail::chain(x, T(pow(x.v, p)), T(p * pow(x.v, p - 1.0)));
}
// abs is differentiated on the side of the value's sign (derivative +1 at 0).
template <class T, int N>
Dual<T, N> abs(const Dual<T, N>& x) {
  return value_of(x) < 0.0 ? -x : x;
}

template <Scalar T>
T square(const T& x) {
  return x * x;
}

// ---------------------------------------------------------------------------
// Seeding helpers

// Value and gradient of f at point. f receives a std::array of K duals.
template <int K, class F>
std::pair<double, std::array<double, K>> seed_gradient(F&& f,
                                                       const std::array<double, K>& point) {
  using D = Dual<double, K>;
  std::array<D, K> x;
  for (int i = 0; i < K; ++i) {
    x[i] = D(point[i]);
    x[i].d[i] = 1.0;
  }
  const D y = f(x);
  return {y.v, y.d};
}

// Nested single-tangent duals over a base scalar: JetOver<0, B> = B,
// JetOver<k, B> = Dual<JetOver<k-1, B>, 1>. Along one direction, the component
// reached by taking the tangent i times holds the i-th derivative.
template <int K, class Base>
struct JetOverType {
  using type = Dual<typename JetOverType<K - 1, Base>::type, 1>;
};
template <class Base>
struct JetOverType<0, Base> {
  using type = Base;
};
template <int K, class Base>
using JetOver = typename JetOverType<K, Base>::type;

template <int K>
using Jet = JetOver<K, double>;

// Jet of the identity map t -> t at t0.
template <int K>
Jet<K> variable_jet(double t0) {
  if constexpr (K == 0) {
    return t0;
  } else {
    Jet<K> r(variable_jet<K - 1>(t0));
    r.d[0] = Jet<K - 1>(1.0);
    return r;
  }
}

// i-th derivative (i <= K) stored in a depth-K jet, as a base scalar.
template <int K, class Base>
const Base& jet_derivative(const JetOver<K, Base>& j, int i) {
  if constexpr (K == 0) {
    return j;
  } else {
    return i > 0 ? jet_derivative<K - 1, Base>(j.d[0], i - 1)
                 : jet_derivative<K - 1, Base>(j.v, 0);
  }
}

template <int K>
double derivative(const Jet<K>& j, int i) {
  return jet_derivative<K, double>(j, i);
}

// Drops the outermost layer and keeps the value.
template <class T, int N>
const T& value_part(const Dual<T, N>& x) {
  return x.v;
}

}  // namespace nhtrack::ad
