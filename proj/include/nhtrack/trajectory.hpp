#pragma once

// Desired planar curves t -> x^D(t). Every catalog entry evaluates position,
// velocity and acceleration over any differentiable scalar, so higher time
// derivatives come from evaluating on jets.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <type_traits>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Eigenvalues>

#include "nhtrack/dual.hpp"
#include "nhtrack/errors.hpp"
#include "nhtrack/models.hpp"

namespace nhtrack {

// x(t) = origin + velocity t
struct LineTrajectory {
  Vec2 origin{};
  Vec2 velocity{1.0, 0.0};

  template <ad::Scalar T>
  Pair<T> position(const T& t) const {
    return {t * velocity[0] + origin[0], t * velocity[1] + origin[1]};
  }
  template <ad::Scalar T>
  Pair<T> velocity_at(const T&) const {
    return {T(velocity[0]), T(velocity[1])};
  }
  template <ad::Scalar T>
  Pair<T> acceleration_at(const T&) const {
    return {T(0.0), T(0.0)};
  }
  std::optional<double> speed_floor(double) const { return std::hypot(velocity[0], velocity[1]); }
  std::optional<double> derivative_bound(int order, double) const {
    return order == 1 ? std::hypot(velocity[0], velocity[1]) : 0.0;
  }
};

// x(t) = center + radius (cos(rate t + phase), sin(rate t + phase))
struct CircleTrajectory {
  Vec2 center{};
  double radius = 1.0;
  double rate = 1.0;
  double phase = 0.0;

  template <ad::Scalar T>
  Pair<T> position(const T& t) const {
    using ad::sincos;
    const auto [s, c] = sincos(t * rate + phase);
    return {c * radius + center[0], s * radius + center[1]};
  }
  template <ad::Scalar T>
  Pair<T> velocity_at(const T& t) const {
    using ad::sincos;
    const auto [s, c] = sincos(t * rate + phase);
    return {s * (-radius * rate), c * (radius * rate)};
  }
  template <ad::Scalar T>
  Pair<T> acceleration_at(const T& t) const {
    using ad::sincos;
    const auto [s, c] = sincos(t * rate + phase);
    const double k = -radius * rate * rate;
    return {c * k, s * k};
  }
  std::optional<double> speed_floor(double) const { return std::abs(radius * rate); }
  std::optional<double> derivative_bound(int order, double) const {
    return std::abs(radius) * std::pow(std::abs(rate), order);
  }
};

// x(t) = origin + (speed t, amplitude sin(frequency t))
struct LaneChangeTrajectory {
  Vec2 origin{};
  double speed = 1.0;
  double amplitude = 1.0;
  double frequency = 0.5;  // rad/s

  template <ad::Scalar T>
  Pair<T> position(const T& t) const {
    using ad::sin;
    return {t * speed + origin[0], sin(t * frequency) * amplitude + origin[1]};
  }
  template <ad::Scalar T>
  Pair<T> velocity_at(const T& t) const {
    using ad::cos;
    return {T(speed), cos(t * frequency) * (amplitude * frequency)};
  }
  template <ad::Scalar T>
  Pair<T> acceleration_at(const T& t) const {
    using ad::sin;
    return {T(0.0), sin(t * frequency) * (-amplitude * frequency * frequency)};
  }
  std::optional<double> speed_floor(double) const { return std::abs(speed); }
  std::optional<double> derivative_bound(int order, double) const {
    const double a = std::abs(amplitude) * std::pow(std::abs(frequency), order);
    return order == 1 ? std::hypot(speed, a) : a;
  }
};

// x_k(t) = sum_j coeffs_k[j] t^j
class PolynomialTrajectory {
 public:
  PolynomialTrajectory(std::vector<double> cx, std::vector<double> cy)
      : c_{std::move(cx), std::move(cy)} {
    if (c_[0].empty() || c_[1].empty()) {
      throw DomainError("polynomial trajectory needs at least one coefficient per axis");
    }
    for (int k = 0; k < 2; ++k) {
      dc_[k] = differentiate(c_[k]);
      ddc_[k] = differentiate(dc_[k]);
    }
  }

  const std::vector<double>& coefficients(int axis) const { return c_[axis]; }

  template <ad::Scalar T>
  Pair<T> position(const T& t) const {
    return {horner(c_[0], t), horner(c_[1], t)};
  }
  template <ad::Scalar T>
  Pair<T> velocity_at(const T& t) const {
    return {horner(dc_[0], t), horner(dc_[1], t)};
  }
  template <ad::Scalar T>
  Pair<T> acceleration_at(const T& t) const {
    return {horner(ddc_[0], t), horner(ddc_[1], t)};
  }
  // Exact minimum of |x'| over [0, horizon]: |x'|^2 is a polynomial, so the
  // minimum sits at an end point or a real root of its derivative.
  std::optional<double> speed_floor(double horizon) const {
    std::vector<double> sq(std::max(dc_[0].size(), dc_[1].size()) * 2 - 1, 0.0);
    for (const auto& d : dc_) {
      for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t j = 0; j < d.size(); ++j) sq[i + j] += d[i] * d[j];
    }
    std::vector<double> candidates{0.0, horizon};
    auto dsq = differentiate(sq);
    while (dsq.size() > 1 && dsq.back() == 0.0) dsq.pop_back();
    const auto deg = static_cast<Eigen::Index>(dsq.size()) - 1;
    if (deg >= 1) {
      // Companion matrix of the monic derivative.
      Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(deg, deg);
      for (Eigen::Index i = 1; i < deg; ++i) comp(i, i - 1) = 1.0;
      for (Eigen::Index i = 0; i < deg; ++i) comp(i, deg - 1) = -dsq[i] / dsq[deg];
      const Eigen::VectorXcd roots = Eigen::EigenSolver<Eigen::MatrixXd>(comp, false).eigenvalues();
      for (const auto& r : roots) {
        if (std::abs(r.imag()) <= 1e-7 * (1.0 + std::abs(r.real()))) {
          candidates.push_back(std::clamp(r.real(), 0.0, horizon));
        }
      }
    }
    double lo = std::numeric_limits<double>::infinity();
    for (double t : candidates) lo = std::min(lo, horner(sq, t));
    return std::sqrt(std::max(lo, 0.0));
  }
  std::optional<double> derivative_bound(int, double) const { return std::nullopt; }

 private:
  static std::vector<double> differentiate(const std::vector<double>& c) {
    std::vector<double> d;
    for (std::size_t j = 1; j < c.size(); ++j) d.push_back(static_cast<double>(j) * c[j]);
    if (d.empty()) d.push_back(0.0);
    return d;
  }
  template <class T>
  static T horner(const std::vector<double>& c, const T& t) {
    T acc(c.back());
    for (std::size_t j = c.size() - 1; j-- > 0;) acc = acc * t + c[j];
    return acc;
  }

  std::array<std::vector<double>, 2> c_, dc_, ddc_;
};

class Trajectory {
 public:
  using Variant =
      std::variant<LineTrajectory, CircleTrajectory, LaneChangeTrajectory, PolynomialTrajectory>;

  Trajectory(Variant v) : v_(std::move(v)) {}  // NOLINT: implicit from catalog entries
  template <class C>
    requires std::is_constructible_v<Variant, C> && (!std::is_same_v<std::decay_t<C>, Variant>)
  Trajectory(C c) : v_(std::move(c)) {}  // NOLINT

  template <ad::Scalar T>
  Pair<T> position(const T& t) const {
    return std::visit([&](const auto& c) { return c.position(t); }, v_);
  }
  template <ad::Scalar T>
  Pair<T> velocity(const T& t) const {
    return std::visit([&](const auto& c) { return c.template velocity_at<T>(t); }, v_);
  }
  template <ad::Scalar T>
  Pair<T> acceleration(const T& t) const {
    return std::visit([&](const auto& c) { return c.template acceleration_at<T>(t); }, v_);
  }

  double speed(double t) const {
    const auto v = velocity(t);
    return std::hypot(v[0], v[1]);
  }

  // Analytic lower bound of |x'| over [0, horizon], when known.
  std::optional<double> speed_floor(double horizon) const {
    return std::visit([&](const auto& c) { return c.speed_floor(horizon); }, v_);
  }
  // Analytic bound of |x^(order)| over [0, horizon], when known.
  std::optional<double> derivative_bound(int order, double horizon) const {
    return std::visit([&](const auto& c) { return c.derivative_bound(order, horizon); }, v_);
  }

  std::string_view kind_name() const {
    static constexpr std::string_view kNames[] = {"line", "circle", "lane_change", "polynomial"};
    return kNames[v_.index()];
  }
  const Variant& variant() const { return v_; }

 private:
  Variant v_;
};

}  // namespace nhtrack
