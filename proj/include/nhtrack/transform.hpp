#pragma once

// Chained-form coordinates for maneuverable models.
//
//   s = S(y) = (y1, L_h1 y1, ..., L_h1^{n-1} y1)
//   v = F(y) u,  F = [[1, 0], [L_h1^n y1, L_h2 L_h1^{n-1} y1]]
//
// turn the shape dynamics into s_i' = v1 s_{i+1} (i < n), s_n' = v2. The
// generic path computes the repeated Lie derivatives by propagating jets of
// the h1 flow. The truck family has a closed form in which S_i is affine in
// tan y_i, which also gives an explicit inverse.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "nhtrack/dual.hpp"
#include "nhtrack/errors.hpp"
#include "nhtrack/models.hpp"
#include "nhtrack/small_vector.hpp"

namespace nhtrack {

namespace detail {

// Calls f(std::integral_constant<int, K>{}) with K == depth, for depths up to
// Max.
template <int Max = kMaxShapeDim, int K = 0, class F>
void with_depth(int depth, F&& f) {
  if (depth == K) {
    f(std::integral_constant<int, K>{});
    return;
  }
  if constexpr (K < Max) {
    with_depth<Max, K + 1>(depth, std::forward<F>(f));
  } else {
    throw DomainError("jet depth " + std::to_string(depth) + " exceeds the supported maximum " +
                      std::to_string(Max));
  }
}

// Depth-K jet (in the flow parameter) of the solution of y' = h1(y) through
// y. Built one layer at a time: the tangent of layer K is h1 evaluated on
// layer K-1.
template <int K, class T>
void flow_jet(const WheeledModel& m, std::span<const T> y, ShapeVec<ad::JetOver<K, T>>& out) {
  if constexpr (K == 0) {
    out = ShapeVec<T>(y);
  } else {
    using Lower = ad::JetOver<K - 1, T>;
    ShapeVec<Lower> lower;
    flow_jet<K - 1, T>(m, y, lower);
    ShapeVec<Lower> h(y.size());
    m.drift<Lower>(lower, h);
    out.resize(y.size());
    for (std::size_t j = 0; j < y.size(); ++j) out[j] = ad::JetOver<K, T>(lower[j], {h[j]});
  }
}

// (L_h1^i y1)_{i=0..K} evaluated over T.
template <int K, class T>
void drift_tower(const WheeledModel& m, std::span<const T> y, std::span<T> out) {
  ShapeVec<ad::JetOver<K, T>> jet;
  flow_jet<K, T>(m, y, jet);
  for (int i = 0; i <= K; ++i) out[i] = ad::jet_derivative<K, T>(jet[0], i);
}

// (L_h2 L_h1^i y1)_{i=0..K} evaluated over T, by seeding the direction h2.
template <int K, class T>
void steering_tower(const WheeledModel& m, std::span<const T> y, std::span<T> out) {
  using D = ad::Dual<T, 1>;
  const std::size_t n = y.size();
  ShapeVec<T> h2(n);
  m.steering<T>(y, h2);
  ShapeVec<D> yd(n);
  for (std::size_t j = 0; j < n; ++j) yd[j] = D(y[j], {h2[j]});
  std::array<D, kMaxShapeDim + 1> tower;
  drift_tower<K, D>(m, yd, std::span<D>(tower.data(), K + 1));
  for (int i = 0; i <= K; ++i) out[i] = tower[i].d[0];
}

}  // namespace detail

struct LieTower {
  std::vector<double> drift;     // L_h1^i y1
  std::vector<double> steering;  // L_h2 L_h1^i y1
};

inline LieTower lie_derivative_tower(const WheeledModel& model, std::span<const double> y,
                                     int depth) {
  if (static_cast<int>(y.size()) != model.n()) throw DomainError("tower: shape dimension mismatch");
  LieTower t;
  t.drift.resize(depth + 1);
  t.steering.resize(depth + 1);
  detail::with_depth(depth, [&](auto k) {
    constexpr int K = decltype(k)::value;
    detail::drift_tower<K, double>(model, y, t.drift);
    detail::steering_tower<K, double>(model, y, t.steering);
  });
  return t;
}

// Thresholds of the maneuverability test.
inline constexpr double kLieZeroTolerance = 1e-10;
inline constexpr double kLieNonzeroFloor = 1e-10;

struct ManeuverabilityReport {
  bool pass = true;
  int samples = 0;
  // First violation: i such that L_h2 L_h1^i y1 was nonzero for i < n-1 or
  // vanished for i = n-1, with the offending point and its value.
  int witness_order = -1;
  ShapeVec<double> witness_y;
  double witness_value = 0.0;

  std::string summary() const {
    if (pass) return "maneuverable (" + std::to_string(samples) + " samples)";
    std::string y = "(";
    for (std::size_t i = 0; i < witness_y.size(); ++i) {
      if (i > 0) y += ", ";
      y += std::to_string(witness_y[i]);
    }
    return "not maneuverable: L_h2 L_h1^" + std::to_string(witness_order) +
           " y1 = " + std::to_string(witness_value) + " at y = " + y + ")";
  }
};

namespace detail {

// Checks the Lie conditions at one point; returns false and fills the witness
// on violation.
inline bool lie_conditions_hold(const WheeledModel& model, std::span<const double> y,
                                ManeuverabilityReport& report) {
  const int n = model.n();
  const auto t = lie_derivative_tower(model, y, n - 1);
  for (int i = 0; i < n; ++i) {
    const double v = t.steering[i];
    const bool ok = i < n - 1 ? std::abs(v) <= kLieZeroTolerance : std::abs(v) >= kLieNonzeroFloor;
    if (!ok) {
      report.pass = false;
      report.witness_order = i;
      report.witness_y = ShapeVec<double>(y);
      report.witness_value = v;
      return false;
    }
  }
  return true;
}

}  // namespace detail

// Every component index of the model; a single empty index when the model
// has one component.
inline std::vector<ComponentIndex> all_components(const WheeledModel& model) {
  std::vector<ComponentIndex> out;
  if (!model.is_truck_family() || model.n() == 1) {
    out.emplace_back();
    return out;
  }
  const int bits = model.n() - 1;
  for (int code = 0; code < (1 << bits); ++code) {
    ComponentIndex c;
    for (int b = 0; b < bits; ++b) c.mu.push_back((code >> b) & 1);
    out.push_back(c);
  }
  return out;
}

// Samples y in every component (joint angles within 1.4 rad of the box
// center) and checks that L_h2 L_h1^i y1 vanishes for i < n-1 and does not
// vanish for i = n-1.
inline ManeuverabilityReport check_maneuverability(const WheeledModel& model, int sample_count,
                                                   unsigned seed = 1) {
  ManeuverabilityReport report;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> head(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> joint(-1.4, 1.4);
  for (const auto& c : all_components(model)) {
    for (int k = 0; k < sample_count; ++k) {
      ShapeVec<double> y;
      y.push_back(head(rng));
      for (int i = 1; i < model.n(); ++i) {
        const double center = c.mu.empty() ? 0.0 : c.mu[i - 1] * std::numbers::pi;
        y.push_back(center + joint(rng));
      }
      ++report.samples;
      if (!detail::lie_conditions_hold(model, y, report)) return report;
    }
  }
  return report;
}

namespace series {

// Truncated Taylor series in one variable: c[k] is the k-th coefficient.
inline constexpr int kMaxOrder = kMaxShapeDim + 1;
template <class T>
using Coeffs = std::array<T, kMaxOrder + 1>;

template <class T>
Coeffs<T> mul(const Coeffs<T>& a, const Coeffs<T>& b, int order) {
  Coeffs<T> r{};
  for (int k = 0; k <= order; ++k) {
    T acc = a[0] * b[k];
    for (int j = 1; j <= k; ++j) acc = acc + a[j] * b[k - j];
    r[k] = acc;
  }
  return r;
}

template <class T>
Coeffs<T> div(const Coeffs<T>& a, const Coeffs<T>& b, int order) {
  if (std::abs(ad::value_of(b[0])) < ad::kPoleTolerance) {
    throw SingularityError("series division by a vanishing leading term", ad::value_of(b[0]));
  }
  Coeffs<T> q{};
  for (int k = 0; k <= order; ++k) {
    T acc = a[k];
    for (int j = 1; j <= k; ++j) acc = acc - b[j] * q[k - j];
    q[k] = acc / b[0];
  }
  return q;
}

// sin and cos of a series through s' = c a', c' = -s a'.
template <class T>
std::pair<Coeffs<T>, Coeffs<T>> sincos(const Coeffs<T>& a, int order) {
  using ad::sincos;
  Coeffs<T> s{}, c{};
  const auto [s0, c0] = sincos(a[0]);
  s[0] = s0;
  c[0] = c0;
  for (int k = 1; k <= order; ++k) {
    T ss = T(0.0), cc = T(0.0);
    for (int j = 1; j <= k; ++j) {
      ss = ss + a[j] * c[k - j] * static_cast<double>(j);
      cc = cc - a[j] * s[k - j] * static_cast<double>(j);
    }
    s[k] = ss / static_cast<double>(k);
    c[k] = cc / static_cast<double>(k);
  }
  return {s, c};
}

}  // namespace series

namespace detail {

// Taylor coefficients of y1 along the h1 flow of a truck-family model, up to
// the given order. Coefficient k equals L_h1^k y1 / k!.
template <class T>
series::Coeffs<T> truck_heading_series(const WheeledModel& m, std::span<const T> y, int order) {
  const int n = m.n();
  const auto l = m.lengths();
  std::array<series::Coeffs<T>, kMaxShapeDim> Y{};
  for (int j = 0; j < n; ++j) Y[j][0] = y[j];
  for (int k = 0; k < order; ++k) {
    if (n == 1) break;
    std::array<series::Coeffs<T>, kMaxShapeDim> sn{}, tn{}, sc{};
    series::Coeffs<T> one{};
    one[0] = T(1.0);
    for (int j = 1; j < n; ++j) {
      const auto [s, c] = series::sincos(Y[j], k);
      sn[j] = s;
      tn[j] = series::div(s, c, k);
      sc[j] = series::div(one, c, k);
    }
    // eta_1 = tan y2 / l1; eta_i = (tan y_{i+1}/l_i - sin y_i/l_{i-1}) prod_{k=2}^{i} sec y_k.
    series::Coeffs<T> sec_prod = one;
    for (int i = 1; i < n; ++i) {
      series::Coeffs<T> eta{};
      if (i == 1) {
        for (int r = 0; r <= k; ++r) eta[r] = tn[1][r] / l[0];
      } else {
        sec_prod = series::mul(sec_prod, sc[i - 1], k);
        series::Coeffs<T> inner{};
        for (int r = 0; r <= k; ++r) inner[r] = tn[i][r] / l[i - 1] - sn[i - 1][r] / l[i - 2];
        eta = series::mul(inner, sec_prod, k);
      }
      Y[i - 1][k + 1] = eta[k] / static_cast<double>(k + 1);
    }
    Y[n - 1][k + 1] = T(0.0);
  }
  return Y[0];
}

inline double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

// dS_i/dy_i = sigma_i^2 prod_{j<i} sigma_j / l_j, sigma_i = prod_{k=2}^{i} sec y_k.
template <class T>
T truck_diagonal(const WheeledModel& m, std::span<const T> y, int i) {
  using ad::sec;
  const auto l = m.lengths();
  T sigma(1.0), prod(1.0);
  for (int j = 1; j < i; ++j) {
    prod = prod * sigma / l[j - 1];
    sigma = sigma * sec(y[j]);
  }
  return sigma * sigma * prod;
}

}  // namespace detail

// Jacobian diagonal dS_i/dy_i (1-based i) of the truck-family closed form.
inline double truck_transform_diagonal(const WheeledModel& m, std::span<const double> y, int i) {
  return detail::truck_diagonal<double>(m, y, i);
}

enum class TransformKind { kGeneric, kClosedForm };

// Inverse solver settings of the generic path.
inline constexpr int kNewtonMaxIterations = 50;
inline constexpr double kNewtonTolerance = 1e-12;

class ChainTransform {
 public:
  // S from the Lie tower, F from its last two entries, inverse by damped
  // Newton iteration projected onto the box of mu.
  static ChainTransform generic(const WheeledModel& model, const ComponentIndex& mu) {
    validate_component(model, mu);
    ChainTransform t(model, mu, TransformKind::kGeneric);
    ManeuverabilityReport report;
    if (!detail::lie_conditions_hold(model, t.box_center(0.0), report)) {
      throw UnsupportedModelError(std::string(model.name()) + " is " + report.summary());
    }
    return t;
  }

  // Closed form of the truck family.
  static ChainTransform truck(const WheeledModel& model, const ComponentIndex& mu) {
    if (!model.is_truck_family()) {
      throw UnsupportedModelError(std::string(model.name()) + " has no closed-form transform");
    }
    validate_component(model, mu);
    return ChainTransform(model, mu, TransformKind::kClosedForm);
  }

  // Closed form when available, generic otherwise.
  static ChainTransform best(const WheeledModel& model, const ComponentIndex& mu) {
    return model.is_truck_family() ? truck(model, mu) : generic(model, mu);
  }

  TransformKind kind() const { return kind_; }
  const WheeledModel& model() const { return model_; }
  const ComponentIndex& component() const { return mu_; }
  int n() const { return model_.n(); }

  template <ad::Scalar T>
  void forward(std::span<const T> y, std::span<T> s) const {
    check(y.size());
    const int n = model_.n();
    if (kind_ == TransformKind::kClosedForm) {
      const auto c = detail::truck_heading_series<T>(model_, y, n - 1);
      for (int i = 0; i < n; ++i) s[i] = c[i] * detail::factorial(i);
    } else {
      detail::with_depth(n - 1, [&](auto k) {
        constexpr int K = decltype(k)::value;
        detail::drift_tower<K, T>(model_, y, s);
      });
    }
  }

  ShapeVec<double> forward(std::span<const double> y) const {
    ShapeVec<double> s(y.size());
    forward<double>(y, s);
    return s;
  }

  // Second row (L_h1^n y1, L_h2 L_h1^{n-1} y1) of F; the first row is (1, 0).
  template <ad::Scalar T>
  Pair<T> feedback_row(std::span<const T> y) const {
    check(y.size());
    const int n = model_.n();
    Pair<T> row;
    if (kind_ == TransformKind::kClosedForm) {
      const auto c = detail::truck_heading_series<T>(model_, y, n);
      row[0] = c[n] * detail::factorial(n);
      row[1] = detail::truck_diagonal<T>(model_, y, n);
    } else {
      std::array<T, kMaxShapeDim + 1> drift, steer;
      detail::with_depth(n, [&](auto k) {
        constexpr int K = decltype(k)::value;
        detail::drift_tower<K, T>(model_, y, std::span<T>(drift.data(), K + 1));
      });
      detail::with_depth(n - 1, [&](auto k) {
        constexpr int K = decltype(k)::value;
        detail::steering_tower<K, T>(model_, y, std::span<T>(steer.data(), K + 1));
      });
      row = {drift[n], steer[n - 1]};
    }
    return row;
  }

  Pair<double> feedback_row(std::span<const double> y) const {
    return feedback_row<double>(y);
  }

  // v = F(y) u.
  Vec2 to_chained_input(std::span<const double> y, const Vec2& u) const {
    const auto r = feedback_row(y);
    return {u[0], r[0] * u[0] + r[1] * u[1]};
  }

  // u = F(y)^{-1} v.
  Vec2 from_chained_input(std::span<const double> y, const Vec2& v) const {
    const auto r = feedback_row(y);
    if (std::abs(r[1]) < kLieNonzeroFloor) {
      throw SingularityError("feedback matrix is singular", r[1]);
    }
    return {v[0], (v[1] - r[0] * v[0]) / r[1]};
  }

  // Point of O_mu with every joint at its box center.
  ShapeVec<double> box_center(double heading) const {
    ShapeVec<double> y;
    y.push_back(heading);
    for (int i = 1; i < model_.n(); ++i) {
      y.push_back(mu_.mu.empty() ? 0.0 : mu_.mu[i - 1] * std::numbers::pi);
    }
    return y;
  }

  // y in O_mu: every joint strictly inside its box (angles taken mod 2 pi).
  bool contains(std::span<const double> y) const {
    if (mu_.mu.empty()) return true;
    for (int i = 1; i < model_.n(); ++i) {
      const double c = std::cos(y[i]);
      if (std::abs(c) < kBoundaryTolerance) return false;
      if ((c > 0.0 ? 0 : 1) != mu_.mu[i - 1]) return false;
    }
    return true;
  }

  ShapeVec<double> inverse(std::span<const double> s) const {
    check(s.size());
    return kind_ == TransformKind::kClosedForm ? closed_form_inverse(s) : newton_inverse(s);
  }

 private:
  ChainTransform(WheeledModel model, ComponentIndex mu, TransformKind kind)
      : model_(std::move(model)), mu_(std::move(mu)), kind_(kind) {}

  void check(std::size_t size) const {
    if (static_cast<int>(size) != model_.n()) {
      throw DomainError("transform: expected " + std::to_string(model_.n()) + " coordinates");
    }
  }

  // y_1 = s_1, y_i = atan((s_i - xi_i) / theta_i) + mu_{i-1} pi, where xi_i is
  // S_i with y_i = 0 and theta_i = dS_i/dy_i at y_i = 0.
  ShapeVec<double> closed_form_inverse(std::span<const double> s) const {
    const int n = model_.n();
    ShapeVec<double> y(n, 0.0);
    y[0] = s[0];
    for (int i = 2; i <= n; ++i) {
      const std::span<const double> head(y.data(), n);
      y[i - 1] = 0.0;
      const auto c = detail::truck_heading_series<double>(model_, head, i - 1);
      const double xi = c[i - 1] * detail::factorial(i - 1);
      const double theta = detail::truck_diagonal<double>(model_, head, i);
      y[i - 1] = std::atan((s[i - 1] - xi) / theta) + mu_.mu[i - 2] * std::numbers::pi;
    }
    return y;
  }

  ShapeVec<double> newton_inverse(std::span<const double> s) const {
    const int n = model_.n();
    using D = ad::Dual<double, kMaxShapeDim>;
    const auto residual = [&](const ShapeVec<double>& y, Eigen::VectorXd* r, Eigen::MatrixXd* jac) {
      ShapeVec<D> yd(n), sd(n);
      for (int i = 0; i < n; ++i) {
        yd[i] = D(y[i]);
        yd[i].d[i] = 1.0;
      }
      forward<D>(yd, sd);
      for (int i = 0; i < n; ++i) {
        (*r)(i) = sd[i].v - s[i];
        if (jac != nullptr) {
          for (int j = 0; j < n; ++j) (*jac)(i, j) = sd[i].d[j];
        }
      }
    };
    constexpr double kMargin = 1e-9;
    const auto project = [&](ShapeVec<double>& y) {
      for (int i = 1; i < n; ++i) {
        const double center = mu_.mu.empty() ? 0.0 : mu_.mu[i - 1] * std::numbers::pi;
        const double half = std::numbers::pi / 2 - kMargin;
        y[i] = std::clamp(y[i], center - half, center + half);
      }
    };
    ShapeVec<double> y = box_center(s[0]);
    Eigen::VectorXd r(n), r_trial(n);
    Eigen::MatrixXd jac(n, n);
    double norm = 0.0;
    for (int it = 0; it < kNewtonMaxIterations; ++it) {
      residual(y, &r, &jac);
      norm = r.lpNorm<Eigen::Infinity>();
      const double scale = std::max(1.0, Eigen::Map<const Eigen::VectorXd>(s.data(), n)
                                             .lpNorm<Eigen::Infinity>());
      if (norm <= kNewtonTolerance * scale) return y;
      const Eigen::VectorXd step = jac.partialPivLu().solve(r);
      double damping = 1.0;
      for (int ls = 0; ls < 30; ++ls, damping *= 0.5) {
        ShapeVec<double> trial = y;
        for (int i = 0; i < n; ++i) trial[i] -= damping * step(i);
        project(trial);
        residual(trial, &r_trial, nullptr);
        if (r_trial.lpNorm<Eigen::Infinity>() < norm || ls == 29) {
          y = trial;
          break;
        }
      }
    }
    residual(y, &r, nullptr);
    norm = r.lpNorm<Eigen::Infinity>();
    const double scale =
        std::max(1.0, Eigen::Map<const Eigen::VectorXd>(s.data(), n).lpNorm<Eigen::Infinity>());
    if (norm <= kNewtonTolerance * scale) return y;
    throw InversionError("chained-form inverse did not converge", norm);
  }

  WheeledModel model_;
  ComponentIndex mu_;
  TransformKind kind_;
};

}  // namespace nhtrack
