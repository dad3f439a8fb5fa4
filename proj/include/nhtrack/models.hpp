#pragma once

// Kinematic models of wheeled vehicles in the control-affine form
//
//   x' = u1 (cos y1, sin y1)
//   y' = u1 h1(y) + u2 h2(y)
//
// where x is the planar position of a distinguished axle midpoint, y1 is the
// heading of that axle and y2..yn are joint or steering angles.

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nhtrack/dual.hpp"
#include "nhtrack/errors.hpp"
#include "nhtrack/small_vector.hpp"

namespace nhtrack {

using Vec2 = std::array<double, 2>;

template <class T>
using Pair = std::array<T, 2>;

// |cos y_i| below this puts y on the boundary between two components.
inline constexpr double kBoundaryTolerance = 1e-12;

enum class ModelKind { kSled, kAutomobile, kAutomobileFrontAxle, kTruck };

struct Configuration {
  Vec2 x{};
  ShapeVec<double> y;
};

// Which side of +-pi/2 every joint angle y2..yn lies on. mu[i-2] is 0 when
// cos y_i > 0 and 1 when cos y_i < 0.
struct ComponentIndex {
  SmallVec<int, kMaxShapeDim> mu;

  friend bool operator==(const ComponentIndex& a, const ComponentIndex& b) {
    return a.mu == b.mu;
  }
  // "(0,1,1)" style label; "()" for single-component models.
  std::string label() const {
    std::string out = "(";
    for (std::size_t i = 0; i < mu.size(); ++i) {
      if (i > 0) out += ",";
      out += std::to_string(mu[i]);
    }
    return out + ")";
  }
};

class WheeledModel {
 public:
  ModelKind kind() const { return kind_; }
  int n() const { return n_; }
  std::string_view name() const { return name_; }

  // Distances l_1..l_{n-1} between consecutive axles; the automobile is the
  // member with a single unit length and the sled has none.
  std::span<const double> lengths() const { return lengths_; }

  // Sled, automobile and truck share the axle-chain geometry. The front-axle
  // automobile does not.
  bool is_truck_family() const { return kind_ != ModelKind::kAutomobileFrontAxle; }

  template <ad::Scalar T>
  void drift(std::span<const T> y, std::span<T> h1) const {
    using ad::sec;
    using ad::sin;
    using ad::tan;
    check_shape(y.size());
    if (kind_ == ModelKind::kAutomobileFrontAxle) {
      h1[0] = sin(y[1]);
      h1[1] = T(0.0);
      return;
    }
    if (n_ == 1) {
      h1[0] = T(0.0);
      return;
    }
    h1[0] = tan(y[1]) / lengths_[0];
    T sec_prod(1.0);
    for (int i = 2; i < n_; ++i) {
      sec_prod = sec_prod * sec(y[i - 1]);
      h1[i - 1] = (tan(y[i]) / lengths_[i - 1] - sin(y[i - 1]) / lengths_[i - 2]) * sec_prod;
    }
    h1[n_ - 1] = T(0.0);
  }

  template <ad::Scalar T>
  void steering(std::span<const T> y, std::span<T> h2) const {
    check_shape(y.size());
    for (int i = 0; i < n_; ++i) h2[i] = T(0.0);
    if (kind_ == ModelKind::kAutomobileFrontAxle) h2[0] = T(1.0);
    h2[n_ - 1] = T(1.0);
  }

  friend WheeledModel chaplygin_sled();
  friend WheeledModel automobile();
  friend WheeledModel automobile_front_axle();
  friend WheeledModel truck_with_trailers(std::vector<double> lengths);

 private:
  WheeledModel(ModelKind kind, int n, std::vector<double> lengths, std::string name)
      : kind_(kind), n_(n), lengths_(std::move(lengths)), name_(std::move(name)) {}

  void check_shape(std::size_t size) const {
    if (static_cast<int>(size) != n_) {
      throw DomainError(name_ + ": expected " + std::to_string(n_) + " shape coordinates, got " +
                        std::to_string(size));
    }
  }

  ModelKind kind_;
  int n_;
  std::vector<double> lengths_;
  std::string name_;
};

inline WheeledModel chaplygin_sled() { return {ModelKind::kSled, 1, {}, "sled"}; }

inline WheeledModel automobile() { return {ModelKind::kAutomobile, 2, {1.0}, "automobile"}; }

inline WheeledModel automobile_front_axle() {
  return {ModelKind::kAutomobileFrontAxle, 2, {}, "automobile_front_axle"};
}

inline WheeledModel truck_with_trailers(std::vector<double> lengths) {
  if (lengths.empty()) throw DomainError("truck needs at least one axle distance");
  for (double l : lengths) {
    if (!(l > 0.0)) throw DomainError("axle distances must be positive");
  }
  const int n = static_cast<int>(lengths.size()) + 1;
  if (n > kMaxShapeDim) {
    throw DomainError("truck with " + std::to_string(n) + " shape coordinates exceeds the limit " +
                      std::to_string(kMaxShapeDim));
  }
  return {ModelKind::kTruck, n, std::move(lengths), "truck"};
}

// Velocity (x1', x2', y1', ..., yn') for state q = (x1, x2, y1, ..., yn).
template <ad::Scalar T>
void rhs(const WheeledModel& model, std::span<const T> q, const Pair<T>& u, std::span<T> qdot) {
  using ad::cos;
  using ad::sin;
  const int n = model.n();
  if (static_cast<int>(q.size()) != n + 2 || static_cast<int>(qdot.size()) != n + 2) {
    throw DomainError("rhs: state dimension mismatch");
  }
  const auto y = q.subspan(2);
  ShapeVec<T> h1(n), h2(n);
  model.drift<T>(y, h1);
  model.steering<T>(y, h2);
  qdot[0] = u[0] * cos(y[0]);
  qdot[1] = u[0] * sin(y[0]);
  for (int i = 0; i < n; ++i) qdot[2 + i] = u[0] * h1[i] + u[1] * h2[i];
}

inline StateVec<double> rhs(const WheeledModel& model, const Configuration& q, const Vec2& u) {
  StateVec<double> state(q.y.size() + 2), out(q.y.size() + 2);
  state[0] = q.x[0];
  state[1] = q.x[1];
  for (std::size_t i = 0; i < q.y.size(); ++i) state[2 + i] = q.y[i];
  rhs<double>(model, state, Pair<double>{u[0], u[1]}, out);
  return out;
}

// Angle reduced to the chart (-pi, pi].
inline double chart_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double r = std::remainder(a, kTwoPi);
  if (r <= -std::numbers::pi) r += kTwoPi;
  return r;
}

inline ComponentIndex component_of(const WheeledModel& model, std::span<const double> y) {
  if (static_cast<int>(y.size()) != model.n()) {
    throw DomainError("component_of: shape dimension mismatch");
  }
  ComponentIndex c;
  if (!model.is_truck_family()) return c;  // defined on the whole manifold
  for (int i = 1; i < model.n(); ++i) {
    const double cy = std::cos(y[i]);
    if (std::abs(cy) < kBoundaryTolerance) {
      throw BoundaryError("joint angle y" + std::to_string(i + 1) + " = " + std::to_string(y[i]) +
                              " lies on a component boundary",
                          i + 1);
    }
    c.mu.push_back(cy > 0.0 ? 0 : 1);
  }
  return c;
}

// Checks that mu has the right length for the model.
inline void validate_component(const WheeledModel& model, const ComponentIndex& mu) {
  const int expected = model.is_truck_family() ? model.n() - 1 : 0;
  if (static_cast<int>(mu.mu.size()) != expected) {
    throw DomainError("component index has " + std::to_string(mu.mu.size()) +
                      " entries, expected " + std::to_string(expected));
  }
  for (int m : mu.mu) {
    if (m != 0 && m != 1) throw DomainError("component index entries must be 0 or 1");
  }
}

struct AxleChain {
  std::vector<Vec2> chi;   // axle midpoints, chi[0] = x
  std::vector<double> psi; // absolute axle headings
  std::vector<Vec2> tau;   // unit heading vectors
  std::vector<Vec2> nu;    // unit axle vectors (heading rotated by +pi/2)
};

inline AxleChain axle_chain(const WheeledModel& model, const Configuration& q) {
  if (!model.is_truck_family()) {
    throw UnsupportedModelError(std::string(model.name()) + " has no axle chain");
  }
  const int n = model.n();
  if (static_cast<int>(q.y.size()) != n) throw DomainError("axle_chain: shape dimension mismatch");
  const auto l = model.lengths();
  // The sled is a single axle; the automobile and truck have n axles.
  const int axles = n == 1 ? 1 : n;
  AxleChain c;
  double psi = 0.0;
  Vec2 chi = q.x;
  for (int i = 0; i < axles; ++i) {
    psi += q.y[i];
    const Vec2 tau{std::cos(psi), std::sin(psi)};
    c.chi.push_back(chi);
    c.psi.push_back(psi);
    c.tau.push_back(tau);
    c.nu.push_back({-tau[1], tau[0]});
    if (i + 1 < axles) chi = {chi[0] + l[i] * tau[0], chi[1] + l[i] * tau[1]};
  }
  return c;
}

// Left-hand sides of the rolling constraints at (q, q'). The sled uses its
// single knife-edge constraint, the automobile the two wheel-axle
// constraints, the truck one constraint per axle written through the
// cumulative headings psi_i. The front-axle automobile uses the front and
// rear wheel constraints.
inline ShapeVec<double> constraint_residuals(const WheeledModel& model,
                                             std::span<const double> q,
                                             std::span<const double> qdot) {
  const int n = model.n();
  if (static_cast<int>(q.size()) != n + 2 || static_cast<int>(qdot.size()) != n + 2) {
    throw DomainError("constraint_residuals: dimension mismatch");
  }
  const double dx1 = qdot[0], dx2 = qdot[1];
  const double y1 = q[2];
  ShapeVec<double> r;
  switch (model.kind()) {
    case ModelKind::kSled:
      r.push_back(dx1 * std::sin(y1) - dx2 * std::cos(y1));
      return r;
    case ModelKind::kAutomobile: {
      const double y2 = q[3];
      r.push_back(dx1 * std::sin(y1) - dx2 * std::cos(y1));
      r.push_back(dx1 * std::sin(y1 + y2) - dx2 * std::cos(y1 + y2) - qdot[2] * std::cos(y2));
      return r;
    }
    case ModelKind::kAutomobileFrontAxle: {
      // The rear axle sits one unit behind x along heading y1 - y2.
      const double theta = y1 - q[3];
      const double dtheta = qdot[2] - qdot[3];
      r.push_back(dx1 * std::sin(y1) - dx2 * std::cos(y1));
      r.push_back(-dx1 * std::sin(theta) + dx2 * std::cos(theta) - dtheta);
      return r;
    }
    case ModelKind::kTruck: {
      const auto l = model.lengths();
      ShapeVec<double> psi(n), dpsi(n);
      double acc = 0.0, dacc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += q[2 + i];
        dacc += qdot[2 + i];
        psi[i] = acc;
        dpsi[i] = dacc;
      }
      for (int i = 0; i < n; ++i) {
        double v = -std::sin(psi[i]) * dx1 + std::cos(psi[i]) * dx2;
        for (int j = 0; j < i; ++j) v += l[j] * std::cos(psi[j] - psi[i]) * dpsi[j];
        r.push_back(v);
      }
      return r;
    }
  }
  return r;
}

// Rear-axle speed of the truck when the tail trailer moves with speed u1.
inline double truck_alternative_input(const WheeledModel& model, std::span<const double> y,
                                      double u1) {
  if (!model.is_truck_family()) {
    throw UnsupportedModelError(std::string(model.name()) + " is not a truck-family model");
  }
  if (static_cast<int>(y.size()) != model.n()) {
    throw DomainError("truck_alternative_input: shape dimension mismatch");
  }
  double f = u1;
  for (int k = 1; k + 1 < model.n(); ++k) f *= ad::sec(y[k]);
  return f;
}

}  // namespace nhtrack
