#pragma once

// Command-line front end: scenario files, checks, reference planning,
// closed-loop simulation and CSV/SVG/JSON artifacts.
//
// Scenario files are JSON. Units are meters, radians and seconds.
//
//   {
//     "model":      {"kind": "sled" | "automobile" | "automobile_front_axle" | "truck",
//                    "lengths": [m, ...]},              // truck only
//     "trajectory": {"kind": "line" | "circle" | "lane_change" | "polynomial", ...params},
//     "direction":  1 | -1 | "forward" | "backward",
//     "gains":      {"gamma": 1/m, "deltas": [...]},
//     "initial_state": {"x": [m, m], "y": [rad, ...]},  // default: reference at t = 0
//     "horizon": s, "step": s,
//     "outputs": {"csv": "trace.csv", "svg": "poses.svg", "decimation": 10, "poses": 9}
//   }
//
// Trajectory parameters:
//   line        origin [m, m], velocity [m/s, m/s]
//   circle      center [m, m], radius m, rate rad/s, phase rad
//   lane_change origin [m, m], speed m/s, amplitude m, frequency rad/s
//   polynomial  x [coefficients], y [coefficients]  (ascending powers of t)

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nhtrack/errors.hpp"
#include "nhtrack/maneuver.hpp"
#include "nhtrack/models.hpp"
#include "nhtrack/simulator.hpp"
#include "nhtrack/trajectory.hpp"
#include "nhtrack/transform.hpp"

namespace nhtrack::cli {

using json = nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFail = 1;
inline constexpr int kExitUsage = 2;

inline constexpr const char* kOutDirEnv = "NHTRACK_OUT_DIR";
inline constexpr int kManeuverabilitySamples = 50;  // per component

// Malformed or schema-violating scenario. key() is the dotted path of the
// offending entry, empty for syntax errors.
class ScenarioError : public Error {
 public:
  ScenarioError(const std::string& what, std::string key) : Error(what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct OutputSpec {
  std::string csv = "trace.csv";
  std::string svg = "poses.svg";
  int decimation = 10;
  int poses = 9;
};

struct ScenarioFile {
  std::string name;
  Scenario scenario;
  bool initial_from_reference = true;
  OutputSpec outputs;
};

// ---------------------------------------------------------------------------
// Scenario parsing

namespace detail {

inline std::string join_path(std::string_view parent, std::string_view key) {
  return parent.empty() ? std::string(key) : std::string(parent) + "." + std::string(key);
}

inline void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ScenarioError(path + " must be an object", path);
}

inline void allow_keys(const json& obj, const std::string& path,
                       std::initializer_list<std::string_view> keys) {
  for (const auto& [k, v] : obj.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      const auto p = join_path(path, k);
      throw ScenarioError("unknown key '" + p + "'", p);
    }
  }
}

inline const json& required(const json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) {
    const auto p = join_path(path, key);
    throw ScenarioError("missing key '" + p + "'", p);
  }
  return obj.at(key);
}

inline double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ScenarioError(path + " must be a number", path);
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ScenarioError(path + " must be finite", path);
  return v;
}

inline double number_or(const json& obj, const std::string& path, const char* key, double fallback) {
  return obj.contains(key) ? as_number(obj.at(key), join_path(path, key)) : fallback;
}

inline double number(const json& obj, const std::string& path, const char* key) {
  return as_number(required(obj, path, key), join_path(path, key));
}

inline std::vector<double> numbers(const json& j, const std::string& path) {
  if (!j.is_array()) throw ScenarioError(path + " must be an array of numbers", path);
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(as_number(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

inline Vec2 vec2(const json& j, const std::string& path) {
  const auto v = numbers(j, path);
  if (v.size() != 2) throw ScenarioError(path + " must have 2 entries", path);
  return {v[0], v[1]};
}

inline Vec2 vec2_or(const json& obj, const std::string& path, const char* key, Vec2 fallback) {
  return obj.contains(key) ? vec2(obj.at(key), join_path(path, key)) : fallback;
}

inline int positive_int(const json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() < 1) {
    throw ScenarioError(path + " must be a positive integer", path);
  }
  return static_cast<int>(j.get<long long>());
}

inline std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) throw ScenarioError(path + " must be a string", path);
  return j.get<std::string>();
}

inline WheeledModel parse_model(const json& j) {
  const std::string path = "model";
  require_object(j, path);
  allow_keys(j, path, {"kind", "lengths"});
  const auto kind = text(required(j, path, "kind"), "model.kind");
  if (kind == "truck") {
    const auto lengths = numbers(required(j, path, "lengths"), "model.lengths");
    try {
      return truck_with_trailers(lengths);
    } catch (const DomainError& e) {
      throw ScenarioError(std::string("model.lengths: ") + e.what(), "model.lengths");
    }
  }
  if (j.contains("lengths")) {
    throw ScenarioError("model.lengths is only valid for kind 'truck'", "model.lengths");
  }
  if (kind == "sled") return chaplygin_sled();
  if (kind == "automobile") return automobile();
  if (kind == "automobile_front_axle") return automobile_front_axle();
  throw ScenarioError("unknown model.kind '" + kind + "'", "model.kind");
}

inline Trajectory parse_trajectory(const json& j) {
  const std::string path = "trajectory";
  require_object(j, path);
  const auto kind = text(required(j, path, "kind"), "trajectory.kind");
  if (kind == "line") {
    allow_keys(j, path, {"kind", "origin", "velocity"});
    return LineTrajectory{vec2_or(j, path, "origin", {0.0, 0.0}),
                          vec2(required(j, path, "velocity"), "trajectory.velocity")};
  }
  if (kind == "circle") {
    allow_keys(j, path, {"kind", "center", "radius", "rate", "phase"});
    return CircleTrajectory{vec2_or(j, path, "center", {0.0, 0.0}), number(j, path, "radius"),
                            number(j, path, "rate"), number_or(j, path, "phase", 0.0)};
  }
  if (kind == "lane_change") {
    allow_keys(j, path, {"kind", "origin", "speed", "amplitude", "frequency"});
    return LaneChangeTrajectory{vec2_or(j, path, "origin", {0.0, 0.0}), number(j, path, "speed"),
                                number(j, path, "amplitude"), number(j, path, "frequency")};
  }
  if (kind == "polynomial") {
    allow_keys(j, path, {"kind", "x", "y"});
    auto cx = numbers(required(j, path, "x"), "trajectory.x");
    auto cy = numbers(required(j, path, "y"), "trajectory.y");
    if (cx.empty()) throw ScenarioError("trajectory.x needs a coefficient", "trajectory.x");
    if (cy.empty()) throw ScenarioError("trajectory.y needs a coefficient", "trajectory.y");
    return PolynomialTrajectory(std::move(cx), std::move(cy));
  }
  throw ScenarioError("unknown trajectory.kind '" + kind + "'", "trajectory.kind");
}

inline int parse_direction(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "forward") return 1;
    if (s == "backward") return -1;
  } else if (j.is_number_integer()) {
    const auto d = j.get<long long>();
    if (d == 1 || d == -1) return static_cast<int>(d);
  }
  throw ScenarioError("direction must be 1, -1, \"forward\" or \"backward\"", "direction");
}

inline Gains parse_gains(const json& j, int n) {
  const std::string path = "gains";
  require_object(j, path);
  allow_keys(j, path, {"gamma", "deltas"});
  Gains g = Gains::defaults(n, number_or(j, path, "gamma", 1.0));
  if (j.contains("deltas")) {
    const auto d = numbers(j.at("deltas"), "gains.deltas");
    g.deltas = ShapeVec<double>(d);
  }
  try {
    g.validate(n);
  } catch (const DomainError& e) {
    throw ScenarioError(std::string("gains: ") + e.what(), "gains");
  }
  return g;
}

inline Configuration parse_initial(const json& j, int n) {
  const std::string path = "initial_state";
  require_object(j, path);
  allow_keys(j, path, {"x", "y"});
  Configuration q;
  q.x = vec2(required(j, path, "x"), "initial_state.x");
  const auto y = numbers(required(j, path, "y"), "initial_state.y");
  if (static_cast<int>(y.size()) != n) {
    throw ScenarioError("initial_state.y must have " + std::to_string(n) + " entries",
                        "initial_state.y");
  }
  q.y = ShapeVec<double>(y);
  return q;
}

inline OutputSpec parse_outputs(const json& j) {
  const std::string path = "outputs";
  require_object(j, path);
  allow_keys(j, path, {"csv", "svg", "decimation", "poses"});
  OutputSpec o;
  if (j.contains("csv")) o.csv = text(j.at("csv"), "outputs.csv");
  if (j.contains("svg")) o.svg = text(j.at("svg"), "outputs.svg");
  if (j.contains("decimation")) o.decimation = positive_int(j.at("decimation"), "outputs.decimation");
  if (j.contains("poses")) o.poses = positive_int(j.at("poses"), "outputs.poses");
  return o;
}

inline std::pair<int, int> line_column(std::string_view text, std::size_t byte) {
  int line = 1, column = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

}  // namespace detail

// Default initial state: the reference configuration at t = 0 on the
// component with every joint in front of its axle.
inline Configuration reference_start(const Scenario& sc) {
  ComponentIndex mu;
  for (int i = 1; i < sc.model.n(); ++i) mu.mu.push_back(0);
  ManeuveringOperator op(sc.model, mu, sc.trajectory, sc.direction, sc.branch, sc.step);
  return op.at(0.0).qD;
}

inline ScenarioFile parse_scenario(std::string_view text, std::string name = "scenario") {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    const auto [line, column] = detail::line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ScenarioError("malformed JSON at line " + std::to_string(line) + ", column " +
                            std::to_string(column) + ": " + e.what(),
                        "");
  }
  detail::require_object(doc, "scenario");
  detail::allow_keys(doc, "", {"model", "trajectory", "direction", "gains", "initial_state",
                               "horizon", "step", "outputs"});
  ScenarioFile f;
  f.name = std::move(name);
  Scenario& sc = f.scenario;
  sc.model = detail::parse_model(detail::required(doc, "", "model"));
  const int n = sc.model.n();
  sc.trajectory = detail::parse_trajectory(detail::required(doc, "", "trajectory"));
  sc.direction = doc.contains("direction") ? detail::parse_direction(doc.at("direction")) : 1;
  sc.gains = doc.contains("gains") ? detail::parse_gains(doc.at("gains"), n) : Gains::defaults(n);
  sc.horizon = detail::number_or(doc, "", "horizon", 30.0);
  sc.step = detail::number_or(doc, "", "step", 1e-3);
  if (!(sc.horizon > 0.0)) throw ScenarioError("horizon must be positive", "horizon");
  if (!(sc.step > 0.0)) throw ScenarioError("step must be positive", "step");
  if (doc.contains("outputs")) f.outputs = detail::parse_outputs(doc.at("outputs"));
  sc.decimation = f.outputs.decimation;
  if (doc.contains("initial_state")) {
    sc.initial = detail::parse_initial(doc.at("initial_state"), n);
    f.initial_from_reference = false;
  } else {
    sc.initial.x = {0.0, 0.0};
    sc.initial.y = ShapeVec<double>(n, 0.0);
  }
  return f;
}

inline ScenarioFile load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError("cannot read scenario file " + path.string(), "");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path.stem().string());
}

// ---------------------------------------------------------------------------
// Formatting

// Round-trip representation of a double.
inline std::string fmt_exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Fixed two-decimal representation; negative zero prints as 0.00.
inline std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

namespace detail {

inline std::string inverse_length_unit(int power) {
  if (power == 0) return "1";
  return power == 1 ? "1/m" : "1/m^" + std::to_string(power);
}

// Columns of the chained state s_1..s_n and input v_1, v_2.
inline void chain_headers(std::vector<std::string>& h, int n, const std::string& prefix) {
  h.push_back(prefix + "s1 [rad]");
  for (int i = 2; i <= n; ++i) h.push_back(prefix + "s" + std::to_string(i) + " [" + inverse_length_unit(i - 1) + "]");
  h.push_back(prefix + "v1 [m/s]");
  h.push_back(prefix + "v2 [" + (n == 1 ? std::string("rad") : inverse_length_unit(n - 1)) + "/s]");
}

inline void config_headers(std::vector<std::string>& h, int n, const std::string& suffix) {
  h.push_back("x1" + suffix + " [m]");
  h.push_back("x2" + suffix + " [m]");
  for (int i = 1; i <= n; ++i) h.push_back("y" + std::to_string(i) + suffix + " [rad]");
  h.push_back("u1" + suffix + " [m/s]");
  h.push_back("u2" + suffix + " [rad/s]");
}

inline void write_row(std::ostream& os, const std::vector<double>& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i > 0) os << ',';
    os << fmt_exact(row[i]);
  }
  os << '\n';
}

inline void write_header(std::ostream& os, const std::vector<std::string>& h) {
  for (std::size_t i = 0; i < h.size(); ++i) os << (i > 0 ? "," : "") << h[i];
  os << '\n';
}

inline void push_config(std::vector<double>& row, const Configuration& q, const Vec2& u) {
  row.push_back(q.x[0]);
  row.push_back(q.x[1]);
  for (double y : q.y) row.push_back(y);
  row.push_back(u[0]);
  row.push_back(u[1]);
}

}  // namespace detail

// Reference table (t, qD, uD, sD, vD) on the decimation grid.
inline void write_plan_csv(std::ostream& os, const Scenario& sc, const ComponentIndex& mu) {
  const int n = sc.model.n();
  std::vector<std::string> h{"t [s]"};
  detail::config_headers(h, n, "D");
  detail::chain_headers(h, n, "D_");
  detail::write_header(os, h);
  ManeuveringOperator op(sc.model, mu, sc.trajectory, sc.direction, sc.branch, sc.step);
  const long steps = std::max(1L, static_cast<long>(std::ceil(sc.horizon / sc.step - 1e-9)));
  for (long k = 0;; k += sc.decimation) {
    k = std::min(k, steps);
    const double t = k == steps ? sc.horizon : static_cast<double>(k) * sc.step;
    const auto r = op.at(t);
    std::vector<double> row{t};
    detail::push_config(row, r.qD, r.uD);
    for (double s : r.sD) row.push_back(s);
    row.push_back(r.vD[0]);
    row.push_back(r.vD[1]);
    detail::write_row(os, row);
    if (k == steps) break;
  }
}

inline void write_trace_csv(std::ostream& os, const Trace& trace, int n) {
  std::vector<std::string> h{"t [s]", "tau [m]"};
  detail::config_headers(h, n, "");
  detail::config_headers(h, n, "D");
  for (const char* c : {"x_error [m]", "shape_distance [rad]", "lyapunov [1]", "residual [m/s]"}) {
    h.push_back(c);
  }
  detail::write_header(os, h);
  for (const auto& s : trace.samples) {
    std::vector<double> row{s.t, s.tau};
    detail::push_config(row, s.q, s.u);
    detail::push_config(row, s.qD, s.uD);
    row.push_back(s.x_error);
    row.push_back(s.shape_distance);
    row.push_back(s.lyapunov);
    row.push_back(s.residual);
    detail::write_row(os, row);
  }
}

// ---------------------------------------------------------------------------
// Pose plot

struct SvgStyle {
  std::string name;
  std::string background;
  std::string desired;
  std::string actual;
  std::string vehicle;
  std::string lead;
  std::string text;
};

inline SvgStyle svg_style(std::string_view name) {
  if (name == "mono") return {"mono", "#ffffff", "#000000", "#808080", "#000000", "#000000", "#000000"};
  if (name == "color") return {"color", "#ffffff", "#1f77b4", "#7f7f7f", "#d62728", "#2ca02c", "#222222"};
  throw DomainError("unknown SVG style '" + std::string(name) + "' (expected mono or color)");
}

struct PlotOptions {
  int poses = 9;
  double max_width = 800.0;   // px
  double max_height = 800.0;  // px
};

namespace detail {

struct Bounds {
  double x0 = std::numeric_limits<double>::infinity();
  double y0 = std::numeric_limits<double>::infinity();
  double x1 = -std::numeric_limits<double>::infinity();
  double y1 = -std::numeric_limits<double>::infinity();
  void add(const Vec2& p, double pad = 0.0) {
    x0 = std::min(x0, p[0] - pad);
    y0 = std::min(y0, p[1] - pad);
    x1 = std::max(x1, p[0] + pad);
    y1 = std::max(y1, p[1] + pad);
  }
};

inline std::vector<std::size_t> pose_indices(std::size_t count, int poses) {
  std::vector<std::size_t> idx;
  if (count == 0) return idx;
  if (poses <= 1 || count == 1) return {0};
  const int p = static_cast<int>(std::min<std::size_t>(poses, count));
  for (int i = 0; i < p; ++i) {
    const auto k = static_cast<std::size_t>(
        std::llround(static_cast<double>(i) * static_cast<double>(count - 1) / (p - 1)));
    if (idx.empty() || idx.back() != k) idx.push_back(k);
  }
  return idx;
}

inline double scale_bar_length(double width_m) {
  double best = 0.1;
  for (double c : {0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0}) {
    if (c <= width_m / 4) best = c;
  }
  return best;
}

}  // namespace detail

// Pose-sequence plot of a trace: desired curve dotted, actual path solid,
// the axle chain drawn at evenly spaced samples. Deterministic for a given
// trace, model and style.
inline std::string render_pose_svg(const WheeledModel& model, const Trace& trace,
                                   const SvgStyle& style, const PlotOptions& opt = {}) {
  if (trace.empty()) throw DomainError("cannot plot an empty trace");
  const auto l = model.lengths();
  const double unit = l.empty() ? 1.0 : *std::min_element(l.begin(), l.end());
  const double half_axle = 0.3 * unit;
  const auto poses = detail::pose_indices(trace.size(), opt.poses);
  std::vector<AxleChain> chains;
  for (auto k : poses) chains.push_back(axle_chain(model, trace.samples[k].q));

  detail::Bounds b;
  for (const auto& s : trace.samples) {
    b.add(s.q.x);
    b.add(s.qD.x);
  }
  for (const auto& c : chains) {
    for (const auto& p : c.chi) b.add(p, half_axle);
  }
  const double w_m = std::max(b.x1 - b.x0, 1e-6), h_m = std::max(b.y1 - b.y0, 1e-6);
  const double margin = 20.0, legend_band = 64.0, bar_band = 40.0;
  const double scale = std::min((opt.max_width - 2 * margin) / w_m, (opt.max_height - 2 * margin) / h_m);
  const double width = w_m * scale + 2 * margin;
  const double height = h_m * scale + 2 * margin + legend_band + bar_band;
  const auto px = [&](const Vec2& p) {
    return fmt2((p[0] - b.x0) * scale + margin) + "," +
           fmt2((b.y1 - p[1]) * scale + margin + legend_band);
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt2(width) << "\" height=\""
     << fmt2(height) << "\" viewBox=\"0 0 " << fmt2(width) << " " << fmt2(height) << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << fmt2(width) << "\" height=\"" << fmt2(height)
     << "\" fill=\"" << style.background << "\"/>\n";

  os << "<polyline id=\"desired\" fill=\"none\" stroke=\"" << style.desired
     << "\" stroke-width=\"2\" stroke-linecap=\"round\" stroke-dasharray=\"0.1 6\" points=\"";
  for (std::size_t k = 0; k < trace.size(); ++k) os << (k ? " " : "") << px(trace.samples[k].qD.x);
  os << "\"/>\n";
  os << "<polyline id=\"actual\" fill=\"none\" stroke=\"" << style.actual
     << "\" stroke-width=\"1\" points=\"";
  for (std::size_t k = 0; k < trace.size(); ++k) os << (k ? " " : "") << px(trace.samples[k].q.x);
  os << "\"/>\n";

  os << "<g id=\"poses\" stroke-linecap=\"round\">\n";
  for (std::size_t p = 0; p < chains.size(); ++p) {
    const auto& c = chains[p];
    os << "<g data-t=\"" << fmt2(trace.samples[poses[p]].t) << "\">\n";
    if (c.chi.size() > 1) {
      os << "<polyline fill=\"none\" stroke=\"" << style.vehicle << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < c.chi.size(); ++i) os << (i ? " " : "") << px(c.chi[i]);
      os << "\"/>\n";
    }
    for (std::size_t i = 0; i < c.chi.size(); ++i) {
      const bool lead = i + 1 == c.chi.size();
      const auto& m = c.chi[i];
      const Vec2 a{m[0] - half_axle * c.nu[i][0], m[1] - half_axle * c.nu[i][1]};
      const Vec2 e{m[0] + half_axle * c.nu[i][0], m[1] + half_axle * c.nu[i][1]};
      const auto& color = lead ? style.lead : style.vehicle;
      os << "<line x1=\"" << fmt2((a[0] - b.x0) * scale + margin) << "\" y1=\""
         << fmt2((b.y1 - a[1]) * scale + margin + legend_band) << "\" x2=\""
         << fmt2((e[0] - b.x0) * scale + margin) << "\" y2=\""
         << fmt2((b.y1 - e[1]) * scale + margin + legend_band) << "\" stroke=\"" << color
         << "\" stroke-width=\"3\"/>\n";
      if (lead) {
        const Vec2 tip{m[0] + half_axle * c.tau[i][0], m[1] + half_axle * c.tau[i][1]};
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\""
           << px(m) << " " << px(tip) << "\"/>\n";
      }
    }
    os << "</g>\n";
  }
  os << "</g>\n";

  // Legend.
  os << "<g id=\"legend\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << style.text << "\">\n";
  const double lx = margin, ly = 18.0;
  os << "<line x1=\"" << fmt2(lx) << "\" y1=\"" << fmt2(ly) << "\" x2=\"" << fmt2(lx + 30) << "\" y2=\""
     << fmt2(ly) << "\" stroke=\"" << style.desired
     << "\" stroke-width=\"2\" stroke-linecap=\"round\" stroke-dasharray=\"0.1 6\"/>\n";
  os << "<text x=\"" << fmt2(lx + 38) << "\" y=\"" << fmt2(ly + 4) << "\">desired curve</text>\n";
  os << "<line x1=\"" << fmt2(lx) << "\" y1=\"" << fmt2(ly + 18) << "\" x2=\"" << fmt2(lx + 30)
     << "\" y2=\"" << fmt2(ly + 18) << "\" stroke=\"" << style.actual << "\" stroke-width=\"1\"/>\n";
  os << "<text x=\"" << fmt2(lx + 38) << "\" y=\"" << fmt2(ly + 22) << "\">actual path of x</text>\n";
  os << "<line x1=\"" << fmt2(lx) << "\" y1=\"" << fmt2(ly + 36) << "\" x2=\"" << fmt2(lx + 30)
     << "\" y2=\"" << fmt2(ly + 36) << "\" stroke=\"" << style.vehicle << "\" stroke-width=\"3\"/>\n";
  os << "<text x=\"" << fmt2(lx + 38) << "\" y=\"" << fmt2(ly + 40) << "\">" << model.name() << " at "
     << chains.size() << " instants (t = " << fmt2(trace.samples[poses.front()].t) << " to "
     << fmt2(trace.samples[poses.back()].t) << " s)</text>\n";
  os << "</g>\n";

  // Scale bar.
  const double bar_m = detail::scale_bar_length(w_m);
  const double by = height - bar_band / 2;
  os << "<g id=\"scale\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << style.text << "\">\n";
  os << "<line x1=\"" << fmt2(margin) << "\" y1=\"" << fmt2(by) << "\" x2=\"" << fmt2(margin + bar_m * scale)
     << "\" y2=\"" << fmt2(by) << "\" stroke=\"" << style.text << "\" stroke-width=\"2\"/>\n";
  os << "<text x=\"" << fmt2(margin + bar_m * scale + 8) << "\" y=\"" << fmt2(by + 4) << "\">"
     << fmt2(bar_m) << " m</text>\n";
  os << "</g>\n";
  os << "</svg>\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Commands

struct CheckReport {
  AdmissibilityReport admissibility;
  ManeuverabilityReport maneuverability;
  bool pass() const {
    return admissibility.admissible && admissibility.strongly_admissible && maneuverability.pass;
  }
};

inline CheckReport run_check(const Scenario& sc) {
  return {admissibility_report(sc.trajectory, sc.model.n(), sc.horizon),
          check_maneuverability(sc.model, kManeuverabilitySamples)};
}

inline void print_check(std::ostream& out, const ScenarioFile& f, const CheckReport& r) {
  const auto verdict = [](bool ok) { return ok ? "pass" : "FAIL"; };
  out << "scenario: " << f.name << "\n";
  out << "model: " << f.scenario.model.name() << " (n = " << f.scenario.model.n() << ")\n";
  out << "trajectory: " << f.scenario.trajectory.kind_name() << ", horizon "
      << f.scenario.horizon << " s\n";
  out << "admissible: " << verdict(r.admissibility.admissible) << " ("
      << r.admissibility.summary() << ")\n";
  out << "strongly admissible: " << verdict(r.admissibility.strongly_admissible) << "\n";
  out << "maneuverable: " << verdict(r.maneuverability.pass) << " ("
      << r.maneuverability.summary() << ")\n";
  out << "verdict: " << verdict(r.pass()) << "\n";
}

inline std::filesystem::path resolve_out_dir(const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv(kOutDirEnv); env != nullptr && *env != '\0') return env;
  return std::filesystem::current_path();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << content;
  if (!f) throw Error("failed writing " + path.string());
}

struct Overrides {
  std::optional<double> step;
  std::optional<double> horizon;
};

inline void apply(ScenarioFile& f, const Overrides& o) {
  if (o.step) {
    if (!(*o.step > 0.0)) throw ScenarioError("--step must be positive", "step");
    f.scenario.step = *o.step;
  }
  if (o.horizon) {
    if (!(*o.horizon > 0.0)) throw ScenarioError("--horizon must be positive", "horizon");
    f.scenario.horizon = *o.horizon;
  }
}

inline void fill_initial(ScenarioFile& f) {
  if (f.initial_from_reference) f.scenario.initial = reference_start(f.scenario);
}

inline json configuration_json(const Configuration& q) {
  return {{"x", {q.x[0], q.x[1]}}, {"y", std::vector<double>(q.y.begin(), q.y.end())}};
}

inline json diagnostics_json(const ScenarioFile& f, const SimulationResult& res,
                             const std::optional<DiagnosticsReport>& d) {
  json j;
  j["scenario"] = f.name;
  j["model"] = std::string(f.scenario.model.name());
  j["component"] = res.trace.component.label();
  j["direction"] = f.scenario.direction;
  j["gamma"] = f.scenario.gains.gamma;
  j["horizon"] = f.scenario.horizon;
  j["step"] = f.scenario.step;
  j["steps"] = res.steps;
  j["wall_seconds"] = res.wall_seconds;
  j["samples"] = res.trace.size();
  if (res.fault) {
    j["fault"] = {{"kind", res.fault->kind},
                  {"message", res.fault->message},
                  {"t", res.fault->t},
                  {"last_state", configuration_json(res.fault->last_state)}};
  } else {
    j["fault"] = nullptr;
  }
  if (d) {
    j["decay_ok"] = d->decay_ok;
    j["first_decay_violation"] =
        d->first_decay_violation ? json(*d->first_decay_violation) : json(nullptr);
    j["worst_decay_ratio"] = d->worst_decay_ratio;
    j["terminal_x_error"] = d->terminal_x_error;
    j["terminal_shape_distance"] = d->terminal_shape_distance;
    j["terminal_input_error"] = d->terminal_input_error;
    j["converged"] = d->converged;
    j["max_residual"] = d->max_residual;
    j["residual_ok"] = d->residual_ok;
    j["max_input_norm"] = d->max_input_norm;
    j["max_reference_input_norm"] = d->max_reference_input_norm;
    j["input_bounded"] = d->input_bounded;
    j["sign_invariant"] = d->sign_invariant;
    j["time_to_one_percent"] = d->time_to_one_percent ? json(*d->time_to_one_percent) : json(nullptr);
  }
  j["verdict"] = res.ok() && d && d->pass() ? "pass" : "fail";
  return j;
}

// Simulates one parsed scenario into dir and reports to out. Returns the
// exit code.
inline int simulate_into(ScenarioFile f, const Overrides& o, const std::filesystem::path& dir,
                         const SvgStyle& style, std::ostream& out) {
  apply(f, o);
  const auto check = run_check(f.scenario);
  if (!check.pass()) {
    print_check(out, f, check);
    out << f.name << ": check failed, not simulating\n";
    return kExitFail;
  }
  try {
    fill_initial(f);
  } catch (const ReferenceError& e) {
    out << f.name << ": reference fault at t = 0: " << e.what() << "\n";
    return kExitFail;
  }
  const auto res = integrate_closed_loop(f.scenario);
  std::optional<DiagnosticsReport> d;
  if (!res.trace.empty()) d = diagnostics(res.trace, f.scenario.gains.gamma);

  std::ostringstream csv;
  write_trace_csv(csv, res.trace, f.scenario.model.n());
  write_file(dir / f.outputs.csv, csv.str());
  if (!res.trace.empty() && f.scenario.model.is_truck_family()) {
    PlotOptions po;
    po.poses = f.outputs.poses;
    write_file(dir / f.outputs.svg, render_pose_svg(f.scenario.model, res.trace, style, po));
  }
  const auto diag = diagnostics_json(f, res, d);
  write_file(dir / "diagnostics.json", diag.dump(2) + "\n");

  out << f.name << ": " << diag["verdict"].get<std::string>() << " (" << res.steps << " steps, "
      << fmt2(res.wall_seconds) << " s)";
  if (res.fault) out << ", fault " << res.fault->kind << " at t = " << res.fault->t << ": " << res.fault->message;
  if (d) out << "\n  " << d->summary();
  out << "\n  outputs in " << dir.string() << "\n";
  return res.ok() && d && d->pass() ? kExitOk : kExitFail;
}

inline int cmd_check(const std::string& path, std::ostream& out) {
  const auto f = load_scenario(path);
  const auto r = run_check(f.scenario);
  print_check(out, f, r);
  return r.pass() ? kExitOk : kExitFail;
}

inline int cmd_plan(const std::string& path, const std::optional<std::string>& out_flag,
                    const Overrides& o, std::ostream& out) {
  auto f = load_scenario(path);
  apply(f, o);
  const auto check = run_check(f.scenario);
  if (!check.pass()) {
    print_check(out, f, check);
    return kExitFail;
  }
  fill_initial(f);
  std::filesystem::path target = resolve_out_dir(out_flag);
  if (target.extension() != ".csv") target /= f.name + "_plan.csv";
  std::ostringstream csv;
  write_plan_csv(csv, f.scenario, component_of(f.scenario.model, f.scenario.initial.y));
  write_file(target, csv.str());
  out << "wrote " << target.string() << "\n";
  return kExitOk;
}

inline int cmd_simulate(const std::string& path, const std::optional<std::string>& out_flag,
                        const Overrides& o, const std::string& style, std::ostream& out) {
  auto f = load_scenario(path);
  return simulate_into(std::move(f), o, resolve_out_dir(out_flag), svg_style(style), out);
}

// Runs every scenario on its own worker; each writes into <out>/<name>/.
// Exit 2 if any file fails to parse, else 1 if any run fails.
inline int cmd_batch(const std::vector<std::string>& paths, const std::optional<std::string>& out_flag,
                     const Overrides& o, const std::string& style_name, std::ostream& out,
                     std::ostream& err, unsigned workers = 0) {
  const auto style = svg_style(style_name);
  const auto root = resolve_out_dir(out_flag);
  struct Job {
    std::string report;
    std::string error;
    int code = kExitOk;
  };
  std::vector<Job> jobs(paths.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < paths.size(); i = next++) {
      std::ostringstream os;
      try {
        auto f = load_scenario(paths[i]);
        const auto dir = root / f.name;
        jobs[i].code = simulate_into(std::move(f), o, dir, style, os);
      } catch (const ScenarioError& e) {
        jobs[i].code = kExitUsage;
        jobs[i].error = paths[i] + ": " + e.what();
      } catch (const std::exception& e) {
        jobs[i].code = kExitFail;
        jobs[i].error = paths[i] + ": " + e.what();
      }
      jobs[i].report = os.str();
    }
  };
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(paths.size(), 1)));
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  int code = kExitOk;
  for (const auto& j : jobs) {
    out << j.report;
    if (!j.error.empty()) err << "error: " << j.error << "\n";
    if (j.code == kExitUsage) code = kExitUsage;
    else if (j.code != kExitOk && code == kExitOk) code = kExitFail;
  }
  return code;
}

// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trajectory tracking for wheeled vehicles with trailers"};
  app.name("nhtrack");
  app.require_subcommand(1);

  std::string scenario;
  std::vector<std::string> batch_paths;
  std::optional<std::string> out_dir;
  std::optional<double> step, horizon;
  std::string style = "mono";

  auto add_common = [&](CLI::App* c) {
    c->add_option("--out", out_dir, "Output directory (plan: directory or .csv file)");
    c->add_option("--step", step, "Integration step override [s]");
    c->add_option("--horizon", horizon, "Horizon override [s]");
  };
  auto* check = app.add_subcommand("check", "Admissibility and maneuverability verdicts");
  check->add_option("--scenario,scenario", scenario, "Scenario JSON file")->required();
  auto* plan = app.add_subcommand("plan", "Write the reference (t, qD, uD, sD, vD) as CSV");
  plan->add_option("--scenario,scenario", scenario, "Scenario JSON file")->required();
  add_common(plan);
  auto* sim = app.add_subcommand("simulate", "Closed-loop run with CSV, SVG and diagnostics");
  sim->add_option("--scenario,scenario", scenario, "Scenario JSON file")->required();
  add_common(sim);
  sim->add_option("--seed-style", style, "SVG style preset")->check(CLI::IsMember({"mono", "color"}));
  auto* batch = app.add_subcommand("batch", "Simulate several scenarios concurrently");
  batch->add_option("--scenario,scenarios", batch_paths, "Scenario JSON files")->required();
  add_common(batch);
  batch->add_option("--seed-style", style, "SVG style preset")->check(CLI::IsMember({"mono", "color"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const Overrides o{step, horizon};
  try {
    if (check->parsed()) return cmd_check(scenario, out);
    if (plan->parsed()) return cmd_plan(scenario, out_dir, o, out);
    if (sim->parsed()) return cmd_simulate(scenario, out_dir, o, style, out);
    return cmd_batch(batch_paths, out_dir, o, style, out, err);
  } catch (const ScenarioError& e) {
    err << "error: " << e.what();
    if (!e.key().empty()) err << " [key: " << e.key() << "]";
    err << "\n";
    return kExitUsage;
  } catch (const ReferenceError& e) {
    err << "reference fault: " << e.what() << "\n";
    return kExitFail;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFail;
  }
}

}  // namespace nhtrack::cli
