// Copyright 2026 The dvi-density Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Scenario configs: JSON parsing, builtin registry, runners and artifact
// writers shared by the command-line tool and the tests.

#ifndef DVI_SCENARIO_HPP
#define DVI_SCENARIO_HPP

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dvi/dynamics.hpp"
#include "dvi/equilibrium.hpp"
#include "dvi/error.hpp"
#include "dvi/function_space.hpp"
#include "dvi/models.hpp"
#include "dvi/operators.hpp"
#include "dvi/stability.hpp"
#include "dvi/vi_assembly.hpp"

namespace dvi::scenario {

using json = nlohmann::json;
using RealFn = std::function<double(double)>;

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// JSON access with config-error diagnostics.

namespace detail {

[[noreturn]] inline void config_fail(const std::string& where, const std::string& what) {
  dvi::detail::fail(ErrorKind::config, where + ": " + what);
}

inline const json& require_object(const json& j, const std::string& where) {
  if (!j.is_object()) config_fail(where, "expected an object");
  return j;
}

inline void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  require_object(j, where);
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (allowed.count(key) == 0) config_fail(where, "unknown key '" + key + "'");
  }
}

inline double as_number(const json& j, const std::string& where) {
  if (!j.is_number()) config_fail(where, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) config_fail(where, "expected a finite number");
  return v;
}

inline double number_or(const json& j, const char* key, double fallback, const std::string& where) {
  return j.contains(key) ? as_number(j.at(key), where + "." + key) : fallback;
}

inline std::size_t count_or(const json& j, const char* key, std::size_t fallback, std::size_t min,
                            const std::string& where) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min)) {
    config_fail(where + "." + key, "expected an integer >= " + std::to_string(min));
  }
  return static_cast<std::size_t>(v.get<long long>());
}

inline std::string string_or(const json& j, const char* key, const std::string& fallback,
                             const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_string()) config_fail(where + "." + key, "expected a string");
  return j.at(key).get<std::string>();
}

inline bool bool_or(const json& j, const char* key, bool fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_boolean()) config_fail(where + "." + key, "expected true or false");
  return j.at(key).get<bool>();
}

inline std::string type_of(const json& j, const std::string& where) {
  if (j.is_string()) return j.get<std::string>();
  require_object(j, where);
  if (!j.contains("type") || !j.at("type").is_string()) config_fail(where, "missing string 'type'");
  return j.at("type").get<std::string>();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Closed-form functions of x.
//
//   3.5                                   constant
//   "zero" | "one" | "x" | "bump"
//   {"type": "constant", "value": c}
//   {"type": "polynomial", "coefficients": [c0, c1, ...]}
//   {"type": "cosine" | "sine", "amplitude", "frequency", "phase", "offset"}
//       offset + amplitude * cos(frequency * pi * x + phase)
//   {"type": "exponential", "amplitude", "rate"}   amplitude * exp(rate * x)
//   {"type": "bump", "scale"}   scale * (1 - cos(2 pi (x - a)/(b - a)))/2
//   {"type": "table", "x": [...], "values": [...]}   piecewise linear
//   {"type": "sum" | "product", "terms": [...]}
//   {"type": "positive_part", "of": f}

inline RealFn parse_fn(const json& j, const std::string& where, double a, double b) {
  using namespace detail;
  if (j.is_number()) {
    const double c = as_number(j, where);
    return [c](double) { return c; };
  }
  const std::string type = type_of(j, where);
  if (j.is_string()) {
    if (type == "zero") return [](double) { return 0.0; };
    if (type == "one") return [](double) { return 1.0; };
    if (type == "x") return [](double x) { return x; };
    if (type == "bump") return parse_fn(json{{"type", "bump"}}, where, a, b);
    config_fail(where, "unknown function identifier '" + type + "'");
  }
  if (type == "constant") {
    check_keys(j, where, {"type", "value"});
    const double c = number_or(j, "value", 0.0, where);
    return [c](double) { return c; };
  }
  if (type == "polynomial") {
    check_keys(j, where, {"type", "coefficients"});
    if (!j.contains("coefficients") || !j.at("coefficients").is_array()) {
      config_fail(where, "polynomial needs a 'coefficients' array");
    }
    std::vector<double> c;
    for (const auto& v : j.at("coefficients")) c.push_back(as_number(v, where + ".coefficients"));
    return [c](double x) {
      double acc = 0.0;
      for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * x + *it;
      return acc;
    };
  }
  if (type == "cosine" || type == "sine") {
    check_keys(j, where, {"type", "amplitude", "frequency", "phase", "offset"});
    const double amp = number_or(j, "amplitude", 1.0, where);
    const double freq = number_or(j, "frequency", 1.0, where);
    const double phase = number_or(j, "phase", 0.0, where);
    const double offset = number_or(j, "offset", 0.0, where);
    if (type == "cosine") return [=](double x) { return offset + amp * std::cos(freq * M_PI * x + phase); };
    return [=](double x) { return offset + amp * std::sin(freq * M_PI * x + phase); };
  }
  if (type == "exponential") {
    check_keys(j, where, {"type", "amplitude", "rate"});
    const double amp = number_or(j, "amplitude", 1.0, where);
    const double rate = number_or(j, "rate", 1.0, where);
    return [=](double x) { return amp * std::exp(rate * x); };
  }
  if (type == "bump") {
    check_keys(j, where, {"type", "scale"});
    const double scale = number_or(j, "scale", 1.0, where);
    return [=](double x) { return scale * 0.5 * (1.0 - std::cos(2.0 * M_PI * (x - a) / (b - a))); };
  }
  if (type == "table") {
    check_keys(j, where, {"type", "x", "values"});
    if (!j.contains("x") || !j.contains("values") || !j.at("x").is_array() || !j.at("values").is_array() ||
        j.at("x").size() != j.at("values").size() || j.at("x").size() < 2) {
      config_fail(where, "table needs equal-length 'x' and 'values' arrays with at least two entries");
    }
    std::vector<double> xs, vs;
    for (std::size_t k = 0; k < j.at("x").size(); ++k) {
      xs.push_back(as_number(j.at("x")[k], where + ".x"));
      vs.push_back(as_number(j.at("values")[k], where + ".values"));
      if (k > 0 && !(xs[k] > xs[k - 1])) config_fail(where, "table x must increase strictly");
    }
    return [xs, vs](double x) {
      if (x <= xs.front()) return vs.front();
      if (x >= xs.back()) return vs.back();
      const auto k = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin()) - 1;
      const double th = (x - xs[k]) / (xs[k + 1] - xs[k]);
      return (1.0 - th) * vs[k] + th * vs[k + 1];
    };
  }
  if (type == "sum" || type == "product") {
    check_keys(j, where, {"type", "terms"});
    if (!j.contains("terms") || !j.at("terms").is_array() || j.at("terms").empty()) {
      config_fail(where, type + " needs a non-empty 'terms' array");
    }
    std::vector<RealFn> terms;
    for (std::size_t k = 0; k < j.at("terms").size(); ++k) {
      terms.push_back(parse_fn(j.at("terms")[k], where + ".terms[" + std::to_string(k) + "]", a, b));
    }
    if (type == "sum") {
      return [terms](double x) {
        double acc = 0.0;
        for (const auto& t : terms) acc += t(x);
        return acc;
      };
    }
    return [terms](double x) {
      double acc = 1.0;
      for (const auto& t : terms) acc *= t(x);
      return acc;
    };
  }
  if (type == "positive_part") {
    check_keys(j, where, {"type", "of"});
    if (!j.contains("of")) config_fail(where, "positive_part needs 'of'");
    const RealFn f = parse_fn(j.at("of"), where + ".of", a, b);
    return [f](double x) { return std::max(f(x), 0.0); };
  }
  config_fail(where, "unknown function type '" + type + "'");
}

inline GridFn parse_gridfn(const json& j, const std::string& where, const Grid& g) {
  return sample(parse_fn(j, where, g.a(), g.b()), g);
}

// ---------------------------------------------------------------------------
// Closed-form operators on H. Every object form accepts "scale" (default 1).
//
//   "zero" | "identity" | "w2_cosine_kernel" | "multiplication_by_x"
//   | "rankone_aggregate" | "weighted_aggregate"
//   {"type": "scaled_identity", "value": c}
//   {"type": "w2_cosine_kernel"}          kernel 2 cos(pi (x - y))
//   {"type": "multiplication_by_x"}       (W g)(x) = x g(x)
//   {"type": "rankone_aggregate"}         (F g)(x) = int y g(y) dy
//   {"type": "weighted_aggregate"}        x int y g(y) dy
//   {"type": "multiplication", "m": f}
//   {"type": "rank_one", "phi": f, "psi": f}
//   {"type": "kernel", "kernel": "cosine_difference" | "gaussian" | "min" | "product" | "constant",
//    "frequency", "length"}
//   {"type": "sum", "terms": [...]}

inline LinOp parse_op(const json& j, const std::string& where, const Grid& g) {
  using namespace detail;
  if (j.is_number()) return LinOp::scaled_identity(g, as_number(j, where));
  const std::string type = type_of(j, where);
  if (j.is_string()) {
    static const std::set<std::string> bare{"zero",          "identity",          "w2_cosine_kernel",
                                            "multiplication_by_x", "rankone_aggregate", "weighted_aggregate"};
    if (bare.count(type) == 0) config_fail(where, "unknown operator identifier '" + type + "'");
    return parse_op(json{{"type", type}}, where, g);
  }
  const double scale = number_or(j, "scale", 1.0, where);
  if (type == "zero") {
    check_keys(j, where, {"type", "scale"});
    return LinOp::zero(g);
  }
  if (type == "identity") {
    check_keys(j, where, {"type", "scale"});
    return LinOp::scaled_identity(g, scale);
  }
  if (type == "scaled_identity") {
    check_keys(j, where, {"type", "value", "scale"});
    return LinOp::scaled_identity(g, scale * number_or(j, "value", 1.0, where));
  }
  if (type == "w2_cosine_kernel") {
    check_keys(j, where, {"type", "scale"});
    return cosine_graphon(g, scale);
  }
  if (type == "multiplication_by_x") {
    check_keys(j, where, {"type", "scale"});
    return multiplication_by_x(g, scale);
  }
  if (type == "rankone_aggregate") {
    check_keys(j, where, {"type", "scale"});
    return aggregate_production(g, scale);
  }
  if (type == "weighted_aggregate") {
    check_keys(j, where, {"type", "scale"});
    return weighted_aggregate(g, scale);
  }
  if (type == "multiplication") {
    check_keys(j, where, {"type", "m", "scale"});
    if (!j.contains("m")) config_fail(where, "multiplication needs 'm'");
    return LinOp::multiplication(scale * parse_gridfn(j.at("m"), where + ".m", g));
  }
  if (type == "rank_one") {
    check_keys(j, where, {"type", "phi", "psi", "scale"});
    if (!j.contains("phi") || !j.contains("psi")) config_fail(where, "rank_one needs 'phi' and 'psi'");
    return LinOp::rank_one(scale * parse_gridfn(j.at("phi"), where + ".phi", g),
                           parse_gridfn(j.at("psi"), where + ".psi", g));
  }
  if (type == "kernel") {
    check_keys(j, where, {"type", "kernel", "frequency", "length", "scale"});
    const std::string k = string_or(j, "kernel", "", where);
    const double freq = number_or(j, "frequency", 1.0, where);
    const double len = number_or(j, "length", 1.0, where);
    if (k == "cosine_difference") {
      return LinOp::kernel_from(g, [=](double x, double y) { return scale * std::cos(freq * M_PI * (x - y)); });
    }
    if (k == "gaussian") {
      if (!(len > 0.0)) config_fail(where, "gaussian kernel needs length > 0");
      return LinOp::kernel_from(g, [=](double x, double y) {
        return scale * std::exp(-(x - y) * (x - y) / (2.0 * len * len));
      });
    }
    if (k == "min") return LinOp::kernel_from(g, [=](double x, double y) { return scale * std::min(x, y); });
    if (k == "product") return LinOp::kernel_from(g, [=](double x, double y) { return scale * x * y; });
    if (k == "constant") return LinOp::kernel_from(g, [=](double, double) { return scale; });
    config_fail(where, "unknown kernel '" + k + "'");
  }
  if (type == "sum") {
    check_keys(j, where, {"type", "terms", "scale"});
    if (!j.contains("terms") || !j.at("terms").is_array() || j.at("terms").empty()) {
      config_fail(where, "sum needs a non-empty 'terms' array");
    }
    std::vector<LinOp> terms;
    for (std::size_t k = 0; k < j.at("terms").size(); ++k) {
      terms.push_back(parse_op(j.at("terms")[k], where + ".terms[" + std::to_string(k) + "]", g));
    }
    return LinOp::sum(std::move(terms)).scaled(scale);
  }
  config_fail(where, "unknown operator type '" + type + "'");
}

// ---------------------------------------------------------------------------
// Config.

struct GridSpec {
  double a = 0.0;
  double b = 1.0;
  std::size_t N = 401;
  QuadratureRule rule = QuadratureRule::trapezoid;
};

struct TimeSpec {
  double s = 0.0;
  double T = 1.0;
  std::size_t M = 200;
};

struct SolverSpec {
  std::optional<double> eps0{};
  double tol = 1e-9;
  int max_iters = 100000;
  BackwardMethod backward = BackwardMethod::rk4;
  int vi_samples = 200;
  std::uint64_t seed = 20240601;
  json initial{};  // null: uniform; else one function per market
};

struct StabilitySpec {
  int k_max = 100;
  double eps1 = 0.1;               // eps1(k) = eps1 / k^power
  std::vector<double> eps2{0.05};  // one value, or one per market
  double delta = 0.1;
  double power = 1.0;
  std::set<std::string> targets{"A", "B", "E", "F", "G", "f", "xi", "alpha"};
  double threshold = 1e-2;
  PerturbedPath path = PerturbedPath::direct;

  PerturbationSchedule schedule() const {
    PerturbationSchedule s;
    s.k_max = k_max;
    const double p = power;
    const double e1 = eps1, d = delta;
    const std::vector<double> e2 = eps2;
    s.eps1 = [e1, p](int k) { return e1 / std::pow(k, p); };
    s.eps2 = [e2, p](int k, std::size_t i) { return e2[e2.size() == 1 ? 0 : i] / std::pow(k, p); };
    s.delta = [d, p](int k) { return d / std::pow(k, p); };
    s.targets = targets;
    return s;
  }
};

struct Range {
  double lo = 0.0;
  double hi = 1.0;
  std::size_t count = 10;

  double at(std::size_t k) const {
    return count == 1 ? lo : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(count - 1);
  }
};

struct RegimeMapSpec {
  Range sigma2{0.1, 3.0, 10};
  Range sigma3{0.1, 3.0, 10};
  Range sigma4{-10.0, 10.0, 10};
  double sigma5 = 4.0;  // the sweep uses +sigma5 for NNE and -sigma5 for MNE
  std::size_t nodes = 81;
  std::size_t steps = 40;
  double boundary_margin = 1e-3;
};

struct ScenarioConfig {
  std::string name = "custom";
  std::string description;
  std::string kind = "custom";  // example31 | cournot | custom
  Mode mode = Mode::nne;
  GridSpec grid;
  TimeSpec time;
  json model = json::object();
  SolverSpec solver;
  std::optional<StabilitySpec> stability;
  std::optional<std::vector<double>> breakpoints;
  std::optional<RegimeMapSpec> regime_map;
  std::optional<std::string> output_dir;
  bool dump_trajectory = false;
  json source;  // the config as loaded, after overrides
};

namespace detail {

inline Range parse_range(const json& j, const std::string& where, Range fallback) {
  check_keys(j, where, {"min", "max", "count"});
  Range r;
  r.lo = number_or(j, "min", fallback.lo, where);
  r.hi = number_or(j, "max", fallback.hi, where);
  r.count = count_or(j, "count", fallback.count, 1, where);
  if (r.hi < r.lo) config_fail(where, "need min <= max");
  return r;
}

inline Mode parse_mode(const std::string& s, const std::string& where) {
  if (s == "nne") return Mode::nne;
  if (s == "mne") return Mode::mne;
  config_fail(where, "mode must be 'nne' or 'mne'");
}

inline void check_model(const ScenarioConfig& c) {
  const json& m = c.model;
  const std::string where = "model";
  if (c.kind == "example31") {
    check_keys(m, where, {"beta", "printed_alpha", "xi0"});
    number_or(m, "beta", 1.0, where);
    bool_or(m, "printed_alpha", false, where);
  } else if (c.kind == "cournot") {
    check_keys(m, where, {"sigma0", "sigma1", "sigma2", "sigma3", "sigma4", "sigma5", "sigma6", "sigma7", "xi"});
    for (const char* k : {"sigma1", "sigma2", "sigma3", "sigma4", "sigma5"}) number_or(m, k, 0.0, where);
  } else {
    check_keys(m, where, {"markets"});
    if (!m.contains("markets") || !m.at("markets").is_array() || m.at("markets").empty()) {
      config_fail(where, "custom scenarios need a non-empty 'markets' array");
    }
  }
}

}  // namespace detail

/// Parses and validates a config object. Every problem is a config-error.
inline ScenarioConfig parse_config(const json& j) {
  using namespace detail;
  check_keys(j, "config",
             {"name", "description", "scenario", "mode", "grid", "time", "model", "solver", "stability",
              "piecewise", "regime_map", "output_dir", "dump_trajectory"});
  ScenarioConfig c;
  c.source = j;
  c.name = string_or(j, "name", "custom", "config");
  c.description = string_or(j, "description", "", "config");
  c.kind = string_or(j, "scenario", "custom", "config");
  if (c.kind != "example31" && c.kind != "cournot" && c.kind != "custom") {
    config_fail("config.scenario", "must be one of example31, cournot, custom");
  }
  c.mode = parse_mode(string_or(j, "mode", "nne", "config"), "config.mode");

  if (j.contains("grid")) {
    const json& g = j.at("grid");
    check_keys(g, "grid", {"a", "b", "N", "rule"});
    c.grid.a = number_or(g, "a", c.grid.a, "grid");
    c.grid.b = number_or(g, "b", c.grid.b, "grid");
    c.grid.N = count_or(g, "N", c.grid.N, 2, "grid");
    const std::string rule = string_or(g, "rule", "trapezoid", "grid");
    if (rule == "midpoint") {
      c.grid.rule = QuadratureRule::midpoint;
    } else if (rule != "trapezoid") {
      config_fail("grid.rule", "must be 'trapezoid' or 'midpoint'");
    }
  }
  if (!(c.grid.b > c.grid.a)) config_fail("grid", "need a < b");

  if (j.contains("time")) {
    const json& t = j.at("time");
    check_keys(t, "time", {"s", "T", "M"});
    c.time.s = number_or(t, "s", c.time.s, "time");
    c.time.T = number_or(t, "T", c.time.T, "time");
    c.time.M = count_or(t, "M", c.time.M, 1, "time");
  }
  if (!(c.time.T > c.time.s)) config_fail("time", "need s < T");

  if (j.contains("model")) c.model = require_object(j.at("model"), "model");
  check_model(c);

  if (j.contains("solver")) {
    const json& s = j.at("solver");
    check_keys(s, "solver", {"eps0", "tol", "max_iters", "backward", "vi_samples", "seed", "initial"});
    if (s.contains("eps0") && !s.at("eps0").is_null()) {
      const double e = as_number(s.at("eps0"), "solver.eps0");
      if (!(e > 0.0)) config_fail("solver.eps0", "must be positive");
      c.solver.eps0 = e;
    }
    c.solver.tol = number_or(s, "tol", c.solver.tol, "solver");
    if (!(c.solver.tol > 0.0)) config_fail("solver.tol", "must be positive");
    c.solver.max_iters = static_cast<int>(count_or(s, "max_iters", 100000, 1, "solver"));
    const std::string method = string_or(s, "backward", "rk4", "solver");
    if (method == "picard") {
      c.solver.backward = BackwardMethod::picard;
    } else if (method != "rk4") {
      config_fail("solver.backward", "must be 'rk4' or 'picard'");
    }
    c.solver.vi_samples = static_cast<int>(count_or(s, "vi_samples", 200, 0, "solver"));
    c.solver.seed = count_or(s, "seed", c.solver.seed, 0, "solver");
    if (s.contains("initial")) c.solver.initial = s.at("initial");
  }

  if (j.contains("stability")) {
    const json& s = j.at("stability");
    check_keys(s, "stability", {"k_max", "eps1", "eps2", "delta", "power", "targets", "threshold", "path"});
    StabilitySpec st;
    st.k_max = static_cast<int>(count_or(s, "k_max", 100, 1, "stability"));
    st.eps1 = number_or(s, "eps1", st.eps1, "stability");
    if (s.contains("eps2")) {
      st.eps2.clear();
      if (s.at("eps2").is_array()) {
        for (const auto& v : s.at("eps2")) st.eps2.push_back(as_number(v, "stability.eps2"));
      } else {
        st.eps2.push_back(as_number(s.at("eps2"), "stability.eps2"));
      }
      if (st.eps2.empty()) config_fail("stability.eps2", "must not be empty");
    }
    st.delta = number_or(s, "delta", st.delta, "stability");
    st.power = number_or(s, "power", st.power, "stability");
    if (!(st.power > 0.0)) config_fail("stability.power", "must be positive");
    if (s.contains("targets")) {
      if (!s.at("targets").is_array()) config_fail("stability.targets", "expected an array of names");
      st.targets.clear();
      for (const auto& v : s.at("targets")) {
        if (!v.is_string()) config_fail("stability.targets", "expected an array of names");
        st.targets.insert(v.get<std::string>());
      }
    }
    st.threshold = number_or(s, "threshold", st.threshold, "stability");
    const std::string path = string_or(s, "path", "direct", "stability");
    if (path == "h_map") {
      st.path = PerturbedPath::h_map;
    } else if (path != "direct") {
      config_fail("stability.path", "must be 'direct' or 'h_map'");
    }
    c.stability = st;
  }

  if (j.contains("piecewise")) {
    const json& p = j.at("piecewise");
    check_keys(p, "piecewise", {"breakpoints"});
    if (!p.contains("breakpoints") || !p.at("breakpoints").is_array() || p.at("breakpoints").size() < 2) {
      config_fail("piecewise.breakpoints", "need at least two breakpoints");
    }
    std::vector<double> bp;
    for (const auto& v : p.at("breakpoints")) bp.push_back(as_number(v, "piecewise.breakpoints"));
    for (std::size_t k = 1; k < bp.size(); ++k) {
      if (!(bp[k] > bp[k - 1])) config_fail("piecewise.breakpoints", "must increase strictly");
    }
    if (std::abs(bp.front() - c.time.s) > 1e-12 || std::abs(bp.back() - c.time.T) > 1e-12) {
      config_fail("piecewise.breakpoints", "must start at time.s and end at time.T");
    }
    c.breakpoints = bp;
  }

  if (j.contains("regime_map")) {
    const json& r = j.at("regime_map");
    check_keys(r, "regime_map", {"sigma2", "sigma3", "sigma4", "sigma5", "nodes", "steps", "boundary_margin"});
    RegimeMapSpec m;
    if (r.contains("sigma2")) m.sigma2 = parse_range(r.at("sigma2"), "regime_map.sigma2", m.sigma2);
    if (r.contains("sigma3")) m.sigma3 = parse_range(r.at("sigma3"), "regime_map.sigma3", m.sigma3);
    if (r.contains("sigma4")) m.sigma4 = parse_range(r.at("sigma4"), "regime_map.sigma4", m.sigma4);
    m.sigma5 = number_or(r, "sigma5", m.sigma5, "regime_map");
    if (!(m.sigma5 > 0.0)) config_fail("regime_map.sigma5", "must be positive");
    m.nodes = count_or(r, "nodes", m.nodes, 3, "regime_map");
    m.steps = count_or(r, "steps", m.steps, 1, "regime_map");
    m.boundary_margin = number_or(r, "boundary_margin", m.boundary_margin, "regime_map");
    c.regime_map = m;
  }

  if (j.contains("output_dir")) c.output_dir = string_or(j, "output_dir", "", "config");
  c.dump_trajectory = bool_or(j, "dump_trajectory", false, "config");
  return c;
}

// ---------------------------------------------------------------------------
// Game construction.

namespace detail {

inline CournotParams cournot_params(const ScenarioConfig& c, double s, double T) {
  CournotParams p;
  p.a = c.grid.a;
  p.b = c.grid.b;
  p.s = s;
  p.T = T;
  const json& m = c.model;
  p.sigma1 = number_or(m, "sigma1", p.sigma1, "model");
  p.sigma2 = number_or(m, "sigma2", p.sigma2, "model");
  p.sigma3 = number_or(m, "sigma3", p.sigma3, "model");
  p.sigma4 = number_or(m, "sigma4", p.sigma4, "model");
  p.sigma5 = number_or(m, "sigma5", p.sigma5, "model");
  if (m.contains("sigma0")) p.sigma0 = parse_fn(m.at("sigma0"), "model.sigma0", p.a, p.b);
  if (m.contains("sigma6")) p.sigma6 = parse_fn(m.at("sigma6"), "model.sigma6", p.a, p.b);
  if (m.contains("sigma7")) p.sigma7 = parse_fn(m.at("sigma7"), "model.sigma7", p.a, p.b);
  if (m.contains("xi")) p.xi = parse_fn(m.at("xi"), "model.xi", p.a, p.b);
  return p;
}

// f may be a function of x or {"times": [...], "values": [...]} interpolated
// linearly in t onto the time grid.
inline TimeFnFamily parse_forcing(const json& j, const std::string& where, const Grid& g,
                                  const std::vector<double>& t) {
  if (j.is_object() && j.contains("times")) {
    check_keys(j, where, {"times", "values"});
    if (!j.at("times").is_array() || !j.contains("values") || !j.at("values").is_array() ||
        j.at("times").size() != j.at("values").size() || j.at("times").empty()) {
      config_fail(where, "time table needs equal-length 'times' and 'values' arrays");
    }
    std::vector<double> ts;
    std::vector<GridFn> fs;
    for (std::size_t k = 0; k < j.at("times").size(); ++k) {
      ts.push_back(as_number(j.at("times")[k], where + ".times"));
      if (k > 0 && !(ts[k] > ts[k - 1])) config_fail(where, "times must increase strictly");
      fs.push_back(parse_gridfn(j.at("values")[k], where + ".values[" + std::to_string(k) + "]", g));
    }
    if (ts.size() == 1) return TimeFnFamily::constant(t, fs.front());
    if (ts.front() > t.front() + 1e-12 || ts.back() < t.back() - 1e-12) {
      config_fail(where, "time table must cover the horizon");
    }
    const TimeFnFamily table = TimeFnFamily::sampled(ts, fs);
    return TimeFnFamily::from_function(t, [&](double tau) { return table.at(tau); });
  }
  return TimeFnFamily::constant(t, parse_gridfn(j, where, g));
}

inline GameSpec custom_spec(const ScenarioConfig& c, const Grid& g, const std::vector<double>& t) {
  const json& markets = c.model.at("markets");
  const std::size_t n = markets.size();
  std::vector<MarketCoefficients> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string where = "model.markets[" + std::to_string(i) + "]";
    const json& m = markets[i];
    check_keys(m, where, {"A", "B", "E", "F", "G", "f", "xi", "alpha"});
    auto op = [&](const char* key, const json& fallback) {
      return parse_op(m.contains(key) ? m.at(key) : fallback, where + "." + key, g);
    };
    auto fn = [&](const char* key) {
      return m.contains(key) ? parse_gridfn(m.at(key), where + "." + key, g) : GridFn::zero(g);
    };
    std::vector<TimeOpFamily> row;
    if (m.contains("B")) {
      const json& b = m.at("B");
      if (!b.is_array() || b.size() != n) config_fail(where + ".B", "need one operator per market");
      for (std::size_t k = 0; k < n; ++k) {
        row.push_back(TimeOpFamily::constant(t, parse_op(b[k], where + ".B[" + std::to_string(k) + "]", g)));
      }
    } else {
      for (std::size_t k = 0; k < n; ++k) row.push_back(TimeOpFamily::constant(t, LinOp::zero(g)));
    }
    out.push_back(MarketCoefficients{
        TimeOpFamily::constant(t, op("A", "zero")),
        std::move(row),
        TimeOpFamily::constant(t, op("E", "zero")),
        TimeOpFamily::constant(t, op("F", "zero")),
        op("G", "zero"),
        m.contains("f") ? parse_forcing(m.at("f"), where + ".f", g, t) : TimeFnFamily::constant(t, GridFn::zero(g)),
        fn("xi"),
        fn("alpha"),
    });
  }
  GameSpec spec{t, g, std::move(out)};
  spec.validate();
  return spec;
}

}  // namespace detail

inline Grid make_config_grid(const ScenarioConfig& c) { return make_grid(c.grid.a, c.grid.b, c.grid.N, c.grid.rule); }

/// Game on the horizon [s, T] with `steps` time steps.
inline GameSpec build_spec(const ScenarioConfig& c, double s, double T, std::size_t steps) {
  const Grid g = make_config_grid(c);
  const auto t = make_timegrid(s, T, steps);
  if (c.kind == "example31") {
    const json& m = c.model;
    std::optional<GridFn> xi0;
    if (m.contains("xi0")) xi0 = parse_gridfn(m.at("xi0"), "model.xi0", g);
    return example31_spec(g, t, detail::number_or(m, "beta", 1.0, "model"),
                          detail::bool_or(m, "printed_alpha", false, "model"), xi0 ? &*xi0 : nullptr);
  }
  if (c.kind == "cournot") {
    const CournotParams p = detail::cournot_params(c, s, T);
    return build_cournot_spec(p, c.grid.N, steps);
  }
  return detail::custom_spec(c, g, t);
}

inline GameSpec build_spec(const ScenarioConfig& c) { return build_spec(c, c.time.s, c.time.T, c.time.M); }

/// One spec per segment; segment m gets round(M * length / (T - s)) steps (at least 2).
inline std::vector<GameSpec> build_segments(const ScenarioConfig& c) {
  std::vector<GameSpec> out;
  if (!c.breakpoints) {
    out.push_back(build_spec(c));
    return out;
  }
  const auto& bp = *c.breakpoints;
  const double total = c.time.T - c.time.s;
  for (std::size_t m = 1; m < bp.size(); ++m) {
    const double frac = (bp[m] - bp[m - 1]) / total;
    const auto steps = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(frac * c.time.M)));
    out.push_back(build_spec(c, bp[m - 1], bp[m], steps));
  }
  return out;
}

inline AssembleOptions assemble_options(const ScenarioConfig& c) {
  AssembleOptions a;
  a.backward.method = c.solver.backward;
  a.eps0 = c.solver.eps0;
  return a;
}

inline SolveOptions solve_options(const ScenarioConfig& c, const Grid& g, std::size_t n) {
  SolveOptions s;
  s.tol = c.solver.tol;
  s.max_iters = c.solver.max_iters;
  s.vi_samples = c.solver.vi_samples;
  s.seed = c.solver.seed;
  if (!c.solver.initial.is_null()) {
    const json& init = c.solver.initial;
    if (!init.is_array() || init.size() != n) {
      detail::config_fail("solver.initial", "need one function per market");
    }
    std::vector<GridFn> parts;
    for (std::size_t i = 0; i < n; ++i) {
      parts.push_back(parse_gridfn(init[i], "solver.initial[" + std::to_string(i) + "]", g));
    }
    s.initial = DensityProfile(std::move(parts));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Builtin registry.

struct Builtin {
  std::string name;
  std::string description;
  const char* config;
};

inline const std::vector<Builtin>& builtins() {
  static const std::vector<Builtin> list{
      {"example31", "graphon game on [0,1]; closed-form NNE pi cos(pi x) v 0, lambda = -1/3, OWAP = 1",
       R"({"name": "example31", "scenario": "example31", "mode": "nne",
           "grid": {"a": 0, "b": 1, "N": 401}, "time": {"s": 0, "T": 1, "M": 200},
           "model": {"beta": 1}, "solver": {"eps0": 0.3333333333333333, "tol": 1e-9}})"},
      {"example31_printed", "graphon game with the literal payoff constant (no closed form)",
       R"({"name": "example31_printed", "scenario": "example31", "mode": "nne",
           "grid": {"a": 0, "b": 1, "N": 401}, "time": {"s": 0, "T": 1, "M": 200},
           "model": {"beta": 1, "printed_alpha": true}, "solver": {"tol": 1e-9}})"},
      {"cournot_nne", "linear Cournot market on [1,2], competitive regime (sigma5 = 2)",
       R"({"name": "cournot_nne", "scenario": "cournot", "mode": "nne",
           "grid": {"a": 1, "b": 2, "N": 401}, "time": {"s": 0, "T": 1, "M": 200},
           "model": {"sigma0": 2, "sigma1": 0, "sigma2": 0.5, "sigma3": 2, "sigma4": 0, "sigma5": 2,
                     "sigma6": 1, "sigma7": 1, "xi": 1},
           "solver": {"tol": 1e-9}})"},
      {"cournot_mne", "linear Cournot market on [1,2], cooperative regime (sigma4 = sigma5 = -1/2)",
       R"({"name": "cournot_mne", "scenario": "cournot", "mode": "mne",
           "grid": {"a": 1, "b": 2, "N": 401}, "time": {"s": 0, "T": 1, "M": 200},
           "model": {"sigma0": 3, "sigma1": 0, "sigma2": 0.5, "sigma3": 2, "sigma4": -0.5, "sigma5": -0.5,
                     "sigma6": 1, "sigma7": 1, "xi": 1},
           "solver": {"tol": 1e-9}})"},
      {"regime_map", "Cournot regime sweep over (sigma2, sigma3, sigma4) at sigma5 = +-4 on [1/2,1]",
       R"({"name": "regime_map", "scenario": "cournot", "mode": "nne",
           "grid": {"a": 0.5, "b": 1, "N": 81}, "time": {"s": 0, "T": 1, "M": 40},
           "model": {"sigma0": 2, "sigma1": 0, "sigma6": 1, "sigma7": 1, "xi": 1},
           "regime_map": {"sigma2": {"min": 0.1, "max": 3, "count": 10},
                          "sigma3": {"min": 0.1, "max": 3, "count": 10},
                          "sigma4": {"min": -10, "max": 10, "count": 10},
                          "sigma5": 4, "nodes": 81, "steps": 40, "boundary_margin": 1e-3}})"},
      {"stability_nne", "perturbation run of the competitive Cournot market, 1/k schedule, k = 1..100",
       R"({"name": "stability_nne", "scenario": "cournot", "mode": "nne",
           "grid": {"a": 1, "b": 2, "N": 201}, "time": {"s": 0, "T": 1, "M": 100},
           "model": {"sigma0": 2, "sigma1": 0, "sigma2": 0.5, "sigma3": 2, "sigma4": 0, "sigma5": 2,
                     "sigma6": 1, "sigma7": 1, "xi": 1},
           "solver": {"tol": 1e-9},
           "stability": {"k_max": 100, "eps1": 0.1, "eps2": 0.05, "delta": 0.1, "targets": ["f", "xi"],
                         "threshold": 1e-2}})"},
      {"stability_mne", "perturbation run of the cooperative Cournot market, 1/k schedule, k = 1..100",
       R"({"name": "stability_mne", "scenario": "cournot", "mode": "mne",
           "grid": {"a": 1, "b": 2, "N": 201}, "time": {"s": 0, "T": 1, "M": 100},
           "model": {"sigma0": 3, "sigma1": 0, "sigma2": 0.5, "sigma3": 2, "sigma4": -0.5, "sigma5": -0.5,
                     "sigma6": 1, "sigma7": 1, "xi": 1},
           "solver": {"tol": 1e-9},
           "stability": {"k_max": 100, "eps1": 0.1, "eps2": 0.05, "delta": 0.1, "targets": ["f", "xi"],
                         "threshold": 1e-2}})"},
      {"piecewise", "competitive Cournot market with strategies revised at t = 1/2",
       R"({"name": "piecewise", "scenario": "cournot", "mode": "nne",
           "grid": {"a": 1, "b": 2, "N": 201}, "time": {"s": 0, "T": 1, "M": 100},
           "model": {"sigma0": 2, "sigma1": 0, "sigma2": 0.5, "sigma3": 2, "sigma4": 0, "sigma5": 2,
                     "sigma6": 1, "sigma7": 1, "xi": 1},
           "solver": {"tol": 1e-9},
           "piecewise": {"breakpoints": [0, 0.5, 1]}})"},
  };
  return list;
}

inline std::optional<json> builtin_config(const std::string& name) {
  for (const auto& b : builtins()) {
    if (b.name == name) {
      json j = json::parse(b.config);
      j["description"] = b.description;
      return j;
    }
  }
  return std::nullopt;
}

/// Builtin name or path to a JSON file.
inline json load_config(const std::string& ref) {
  namespace fs = std::filesystem;
  if (fs::is_regular_file(ref)) {
    std::ifstream in(ref);
    try {
      return json::parse(in);
    } catch (const json::parse_error& e) {
      detail::config_fail(ref, std::string("invalid JSON: ") + e.what());
    }
  }
  if (auto j = builtin_config(ref)) return *j;
  detail::config_fail(ref, "neither a readable file nor a builtin scenario");
}

// ---------------------------------------------------------------------------
// Artifacts.

/// FNV-1a over the canonical (sorted-key) serialization.
inline std::string config_hash(const json& j) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

/// Writes through a temporary file and renames it into place.
inline void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) dvi::detail::fail(ErrorKind::internal, "cannot write " + tmp.string());
    out << contents;
    if (!out) dvi::detail::fail(ErrorKind::internal, "cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::ostringstream csv_stream() {
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  return out;
}

/// `x,u_1..u_n,V_1..V_n`.
inline std::string equilibrium_csv(const DensityProfile& u, const std::vector<GridFn>& V) {
  auto out = csv_stream();
  out << 'x';
  for (std::size_t i = 0; i < u.n(); ++i) out << ",u_" << i + 1;
  for (std::size_t i = 0; i < V.size(); ++i) out << ",V_" << i + 1;
  out << '\n';
  const Grid& g = u.grid();
  for (std::size_t j = 0; j < g.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    out << g.nodes()[jj];
    for (std::size_t i = 0; i < u.n(); ++i) out << ',' << u[i][jj];
    for (const auto& v : V) out << ',' << v[jj];
    out << '\n';
  }
  return out.str();
}

/// `m,lambda_1..n`.
inline std::string lambda_trace_csv(const std::vector<std::vector<double>>& trace, std::size_t n) {
  auto out = csv_stream();
  out << 'm';
  for (std::size_t i = 0; i < n; ++i) out << ",lambda_" << i + 1;
  out << '\n';
  for (std::size_t m = 0; m < trace.size(); ++m) {
    out << m + 1;
    for (double l : trace[m]) out << ',' << l;
    out << '\n';
  }
  return out.str();
}

inline std::string gap_trace_csv(const std::vector<double>& gaps) {
  auto out = csv_stream();
  out << "m,gap\n";
  for (std::size_t m = 0; m < gaps.size(); ++m) out << m + 1 << ',' << gaps[m] << '\n';
  return out.str();
}

/// `k,u_gap,v_gap,owap_gap_1..n,p_gap,q_gap`.
inline std::string stability_csv(const StabilityReport& rep, std::size_t n) {
  auto out = csv_stream();
  out << "k,u_gap,v_gap";
  for (std::size_t i = 0; i < n; ++i) out << ",owap_gap_" << i + 1;
  out << ",p_gap,q_gap\n";
  for (const auto& r : rep.rows) {
    out << r.k << ',' << r.u_gap << ',' << r.v_gap;
    for (double g : r.owap_gap) out << ',' << g;
    out << ',' << r.p_gap << ',' << r.q_gap << '\n';
  }
  return out.str();
}

inline json to_json(const RegimeReport& r) {
  json j{{"theta", r.theta},
         {"criterion", r.criterion},
         {"label", regime_name(r.label)},
         {"analytic_bound", r.analytic_bound},
         {"eps_bounds", nullptr}};
  if (r.eps_bounds) j["eps_bounds"] = {{"eps_low", r.eps_bounds->eps_low}, {"eps_high", r.eps_bounds->eps_high}};
  return j;
}

inline json certificate_json(const AssembledVI& vi) {
  return {{"eps_low", vi.eps_low},       {"eps_high", vi.eps_high},   {"eps_P", vi.eps_P},
          {"p_norm", vi.p_norm},         {"eps0", vi.eps0},           {"eps0_max", vi.eps0_max()},
          {"contraction_factor", vi.contraction_factor()}};
}

inline json result_json(const EquilibriumResult& r) {
  return {{"mode", mode_name(r.mode)},
          {"lambda", r.lambda},
          {"owap", r.owap},
          {"iterations", r.iterations},
          {"final_gap", r.gap_trace.empty() ? 0.0 : r.gap_trace.back()},
          {"vi_residual", r.vi_residual},
          {"fixed_point_residual", r.fixed_point_residual}};
}

struct RunOutput {
  std::filesystem::path dir;
  json summary;
  std::vector<std::string> files;
};

namespace detail {

class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void put(const std::string& name, const std::string& contents) {
    write_atomic(dir_ / name, contents);
    files_.push_back(name);
  }
  void put_json(const std::string& name, const json& j) { put(name, j.dump(2) + "\n"); }

  RunOutput finish(const std::string& command, const ScenarioConfig& c, json summary, json certificates,
                   json iterations) {
    json manifest{{"tool", "dvi"},
                  {"version", kVersion},
                  {"command", command},
                  {"scenario", c.name},
                  {"config_hash", config_hash(c.source)},
                  {"config", c.source},
                  {"tolerances",
                   {{"tol", c.solver.tol},
                    {"max_iters", c.solver.max_iters},
                    {"picard_tol", BackwardOptions{}.picard_tol},
                    {"definiteness_tol", AssembleOptions{}.definiteness_tol}}},
                  {"iterations", std::move(iterations)},
                  {"certificates", std::move(certificates)},
                  {"files", files_}};
    put_json("manifest.json", manifest);
    return {dir_, std::move(summary), files_};
  }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> files_;
};

}  // namespace detail

/// Equilibrium run, piecewise when breakpoints are configured. Writes
/// summary.json, equilibrium.csv, lambda_trace.csv, gap_trace.csv (per segment
/// with a seg<m>_ prefix in the piecewise case) and manifest.json.
inline RunOutput run_solve(const ScenarioConfig& c, const std::filesystem::path& dir) {
  detail::ArtifactWriter w(dir);
  const AssembleOptions aopt = assemble_options(c);
  const std::vector<GameSpec> specs = build_segments(c);
  const SolveOptions sopt = solve_options(c, specs.front().grid, specs.front().n());
  const PiecewiseResult pw = solve_piecewise(specs, c.mode, aopt, sopt);
  const bool piecewise = c.breakpoints.has_value();

  json segments = json::array();
  json certs = json::array();
  json iters = json::array();
  for (std::size_t m = 0; m < pw.segments.size(); ++m) {
    const auto& r = pw.segments[m];
    const auto& vi = pw.vis[m];
    const std::string prefix = piecewise ? "seg" + std::to_string(m + 1) + "_" : "";
    json s = result_json(r);
    s["certificate"] = certificate_json(vi);
    if (c.mode == Mode::nne) s["verify_nne"] = verify_nne(r.u_hat, r.V_hat);
    if (piecewise) s["interval"] = {pw.breakpoints[m], pw.breakpoints[m + 1]};
    segments.push_back(s);
    certs.push_back(certificate_json(vi));
    iters.push_back(r.iterations);
    w.put(prefix + "equilibrium.csv", equilibrium_csv(r.u_hat, r.V_hat));
    w.put(prefix + "lambda_trace.csv", lambda_trace_csv(r.lambda_trace, vi.n));
    w.put(prefix + "gap_trace.csv", gap_trace_csv(r.gap_trace));
    if (c.dump_trajectory) {
      for (std::size_t i = 0; i < specs[m].n(); ++i) {
        const auto x = solve_state_forward(specs[m].markets[i], r.u_hat, specs[m].times);
        std::ostringstream out;
        write_trajectory_csv(out, x);
        w.put(prefix + "trajectory_" + std::to_string(i + 1) + ".csv", out.str());
      }
    }
  }
  json summary;
  if (piecewise) {
    summary = {{"scenario", c.name},
               {"mode", mode_name(c.mode)},
               {"breakpoints", pw.breakpoints},
               {"total_wap", pw.total_wap},
               {"segments", segments}};
  } else {
    summary = segments.front();
    summary["scenario"] = c.name;
  }
  w.put_json("summary.json", summary);
  return w.finish("solve", c, summary, piecewise ? certs : certs.front(), piecewise ? iters : iters.front());
}

/// Perturbation run: stability.csv, lambda traces of the base solve and of
/// k = k_max, summary.json and manifest.json.
inline RunOutput run_stability(const ScenarioConfig& c, const std::filesystem::path& dir) {
  detail::ArtifactWriter w(dir);
  const StabilitySpec st = c.stability.value_or(StabilitySpec{});
  const GameSpec base = build_spec(c);
  if (st.eps2.size() != 1 && st.eps2.size() != base.n()) {
    detail::config_fail("stability.eps2", "need one value or one per market");
  }
  StabilityOptions opt;
  opt.assemble = assemble_options(c);
  opt.solve = solve_options(c, base.grid, base.n());
  opt.path = st.path;
  opt.threshold = st.threshold;
  const PerturbationSchedule sched = st.schedule();
  const StabilityReport rep = stability_report(base, sched, c.mode, opt);

  w.put("stability.csv", stability_csv(rep, base.n()));
  w.put("lambda_trace_base.csv", lambda_trace_csv(rep.base.lambda_trace, base.n()));
  w.put("equilibrium_base.csv", equilibrium_csv(rep.base.u_hat, rep.base.V_hat));
  const PerturbedSolve last = solve_perturbed(perturb_spec(base, sched, st.k_max), c.mode, st.path, opt.assemble,
                                              opt.solve);
  w.put("lambda_trace_k" + std::to_string(st.k_max) + ".csv", lambda_trace_csv(last.result.lambda_trace, base.n()));
  w.put("equilibrium_k" + std::to_string(st.k_max) + ".csv",
        equilibrium_csv(last.result.u_hat, last.result.V_hat));

  json summary{{"scenario", c.name},
               {"mode", mode_name(c.mode)},
               {"k_max", st.k_max},
               {"skipped_k", rep.skipped},
               {"first_certified_k", rep.first_certified ? json(*rep.first_certified) : json(nullptr)},
               {"shrinking", rep.shrinking},
               {"below_threshold", rep.below_threshold},
               {"threshold", st.threshold},
               {"rate_constant", rep.rate_constant},
               {"rate_within_factor3", rep.rate_within_factor3},
               {"base", result_json(rep.base)}};
  if (!rep.rows.empty()) {
    const auto& f = rep.rows.front();
    const auto& l = rep.rows.back();
    summary["first"] = {{"k", f.k}, {"u_gap", f.u_gap}, {"v_gap", f.v_gap}, {"owap_gap", f.owap_gap}};
    summary["last"] = {{"k", l.k}, {"u_gap", l.u_gap}, {"v_gap", l.v_gap}, {"owap_gap", l.owap_gap}};
  }
  w.put_json("summary.json", summary);
  return w.finish("stability", c, summary, certificate_json(last.vi), rep.base.iterations);
}

struct RegimePoint {
  double sigma2, sigma3, sigma4;
  RegimeReport nne;  // at +sigma5
  RegimeReport mne;  // at -sigma5
};

/// Region of a sweep point: which of the two games the analytic criterion admits.
inline const char* region_name(const RegimePoint& p) {
  const bool n = p.nne.label == RegimeLabel::nne_admissible;
  const bool m = p.mne.label == RegimeLabel::mne_admissible;
  return n && m ? "both" : n ? "nne-only" : m ? "mne-only" : "neither";
}

struct RegimeMapResult {
  std::vector<RegimePoint> points;
  std::size_t compared = 0;       // labels away from the boundary
  std::size_t agreeing = 0;       // numeric membership equals the analytic label
  std::size_t sufficient_ok = 0;  // analytic label implies a numeric certificate
  std::size_t analytic_positive = 0;
  double agreement() const { return compared == 0 ? 1.0 : static_cast<double>(agreeing) / compared; }
};

inline RegimeMapResult regime_map(const ScenarioConfig& c) {
  dvi::detail::require(c.kind == "cournot", ErrorKind::config, "regime-map needs a cournot scenario");
  const RegimeMapSpec m = c.regime_map.value_or(RegimeMapSpec{});
  RegimeMapResult out;
  RegimeOptions opt{m.nodes, m.steps, true};
  for (std::size_t i2 = 0; i2 < m.sigma2.count; ++i2) {
    for (std::size_t i3 = 0; i3 < m.sigma3.count; ++i3) {
      for (std::size_t i4 = 0; i4 < m.sigma4.count; ++i4) {
        CournotParams p = detail::cournot_params(c, c.time.s, c.time.T);
        p.sigma2 = m.sigma2.at(i2);
        p.sigma3 = m.sigma3.at(i3);
        p.sigma4 = m.sigma4.at(i4);
        p.sigma5 = m.sigma5;
        RegimeReport nne = cournot_regime(p, Mode::nne, opt);
        p.sigma5 = -m.sigma5;
        RegimeReport mne = cournot_regime(p, Mode::mne, opt);
        const std::pair<const RegimeReport*, bool> checks[] = {
            {&nne, nne.label == RegimeLabel::nne_admissible},
            {&mne, mne.label == RegimeLabel::mne_admissible}};
        for (std::size_t q = 0; q < 2; ++q) {
          const RegimeReport& r = *checks[q].first;
          const bool analytic = checks[q].second;
          const bool numeric = q == 0 ? r.eps_bounds->eps_low > 0.0 : r.eps_bounds->eps_high < 0.0;
          if (std::abs(r.criterion) > m.boundary_margin) {
            ++out.compared;
            if (analytic == numeric) ++out.agreeing;
          }
          if (analytic) {
            ++out.analytic_positive;
            const double margin = q == 0 ? r.eps_bounds->eps_low : -r.eps_bounds->eps_high;
            const double bound = q == 0 ? r.analytic_bound : -r.analytic_bound;
            if (margin >= 0.9 * bound) ++out.sufficient_ok;
          }
        }
        out.points.push_back({p.sigma2, p.sigma3, p.sigma4, nne, mne});
      }
    }
  }
  return out;
}

/// regime_map.csv `sigma2,sigma3,sigma4,label`, regime_detail.csv with both
/// sides of every point, summary.json and manifest.json.
inline RunOutput run_regime_map(const ScenarioConfig& c, const std::filesystem::path& dir) {
  detail::ArtifactWriter w(dir);
  const RegimeMapSpec spec = c.regime_map.value_or(RegimeMapSpec{});
  const RegimeMapResult res = regime_map(c);
  auto labels = csv_stream();
  auto detail_csv = csv_stream();
  labels << "sigma2,sigma3,sigma4,label\n";
  detail_csv << "sigma2,sigma3,sigma4,sigma5,mode,theta,criterion,label,analytic_bound,eps_low,eps_high\n";
  std::map<std::string, int> counts;
  for (const auto& p : res.points) {
    labels << p.sigma2 << ',' << p.sigma3 << ',' << p.sigma4 << ',' << region_name(p) << '\n';
    ++counts[region_name(p)];
    for (const auto* r : {&p.nne, &p.mne}) {
      const bool is_nne = r == &p.nne;
      detail_csv << p.sigma2 << ',' << p.sigma3 << ',' << p.sigma4 << ',' << (is_nne ? spec.sigma5 : -spec.sigma5)
                 << ',' << (is_nne ? "nne" : "mne") << ',' << r->theta << ',' << r->criterion << ','
                 << regime_name(r->label) << ',' << r->analytic_bound << ',' << r->eps_bounds->eps_low << ','
                 << r->eps_bounds->eps_high << '\n';
    }
  }
  w.put("regime_map.csv", labels.str());
  w.put("regime_detail.csv", detail_csv.str());
  json summary{{"scenario", c.name},
               {"points", res.points.size()},
               {"regions", counts},
               {"compared", res.compared},
               {"agreeing", res.agreeing},
               {"agreement", res.agreement()},
               {"analytic_positive", res.analytic_positive},
               {"sufficient_ok", res.sufficient_ok}};
  w.put_json("summary.json", summary);
  return w.finish("regime-map", c, summary, json::object(), json(nullptr));
}

}  // namespace dvi::scenario

#endif  // DVI_SCENARIO_HPP
