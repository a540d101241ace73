#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "chain.hpp"
#include "discretize.hpp"
#include "error.hpp"
#include "expression.hpp"
#include "kernel.hpp"
#include "quadrature.hpp"

namespace jumpchain {

inline constexpr int kSchemaVersion = 1;

/// Jump kernel family and its parameters (Dirichlet scheme).
struct KernelConfig {
  std::string family = "cauchy";  // cauchy | stable | stable_like | levy_mix | constant | expression
  double alpha = 1.0;
  double beta = 1.5;
  std::string alpha_expr = "1";     // stable_like: alpha(x) in x1..xd, x
  std::string region = "half_line";  // levy_mix: half_line | whole | empty
  double min_jump = 1.0;
  double c = 1.0;
  double support = std::numeric_limits<double>::infinity();
  std::string expr;  // expression: k(x, y)
  bool symmetric = false;
  bool translation_invariant = false;
};

/// Levy measure field family and its parameters (measure scheme).
struct FieldConfig {
  std::string family = "cauchy";  // cauchy | stable | stable_like | sde | expression
  double alpha = 1.0;
  std::string alpha_expr = "1";
  std::string phi_expr = "1";  // sde: phi(x)
  double base_alpha = 1.0;     // sde: stable base measure
  std::string expr;            // expression: density of nu(x, dy)
  bool symmetric = false;
  bool finite_second_moment = false;
  std::vector<std::string> drift;  // expression: b(x), one entry per coordinate
};

struct SimulateSection {
  double T = 1.0;
  std::size_t N_paths = 1000;
  std::uint64_t seed = 1;
  std::vector<double> x0;
  std::vector<double> marginal_times;  // empty: {T}
  std::size_t keep_paths = 0;          // number of trajectories written as CSV
  bool traces = false;                 // characteristics along the kept paths
  double histogram_half_width = 10.0;
  std::size_t histogram_bins = 200;
};

struct CheckSection {
  bool discrete = true;  // matrix-level checks (need a matrix)
  double rho = 1.0;
  std::vector<double> rho_grid{1.0};
  std::vector<double> r_grid{1.0, 2.0, 4.0, 8.0};
  std::vector<double> eps_grid{0.1, 0.01, 0.001};
  double R = 1.0;
  std::vector<std::vector<double>> probes;  // empty: default probe grid
  std::size_t probe_count = 0;              // > 0: uniform probes on [-R, R] along the first axis
  std::vector<double> bump_scales{0.5, 1.0, 2.0};
  double growth_budget = 10.0;
  std::optional<double> tolerance;  // relative threshold for the semimartingale discrepancies
};

struct SemigroupSection {
  double t = 0.5;
  double s = 1.0;  // initial function: Cauchy(s) density
  double leak_threshold = 1e-3;
  double tol = 1e-12;
};

struct DiagnosticsSection {
  std::vector<double> xi{0.5, 1.0, 2.0};
  double ks_bound = 0.05;
  std::string reference = "auto";  // auto | cauchy | none
};

struct SweepSection {
  bool semigroup = false;
  bool conditions = false;
  bool histograms = true;
};

struct RunConfig {
  int schema_version = kSchemaVersion;
  Scheme scheme = Scheme::DirichletAverage;
  std::optional<double> p;  // unset: family default
  int d = 1;
  std::vector<int> n_list{16};
  double R_w = 64.0;
  bool stencil = true;
  KernelConfig kernel;
  FieldConfig field;
  double truncation_radius = 1.0;
  SimulateSection simulate;
  CheckSection check;
  SemigroupSection semigroup;
  DiagnosticsSection diagnostics;
  SweepSection sweep;
  QuadratureSpec quadrature;
  std::string out = "out";

  void validate() const;
  double resolved_p() const;
  SimulationConfig simulation(std::uint64_t seed_override = 0, bool override_seed = false) const;
  std::vector<Point> probe_points() const;
};

namespace detail {

using json = nlohmann::ordered_json;

/// Reads the keys of one JSON object and rejects the ones never asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "config must be a JSON object" : path_ + " must be an object");
  }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  bool has(const std::string& k) {
    seen_.insert(k);
    return j_.contains(k) && !j_.at(k).is_null();
  }

  template <class T>
  void read(const std::string& k, T& out) {
    seen_.insert(k);
    if (!j_.contains(k) || j_.at(k).is_null()) return;
    try {
      out = j_.at(k).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(key(k) + " has the wrong type");
    }
  }

  void read_number(const std::string& k, double& out) {
    seen_.insert(k);
    if (!j_.contains(k) || j_.at(k).is_null()) return;
    const json& v = j_.at(k);
    if (v.is_number()) {
      out = v.get<double>();
    } else if (v.is_string() && (v.get<std::string>() == "inf" || v.get<std::string>() == "infinity")) {
      out = std::numeric_limits<double>::infinity();
    } else {
      throw ConfigError(key(k) + " must be a number");
    }
  }

  Section sub(const std::string& k) {
    seen_.insert(k);
    static const json empty = json::object();
    if (!j_.contains(k) || j_.at(k).is_null()) return Section(empty, key(k));
    return Section(j_.at(k), key(k));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + key(it.key()) + "'");
  }

  const json& raw() const { return j_; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void read_count(Section& s, const std::string& k, std::size_t& out) {
  long long v = static_cast<long long>(out);
  s.read(k, v);
  if (v < 0) throw ConfigError(s.key(k) + " must be >= 0");
  out = static_cast<std::size_t>(v);
}

inline std::vector<std::string> allowed_kernel_keys(const std::string& family) {
  if (family == "cauchy") return {};
  if (family == "stable") return {"alpha"};
  if (family == "stable_like") return {"alpha_expr"};
  if (family == "levy_mix") return {"alpha", "beta", "region", "min_jump"};
  if (family == "constant") return {"c", "support"};
  if (family == "expression") return {"expr", "symmetric", "translation_invariant"};
  throw ConfigError("kernel.family must be one of cauchy, stable, stable_like, levy_mix, constant, expression; got '" +
                    family + "'");
}

inline std::vector<std::string> allowed_field_keys(const std::string& family) {
  if (family == "cauchy") return {};
  if (family == "stable") return {"alpha"};
  if (family == "stable_like") return {"alpha_expr"};
  if (family == "sde") return {"phi_expr", "base_alpha"};
  if (family == "expression") return {"expr", "symmetric", "finite_second_moment", "drift"};
  throw ConfigError("field.family must be one of cauchy, stable, stable_like, sde, expression; got '" + family + "'");
}

inline void check_family_keys(const json& j, const std::string& path, const std::vector<std::string>& allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "family") continue;
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ConfigError("unknown key '" + path + "." + it.key() + "' for this family");
  }
}

/// Scalar field x -> value from an expression in x1..xd and x.
inline ScalarField expression_scalar(const std::string& src, int d) {
  std::vector<std::string> vars;
  for (int i = 1; i <= d; ++i) vars.push_back("x" + std::to_string(i));
  vars.push_back("x");
  auto e = std::make_shared<Expression>(src, vars);
  return [e, d](std::span<const double> x) {
    std::array<double, 8> v{};
    for (int i = 0; i < d; ++i) v[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)];
    v[static_cast<std::size_t>(d)] = x[0];
    return (*e)(v.data());
  };
}

inline std::vector<double> read_vec(Section& s, const std::string& k, std::vector<double> def) {
  s.read(k, def);
  return def;
}

}  // namespace detail

inline RunConfig parse_config(const detail::json& j) {
  using detail::Section;
  RunConfig c;
  Section root(j, "");
  if (!root.has("schema_version")) throw ConfigError("schema_version is required");
  root.read("schema_version", c.schema_version);
  if (c.schema_version != kSchemaVersion)
    throw ConfigError("schema_version " + std::to_string(c.schema_version) + " is not supported (expected " +
                      std::to_string(kSchemaVersion) + ")");
  std::string scheme = scheme_name(c.scheme);
  root.read("scheme", scheme);
  c.scheme = parse_scheme(scheme);
  if (root.has("p")) {
    double p = 0.0;
    root.read_number("p", p);
    c.p = p;
  }
  root.read("out", c.out);

  {
    Section s = root.sub("lattice");
    s.read("d", c.d);
    if (s.has("n")) {
      const auto& v = s.raw().at("n");
      try {
        c.n_list = v.is_array() ? v.get<std::vector<int>>() : std::vector<int>{v.get<int>()};
      } catch (const nlohmann::json::exception&) {
        throw ConfigError("lattice.n must be an integer or a list of integers");
      }
    }
    s.read_number("R_w", c.R_w);
    s.read("stencil", c.stencil);
    s.finish();
  }
  {
    Section s = root.sub("kernel");
    s.read("family", c.kernel.family);
    detail::check_family_keys(s.raw(), "kernel", detail::allowed_kernel_keys(c.kernel.family));
    s.read_number("alpha", c.kernel.alpha);
    s.read_number("beta", c.kernel.beta);
    s.read("alpha_expr", c.kernel.alpha_expr);
    s.read("region", c.kernel.region);
    s.read_number("min_jump", c.kernel.min_jump);
    s.read_number("c", c.kernel.c);
    s.read_number("support", c.kernel.support);
    s.read("expr", c.kernel.expr);
    s.read("symmetric", c.kernel.symmetric);
    s.read("translation_invariant", c.kernel.translation_invariant);
    s.finish();
  }
  {
    Section s = root.sub("field");
    s.read("family", c.field.family);
    detail::check_family_keys(s.raw(), "field", detail::allowed_field_keys(c.field.family));
    s.read_number("alpha", c.field.alpha);
    s.read("alpha_expr", c.field.alpha_expr);
    s.read("phi_expr", c.field.phi_expr);
    s.read_number("base_alpha", c.field.base_alpha);
    s.read("expr", c.field.expr);
    s.read("symmetric", c.field.symmetric);
    s.read("finite_second_moment", c.field.finite_second_moment);
    s.read("drift", c.field.drift);
    s.finish();
  }
  {
    Section s = root.sub("truncation");
    s.read_number("radius", c.truncation_radius);
    s.finish();
  }
  {
    Section s = root.sub("simulate");
    auto& m = c.simulate;
    s.read_number("T", m.T);
    long long np = static_cast<long long>(m.N_paths);
    s.read("N_paths", np);
    if (np < 1) throw ConfigError("simulate.N_paths must be >= 1");
    m.N_paths = static_cast<std::size_t>(np);
    s.read("seed", m.seed);
    s.read("x0", m.x0);
    s.read("marginal_times", m.marginal_times);
    detail::read_count(s, "keep_paths", m.keep_paths);
    s.read("traces", m.traces);
    s.read_number("histogram_half_width", m.histogram_half_width);
    detail::read_count(s, "histogram_bins", m.histogram_bins);
    s.finish();
  }
  {
    Section s = root.sub("check");
    auto& k = c.check;
    s.read("discrete", k.discrete);
    s.read_number("rho", k.rho);
    s.read("rho_grid", k.rho_grid);
    s.read("r_grid", k.r_grid);
    s.read("eps_grid", k.eps_grid);
    s.read_number("R", k.R);
    s.read("probes", k.probes);
    detail::read_count(s, "probe_count", k.probe_count);
    s.read("bump_scales", k.bump_scales);
    s.read_number("growth_budget", k.growth_budget);
    if (s.has("tolerance")) {
      double t = 0.0;
      s.read_number("tolerance", t);
      k.tolerance = t;
    }
    s.finish();
  }
  {
    Section s = root.sub("semigroup");
    s.read_number("t", c.semigroup.t);
    s.read_number("s", c.semigroup.s);
    s.read_number("leak_threshold", c.semigroup.leak_threshold);
    s.read_number("tol", c.semigroup.tol);
    s.finish();
  }
  {
    Section s = root.sub("diagnostics");
    s.read("xi", c.diagnostics.xi);
    s.read_number("ks_bound", c.diagnostics.ks_bound);
    s.read("reference", c.diagnostics.reference);
    s.finish();
  }
  {
    Section s = root.sub("sweep");
    s.read("semigroup", c.sweep.semigroup);
    s.read("conditions", c.sweep.conditions);
    s.read("histograms", c.sweep.histograms);
    s.finish();
  }
  {
    Section s = root.sub("quadrature");
    auto& q = c.quadrature;
    s.read("q", q.q);
    s.read_number("eps_q", q.eps_q);
    s.read("budget", q.budget);
    s.read_number("rel_tol", q.rel_tol);
    s.read("radial_nodes", q.radial_nodes);
    s.read("angular_nodes", q.angular_nodes);
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

inline RunConfig parse_config_text(const std::string& text) {
  detail::json j;
  try {
    j = detail::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

namespace detail {

inline json num(double v) {
  if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
  return json(v);
}

inline json kernel_json(const KernelConfig& k) {
  json j = json::object();
  j["family"] = k.family;
  for (const auto& key : allowed_kernel_keys(k.family)) {
    if (key == "alpha") j[key] = k.alpha;
    else if (key == "beta") j[key] = k.beta;
    else if (key == "alpha_expr") j[key] = k.alpha_expr;
    else if (key == "region") j[key] = k.region;
    else if (key == "min_jump") j[key] = k.min_jump;
    else if (key == "c") j[key] = k.c;
    else if (key == "support") j[key] = num(k.support);
    else if (key == "expr") j[key] = k.expr;
    else if (key == "symmetric") j[key] = k.symmetric;
    else if (key == "translation_invariant") j[key] = k.translation_invariant;
  }
  return j;
}

inline json field_json(const FieldConfig& f) {
  json j = json::object();
  j["family"] = f.family;
  for (const auto& key : allowed_field_keys(f.family)) {
    if (key == "alpha") j[key] = f.alpha;
    else if (key == "alpha_expr") j[key] = f.alpha_expr;
    else if (key == "phi_expr") j[key] = f.phi_expr;
    else if (key == "base_alpha") j[key] = f.base_alpha;
    else if (key == "expr") j[key] = f.expr;
    else if (key == "symmetric") j[key] = f.symmetric;
    else if (key == "finite_second_moment") j[key] = f.finite_second_moment;
    else if (key == "drift") j[key] = f.drift;
  }
  return j;
}

}  // namespace detail

/// Serializes every field; parse_config(to_json(c)) reproduces c.
inline detail::json to_json(const RunConfig& c) {
  using detail::json;
  json j = json::object();
  j["schema_version"] = c.schema_version;
  j["scheme"] = scheme_name(c.scheme);
  j["p"] = c.p ? json(*c.p) : json(nullptr);
  j["lattice"] = {{"d", c.d}, {"n", c.n_list.size() == 1 ? json(c.n_list[0]) : json(c.n_list)}, {"R_w", detail::num(c.R_w)},
                  {"stencil", c.stencil}};
  j["kernel"] = detail::kernel_json(c.kernel);
  j["field"] = detail::field_json(c.field);
  j["truncation"] = {{"radius", c.truncation_radius}};
  const auto& m = c.simulate;
  j["simulate"] = {{"T", m.T},
                   {"N_paths", m.N_paths},
                   {"seed", m.seed},
                   {"x0", m.x0},
                   {"marginal_times", m.marginal_times},
                   {"keep_paths", m.keep_paths},
                   {"traces", m.traces},
                   {"histogram_half_width", m.histogram_half_width},
                   {"histogram_bins", m.histogram_bins}};
  const auto& k = c.check;
  j["check"] = {{"discrete", k.discrete},
                {"rho", k.rho},
                {"rho_grid", k.rho_grid},
                {"r_grid", k.r_grid},
                {"eps_grid", k.eps_grid},
                {"R", k.R},
                {"probes", k.probes},
                {"probe_count", k.probe_count},
                {"bump_scales", k.bump_scales},
                {"growth_budget", k.growth_budget},
                {"tolerance", k.tolerance ? json(*k.tolerance) : json(nullptr)}};
  j["semigroup"] = {{"t", c.semigroup.t}, {"s", c.semigroup.s}, {"leak_threshold", c.semigroup.leak_threshold},
                    {"tol", c.semigroup.tol}};
  j["diagnostics"] = {{"xi", c.diagnostics.xi}, {"ks_bound", c.diagnostics.ks_bound},
                      {"reference", c.diagnostics.reference}};
  j["sweep"] = {{"semigroup", c.sweep.semigroup}, {"conditions", c.sweep.conditions},
                {"histograms", c.sweep.histograms}};
  const auto& q = c.quadrature;
  j["quadrature"] = {{"q", q.q},
                     {"eps_q", q.eps_q},
                     {"budget", q.budget},
                     {"rel_tol", q.rel_tol},
                     {"radial_nodes", q.radial_nodes},
                     {"angular_nodes", q.angular_nodes}};
  j["out"] = c.out;
  return j;
}

inline std::string default_config_text() { return to_json(RunConfig{}).dump(2) + "\n"; }

inline void RunConfig::validate() const {
  detail::require(d >= 1 && d <= 6, "lattice.d must be in [1, 6]");
  detail::require(!n_list.empty(), "lattice.n must be nonempty");
  for (int n : n_list) detail::require(n >= 1, "lattice.n entries must be >= 1");
  detail::require(R_w > 0.0 && std::isfinite(R_w), "lattice.R_w must be finite and > 0");
  if (p) detail::require(*p > 0.0 && *p <= 1.0, "p must be in (0, 1]");
  detail::require(truncation_radius > 0.0, "truncation.radius must be > 0");
  detail::require(simulate.T > 0.0 && std::isfinite(simulate.T), "simulate.T must be finite and > 0");
  detail::require(simulate.N_paths >= 1, "simulate.N_paths must be >= 1");
  detail::require(simulate.x0.empty() || simulate.x0.size() == static_cast<std::size_t>(d),
                  "simulate.x0 must have d coordinates");
  for (double t : simulate.marginal_times)
    detail::require(t >= 0.0 && t <= simulate.T, "simulate.marginal_times must lie in [0, T]");
  detail::require(simulate.histogram_half_width > 0.0, "simulate.histogram_half_width must be > 0");
  detail::require(simulate.histogram_bins >= 1, "simulate.histogram_bins must be >= 1");
  detail::require(check.rho > 0.0, "check.rho must be > 0");
  for (double r : check.rho_grid) detail::require(r > 0.0, "check.rho_grid entries must be > 0");
  for (double r : check.r_grid) detail::require(r > 0.0, "check.r_grid entries must be > 0");
  for (double e : check.eps_grid) detail::require(e > 0.0 && e < 1.0, "check.eps_grid entries must be in (0, 1)");
  detail::require(check.R > 0.0, "check.R must be > 0");
  for (const auto& x : check.probes)
    detail::require(x.size() == static_cast<std::size_t>(d), "check.probes entries must have d coordinates");
  for (double l : check.bump_scales) detail::require(l > 0.0, "check.bump_scales entries must be > 0");
  detail::require(check.growth_budget >= 1.0, "check.growth_budget must be >= 1");
  if (check.tolerance) detail::require(*check.tolerance > 0.0, "check.tolerance must be > 0");
  detail::require(semigroup.t >= 0.0, "semigroup.t must be >= 0");
  detail::require(semigroup.s > 0.0, "semigroup.s must be > 0");
  detail::require(semigroup.leak_threshold > 0.0, "semigroup.leak_threshold must be > 0");
  detail::require(semigroup.tol > 0.0 && semigroup.tol < 1.0, "semigroup.tol must be in (0, 1)");
  detail::require(diagnostics.ks_bound > 0.0 && diagnostics.ks_bound < 1.0, "diagnostics.ks_bound must be in (0, 1)");
  detail::require(diagnostics.reference == "auto" || diagnostics.reference == "cauchy" || diagnostics.reference == "none",
                  "diagnostics.reference must be auto, cauchy or none");
  detail::require(!out.empty(), "out must be nonempty");
  quadrature.validate();
  detail::allowed_kernel_keys(kernel.family);
  detail::allowed_field_keys(field.family);
  detail::require(kernel.region == "half_line" || kernel.region == "whole" || kernel.region == "empty",
                  "kernel.region must be half_line, whole or empty");
  detail::require(kernel.family != "expression" || !kernel.expr.empty(), "kernel.expr is required for expression kernels");
  detail::require(field.family != "expression" || !field.expr.empty(), "field.expr is required for expression fields");
}

/// Family default: 1/2 for the measure scheme; 0.99 min(1, 1/alpha_bar) for
/// stable-type Dirichlet kernels; 1 otherwise.
inline double RunConfig::resolved_p() const {
  if (p) return *p;
  if (scheme == Scheme::SemimartingaleMeasure) return 0.5;
  double abar = 0.0;
  if (kernel.family == "cauchy") abar = 1.0;
  else if (kernel.family == "stable") abar = kernel.alpha;
  else if (kernel.family == "levy_mix") abar = std::max(kernel.alpha, kernel.beta);
  else if (kernel.family == "stable_like") {
    const ScalarField a = detail::expression_scalar(kernel.alpha_expr, d);
    for (const auto& x : detail::default_probes(d)) abar = std::max(abar, a(x));
  }
  if (abar <= 0.0) return 1.0;
  return 0.99 * std::min(1.0, 1.0 / abar);
}

inline SimulationConfig RunConfig::simulation(std::uint64_t seed_override, bool override_seed) const {
  SimulationConfig s;
  s.T = simulate.T;
  s.n_paths = simulate.N_paths;
  s.seed = override_seed ? seed_override : simulate.seed;
  s.x0 = simulate.x0;
  s.marginal_times = simulate.marginal_times;
  s.keep_paths = simulate.keep_paths > 0;
  return s;
}

inline std::vector<Point> RunConfig::probe_points() const {
  if (!check.probes.empty()) return check.probes;
  if (check.probe_count > 0) {
    std::vector<Point> out;
    const std::size_t m = check.probe_count;
    for (std::size_t i = 0; i < m; ++i) {
      Point x(static_cast<std::size_t>(d), 0.0);
      x[0] = m == 1 ? 0.0 : -check.R + 2.0 * check.R * static_cast<double>(i) / static_cast<double>(m - 1);
      out.push_back(x);
    }
    return out;
  }
  return detail::default_probes(d);
}

inline JumpKernel make_kernel(const KernelConfig& k, int d) {
  if (k.family == "cauchy") return cauchy_kernel(d);
  if (k.family == "stable") return stable_kernel(k.alpha, d);
  if (k.family == "stable_like") return stable_like_kernel(detail::expression_scalar(k.alpha_expr, d), d);
  if (k.family == "levy_mix") {
    Region B = k.region == "whole" ? Region::whole() : (k.region == "empty" ? Region::empty() : Region::positive_half_line());
    if (B.kind == Region::Kind::HalfSpace) {
      B.normal.assign(static_cast<std::size_t>(d), 0.0);
      B.normal[0] = 1.0;
    }
    return levy_mix_kernel(k.alpha, k.beta, B, d, k.min_jump);
  }
  if (k.family == "constant") return constant_kernel(k.c, d, k.support);
  if (k.family == "expression") return expression_kernel(k.expr, d, k.symmetric, k.translation_invariant);
  throw ConfigError("unknown kernel.family '" + k.family + "'");
}

inline LevyMeasureField make_field(const FieldConfig& f, int d) {
  if (f.family == "cauchy") return cauchy_field(d);
  if (f.family == "stable") return stable_field(f.alpha, d);
  if (f.family == "stable_like") return stable_like_field(detail::expression_scalar(f.alpha_expr, d), d);
  if (f.family == "sde") return sde_field(detail::expression_scalar(f.phi_expr, d), stable_field(f.base_alpha, d));
  if (f.family == "expression") {
    LevyMeasureField out = expression_field(f.expr, d, f.symmetric, f.drift);
    out.finite_second_moment = f.finite_second_moment;
    return out;
  }
  throw ConfigError("unknown field.family '" + f.family + "'");
}

/// Builds the conductances of the configured scheme on the lattice (n, d, R_w).
inline ConductanceMatrix build_from_config(const RunConfig& c, int n) {
  const LatticePtr lat = make_lattice(n, c.d, c.R_w);
  BuildOptions opt;
  opt.allow_stencil = c.stencil;
  if (c.scheme == Scheme::DirichletAverage)
    return build_dirichlet_conductances(make_kernel(c.kernel, c.d), lat, c.resolved_p(), c.quadrature, opt);
  return build_measure_conductances(make_field(c.field, c.d), lat, c.resolved_p(), c.quadrature, opt);
}

/// Exact marginal reference when the limit is the Cauchy process. Its first
/// coordinate is Cauchy(t) in every dimension.
inline bool cauchy_reference(const RunConfig& c) {
  if (c.diagnostics.reference == "none") return false;
  if (c.diagnostics.reference == "cauchy") return true;
  if (c.scheme == Scheme::DirichletAverage)
    return c.kernel.family == "cauchy" || (c.kernel.family == "stable" && c.kernel.alpha == 1.0);
  return c.field.family == "cauchy" || (c.field.family == "stable" && c.field.alpha == 1.0);
}

}  // namespace jumpchain
