// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "jumpchain/jumpchain.hpp"

using namespace jumpchain;

namespace {

using T = ConductanceMatrix::Triplet;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3g", v);
  return b;
}

LatticeFunction random_fn(const LatticePtr& lat, std::mt19937_64& g, bool positive = false) {
  std::normal_distribution<double> nd;
  LatticeFunction f(lat);
  for (auto& v : f.values) v = positive ? std::abs(nd(g)) : nd(g);
  return f;
}

// Random sparse rate matrix on 101 states, 4 targets per row.
ConductanceMatrix random_system(std::mt19937_64& g, bool leaky) {
  auto lat = make_lattice(1, 1, 50.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, lat->size() - 1);
  std::vector<T> t;
  for (std::size_t a = 0; a < lat->size(); ++a) {
    std::vector<std::size_t> cols;
    while (cols.size() < 4) {
      const std::size_t b = pick(g);
      if (b != a && std::find(cols.begin(), cols.end(), b) == cols.end()) cols.push_back(b);
    }
    for (std::size_t b : cols) t.push_back({a, b, 3.0 * u(g)});
  }
  std::vector<double> lost(lat->size(), 0.0);
  if (leaky)
    for (auto& l : lost) l = u(g) < 0.3 ? u(g) : 0.0;
  return ConductanceMatrix::from_triplets(lat, Scheme::DirichletAverage, 1.0, t, lost);
}

ConductanceMatrix toy3() {
  auto lat = make_lattice(1, 1, 1.0);
  return ConductanceMatrix::from_triplets(lat, Scheme::DirichletAverage, 1.0,
                                          {{0, 1, 2.0}, {0, 2, 1.0}, {1, 2, 1.0}, {2, 0, 1.0}, {2, 1, 1.0}});
}

ConductanceMatrix ring9() {
  auto lat = make_lattice(1, 1, 4.0);
  std::vector<T> t;
  for (std::size_t a = 0; a < 9; ++a) {
    t.push_back({a, (a + 1) % 9, 3.0});
    t.push_back({a, (a + 8) % 9, 1.0});
    t.push_back({a, (a + 2) % 9, 0.5});
  }
  return ConductanceMatrix::from_triplets(lat, Scheme::DirichletAverage, 1.0, t);
}

RunConfig config_file(const std::string& name) { return load_config(std::string(JUMPCHAIN_CONFIG_DIR) + "/" + name); }

Outcome operator_identities() {
  std::mt19937_64 g(101);
  std::uniform_int_distribution<int> pick_n(1, 8), pick_d(1, 2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double e1 = 0.0, e2 = 0.0, e3 = 0.0;
  for (int c = 0; c < 100; ++c) {
    const int d = pick_d(g), n = pick_n(g);
    auto lat = make_lattice(n, d, d == 1 ? 3.0 : 1.0);
    const LatticeFunction fn = random_fn(lat, g);
    // r_n e_n f_n = f_n
    const LatticeFunction back = restrict_fn(extend(fn), lat);
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < fn.size(); ++i) {
      diff = std::max(diff, std::abs(back[i] - fn[i]));
      scale = std::max(scale, std::abs(fn[i]));
    }
    e1 = std::max(e1, diff / scale);
    // ||e_n f_n||_{L^2} = ||f_n||_{L^2_n}
    const double a = std::sqrt(l2_norm2_extension(fn)), b = l2n_norm(fn);
    e2 = std::max(e2, std::abs(a - b) / b);
    // <r_n f, g_n> = <f, e_n g_n> for a cubic supported on the window cells
    const double c0 = u(g), c1 = u(g), c2 = u(g), c3 = u(g);
    const double edge = (static_cast<double>(lat->kmax()) + 0.5) / n;
    auto f = [=](std::span<const double> x) {
      double v = 1.0;
      for (double xi : x) {
        if (std::abs(xi) >= edge) return 0.0;
        v *= c0 + xi * (c1 + xi * (c2 + xi * c3));
      }
      return v;
    };
    const LatticeFunction gn = random_fn(lat, g);
    const double lhs = l2n_inner(restrict_fn(f, lat), gn), rhs = l2_inner_extension(f, gn);
    e3 = std::max(e3, std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs)));
  }
  const bool ok = e1 < 1e-10 && e2 < 1e-10 && e3 < 1e-10;
  return {ok, "max rel err r_n e_n " + num(e1) + ", isometry " + num(e2) + ", adjoint " + num(e3)};
}

Outcome duality() {
  std::mt19937_64 g(202);
  std::vector<ConductanceMatrix> toys{toy3(), ring9(), random_system(g, false), random_system(g, false)};
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    const ConductanceMatrix& C = toys[static_cast<std::size_t>(c) % toys.size()];
    auto lat = C.lattice_ptr();
    const LatticeFunction f = random_fn(lat, g), h = random_fn(lat, g);
    LatticeFunction Af = apply_generator(C, f);
    for (auto& v : Af.values) v = -v;
    const double lhs = form_H(C, f, h).value, rhs = l2n_inner(Af, h);
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs)));
  }
  return {worst < 1e-10, "max rel err " + num(worst) + " over 100 pairs on windows of 3 to 101 states"};
}

Outcome comparison() {
  std::mt19937_64 g(303);
  int violations = 0, cases = 0;
  std::string alphas;
  for (const ConductanceMatrix& C : {toy3(), ring9(), random_system(g, true)}) {
    const SplitMatrix S = split_symmetric(C);
    alphas += (alphas.empty() ? "" : ", ") + num(alpha0_n(S));
    for (int c = 0; c < 100; ++c, ++cases) {
      const ComparisonReport r = comparison_check(S, random_fn(S.lattice, g));
      if (r.degenerate || !r.ok()) ++violations;
    }
  }
  return {violations == 0, std::to_string(violations) + " violations in " + std::to_string(cases) + " cases, alpha0^n = " + alphas};
}

Outcome alpha0_monotone() {
  const JumpKernel k = levy_mix_kernel(0.5, 1.5, Region::positive_half_line(), 1);
  QuadratureSpec q;
  std::vector<Point> probes;
  for (int i = -4; i <= 4; ++i) probes.push_back(Point{0.25 * i});
  const Alpha0Estimate est = alpha0_estimate(k, probes, q);
  bool ok = est.value > 0.0;
  std::string vals;
  for (int n : {2, 4, 8, 16}) {
    auto lat = make_lattice(n, 1, 64.0);
    const double a = alpha0_n(build_dirichlet_conductances(k, lat, 0.66, q));
    ok = ok && a <= 1.05 * est.value;
    vals += (vals.empty() ? "" : ", ") + num(a);
  }
  return {ok, "alpha0^n (n = 2..16) " + vals + " against estimate " + num(est.value)};
}

Outcome simulation_exactness() {
  const double lam = 2.5;
  auto lat = make_lattice(1, 1, 1.0);
  const ConductanceMatrix one = ConductanceMatrix::from_triplets(lat, Scheme::DirichletAverage, 1.0, {{1, 2, lam}});
  SimulationConfig cfg;
  cfg.T = 50.0;
  cfg.n_paths = 10000;
  cfg.seed = 11;
  std::vector<double> hold;
  for (std::size_t i = 0; i < cfg.n_paths; ++i) {
    const PathSample p = simulate_path(one, cfg, i);
    if (!p.times.empty()) hold.push_back(p.times[0]);
  }
  const KSResult ks = ks_against_exponential(hold, lam);

  auto ring_lat = make_lattice(1, 1, 4.0);
  std::vector<T> t;
  for (std::size_t a = 0; a < 9; ++a) {
    t.push_back({a, (a + 1) % 9, 1.5});
    t.push_back({a, (a + 8) % 9, 1.0});
    t.push_back({a, (a + 2) % 9, 0.5});
  }
  const ConductanceMatrix ring = ConductanceMatrix::from_triplets(ring_lat, Scheme::DirichletAverage, 1.0, t);
  cfg.T = 2.0;
  cfg.seed = 4;
  const EnsembleSummary s = simulate_ensemble(ring, cfg);
  const ChiSquareResult chi = chi_square_poisson(s.jump_counts, 3.0 * cfg.T);
  const bool ok = hold.size() == cfg.n_paths && ks.p_value > 0.01 && chi.p_value > 0.01;
  return {ok, "holding-time KS p " + num(ks.p_value) + ", Poisson chi-square p " + num(chi.p_value) + " (10^4 paths)"};
}

std::string sweep_csv(const RunConfig& cfg, SweepResult& r) {
  std::ostringstream os;
  r = convergence_sweep(cfg, &os);
  for (const auto& m : r.marginals) os << m;
  for (const auto& h : r.histograms) os << h;
  return os.str();
}

Outcome cauchy_end_to_end(std::string* csv) {
  const RunConfig cfg = config_file("cauchy_dirichlet.json");
  SweepResult r;
  const std::string text = sweep_csv(cfg, r);
  if (csv) *csv = text;
  const SweepRow& last = r.rows.back();
  bool absorbed = true;
  std::string ks;
  for (const auto& row : r.rows) {
    absorbed = absorbed && row.absorbed_fraction < 0.01;
    ks += (ks.empty() ? "" : ", ") + num(row.ks);
  }
  const bool ok = r.has_reference && last.n == 32 && last.cf_within_ci && last.ks < 0.05 && r.ks_decreasing && absorbed;
  return {ok, "KS over n = 8, 16, 32: " + ks + " (noise floor " + num(r.noise_floor) + "), CF sup " + num(last.cf_sup) +
                  (last.cf_within_ci ? " within" : " outside") + " 99% CI at n = 32, absorbed " + num(last.absorbed_fraction)};
}

Outcome strong_semigroup() {
  std::vector<double> err;
  double leak = 0.0;
  for (int n : {4, 8, 16, 32}) {
    auto lat = make_lattice(n, 1, 64.0);
    const ConductanceMatrix C = build_dirichlet_conductances(cauchy_kernel(), lat, 1.0, QuadratureSpec{});
    const SemigroupError e = cauchy_strong_error(C, 1.0, 0.5);
    err.push_back(e.error);
    leak = e.leakage;
  }
  std::string vals;
  for (double e : err) vals += (vals.empty() ? "" : ", ") + num(e);
  const bool ok = strictly_decreasing(err) && err.back() < 0.02 && leak < 1e-3;
  return {ok, "L2 error over n = 4..32: " + vals + ", leakage " + num(leak)};
}

Outcome characteristics() {
  const RunConfig cfg = config_file("cauchy_measure.json");
  const LevyMeasureField f = make_field(cfg.field, cfg.d);
  const auto probes = cfg.probe_points();
  std::vector<double> rel;
  for (int n : {4, 8, 16, 32}) {
    const ConductanceMatrix C = build_from_config(cfg, n);
    const auto reps = check_semimartingale_route(f, C, TruncationFunction{cfg.truncation_radius}, cfg.check.R, probes, cfg.quadrature);
    double worst = 0.0;
    for (const auto& r : reps)
      if (r.id == "C5.S")
        for (const auto& e : r.entries)
          if (e.quantity == "sup_truncated_second_moment_discrepancy" && std::isfinite(e.target) && e.target != 0.0)
            worst = std::max(worst, e.value / std::abs(e.target));
    rel.push_back(worst);
  }
  std::string vals;
  for (double v : rel) vals += (vals.empty() ? "" : ", ") + num(100.0 * v) + "%";
  const bool ok = probes.size() == 25 && strictly_decreasing(rel) && rel.back() < 0.05;
  return {ok, "sup discrepancy / target over n = 4..32: " + vals};
}

Outcome truncated_form() {
  // 1/2 of the integral over [-2,2]^2, |x-y| > 1/2, of (tent(y) - tent(x))^2 / (pi (x-y)^2).
  const double oracle = 0.38608519592346440;
  auto tent = [](std::span<const double> x) { return std::max(0.0, 1.0 - std::abs(x[0])); };
  const JumpKernel k = cauchy_kernel();
  QuadratureSpec q;
  auto lat = make_lattice(16, 1, 3.0);
  const ConductanceMatrix C = build_dirichlet_conductances(k, lat, 1.0, q);
  const TruncatedForms t = truncated_form_compare(k, C, tent, 2.0, 0.5, q, {-1.0, 0.0, 1.0});
  const double rel = std::abs(t.discrete - oracle) / oracle;
  return {rel < 0.05 && std::abs(t.continuous - oracle) < 1e-8,
          "discrete " + num(t.discrete) + " vs oracle " + num(oracle) + ", rel err " + num(rel)};
}

Outcome uniformization() {
  const double lam = 2.0, mu = 0.7;
  auto lat = make_lattice(1, 1, 1.0);
  const ConductanceMatrix C = ConductanceMatrix::from_triplets(lat, Scheme::DirichletAverage, 1.0, {{0, 1, lam}, {1, 0, mu}});
  const GeneratorOperator G(C);
  LatticeFunction f(lat);
  f.values = {1.3, -0.4, 5.0};
  double closed = 0.0;
  for (double t : {0.01, 0.3, 1.0, 4.0, 400.0}) {
    const LatticeFunction p = apply_semigroup(G, f, t, 1e-13);
    const double s = lam + mu, e = std::exp(-s * t);
    const double eq = (mu * f.values[0] + lam * f.values[1]) / s;
    closed = std::max({closed, std::abs(p.values[0] - (eq + e * lam / s * (f.values[0] - f.values[1]))),
                       std::abs(p.values[1] - (eq - e * mu / s * (f.values[0] - f.values[1]))), std::abs(p.values[2] - 5.0)});
  }
  std::mt19937_64 g(1010);
  const double tol = 1e-11;
  int broken = 0;
  for (int c = 0; c < 10; ++c) {
    const ConductanceMatrix R = random_system(g, c % 2 == 1);
    const GeneratorOperator H(R);
    auto rl = R.lattice_ptr();
    const LatticeFunction h = random_fn(rl, g);
    const LatticeFunction a = apply_semigroup(H, apply_semigroup(H, h, 0.4, tol), 0.9, tol);
    const LatticeFunction b = apply_semigroup(H, h, 1.3, tol);
    double sf = 0.0, sp = 0.0, gap = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
      sf = std::max(sf, std::abs(h.values[i]));
      sp = std::max(sp, std::abs(b.values[i]));
      gap = std::max(gap, std::abs(a.values[i] - b.values[i]));
    }
    const LatticeFunction pos = apply_semigroup(H, random_fn(rl, g, true), 0.7, tol);
    double neg = 0.0;
    for (double v : pos.values) neg = std::min(neg, v);
    const LatticeFunction one = apply_semigroup(H, LatticeFunction(rl, 1.0), 0.7, tol);
    double over = 0.0;
    for (double v : one.values) over = std::max(over, v - 1.0);
    if (gap > 3 * tol || sp > sf + tol || neg < -tol || over > tol) ++broken;
  }
  return {closed < 1e-8 && broken == 0,
          "2x2 max err " + num(closed) + ", invariant violations " + std::to_string(broken) + " of 10 systems (101 states)"};
}

Outcome determinism(const std::string& first) {
  const std::size_t saved = thread_count();
  set_thread_count(std::max<std::size_t>(2, saved));
  std::string second;
  cauchy_end_to_end(&second);
  set_thread_count(saved);
  const bool ok = !first.empty() && first == second;
  return {ok, std::to_string(first.size()) + " bytes of sweep, marginal and histogram CSV " + (ok ? "identical" : "differ")};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double budget;  // seconds
    std::function<Outcome()> run;
  };
  std::string c6_csv;
  const std::vector<Criterion> list{
      {"operator identities", 5, operator_identities},
      {"form duality", 5, duality},
      {"comparison sandwiches", 5, comparison},
      {"alpha0 monotonicity", 120, alpha0_monotone},
      {"simulation exactness", 30, simulation_exactness},
      {"Cauchy end-to-end", 300, [&] { return cauchy_end_to_end(&c6_csv); }},
      {"strong semigroup convergence", 180, strong_semigroup},
      {"characteristics convergence", 180, characteristics},
      {"truncated-form convergence", 120, truncated_form},
      {"uniformization", 10, uniformization},
      {"determinism", 300, [&] { return determinism(c6_csv); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = list[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (sec > list[i].budget) {
      o.pass = false;
      o.detail += "; over the " + num(list[i].budget) + " s budget";
    }
    if (!o.pass) ++failed;
    std::printf("%s %2zu %s: %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", i + 1, list[i].name, o.detail.c_str(), sec);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(list.size()) - failed, list.size());
  return failed == 0 ? 0 : 1;
}
