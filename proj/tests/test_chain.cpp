#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "jumpchain/chain.hpp"
#include "jumpchain/diagnostics.hpp"
#include "jumpchain/parallel.hpp"

using namespace jumpchain;

namespace {

using T = ConductanceMatrix::Triplet;

ConductanceMatrix ring(double r1, double r2, double r3) {
  auto lat = make_lattice(1, 1, 4.0);
  std::vector<T> t;
  for (std::size_t a = 0; a < 9; ++a) {
    t.push_back({a, (a + 1) % 9, r1});
    t.push_back({a, (a + 8) % 9, r2});
    t.push_back({a, (a + 2) % 9, r3});
  }
  return ConductanceMatrix::from_triplets(lat, Scheme::DirichletAverage, 1.0, t);
}

}  // namespace

TEST(Chain, HoldingTimesAreExponential) {
  const double lam = 2.5;
  auto lat = make_lattice(1, 1, 1.0);
  const ConductanceMatrix C = ConductanceMatrix::from_triplets(lat, Scheme::DirichletAverage, 1.0, {{1, 2, lam}});
  SimulationConfig cfg;
  cfg.T = 50.0;
  cfg.n_paths = 10000;
  cfg.seed = 11;
  std::vector<double> hold;
  for (std::size_t i = 0; i < cfg.n_paths; ++i) {
    const PathSample p = simulate_path(C, cfg, i);
    ASSERT_EQ(p.times.size(), 1u);
    EXPECT_EQ(p.states.back(), 2u);
    hold.push_back(p.times[0]);
  }
  double m = 0.0;
  for (double h : hold) m += h / static_cast<double>(hold.size());
  EXPECT_NEAR(m, 1.0 / lam, 3.0 / lam / std::sqrt(static_cast<double>(hold.size())));
  EXPECT_GT(ks_against_exponential(hold, lam).p_value, 0.01);
}

TEST(Chain, TwoStateOccupation) {
  const double lam = 3.0, mu = 1.0;
  auto lat = make_lattice(1, 1, 1.0);
  const ConductanceMatrix C = ConductanceMatrix::from_triplets(lat, Scheme::DirichletAverage, 1.0, {{1, 2, lam}, {2, 1, mu}});
  SimulationConfig cfg;
  cfg.T = 20000.0;
  const PathSample p = simulate_path(C, cfg, 0);
  double in_center = 0.0, last = 0.0;
  for (std::size_t j = 0; j <= p.times.size(); ++j) {
    const double end = j < p.times.size() ? p.times[j] : cfg.T;
    if (p.states[j] == 1) in_center += end - last;
    last = end;
  }
  EXPECT_NEAR(in_center / cfg.T, mu / (lam + mu), 0.01);
}

TEST(Chain, ConstantRateCountsArePoisson) {
  const ConductanceMatrix C = ring(1.5, 1.0, 0.5);
  SimulationConfig cfg;
  cfg.T = 2.0;
  cfg.n_paths = 10000;
  cfg.seed = 4;
  const EnsembleSummary s = simulate_ensemble(C, cfg);
  EXPECT_EQ(s.absorbed_fraction, 0.0);
  const ChiSquareResult r = chi_square_poisson(s.jump_counts, 3.0 * cfg.T);
  EXPECT_GT(r.p_value, 0.01) << r.statistic;
}

TEST(Chain, ReproducibleAcrossThreadCounts) {
  auto lat = make_lattice(4, 1, 8.0);
  const ConductanceMatrix C = build_dirichlet_conductances(cauchy_kernel(), lat, 1.0, QuadratureSpec{});
  SimulationConfig cfg;
  cfg.n_paths = 500;
  cfg.seed = 99;
  cfg.marginal_times = {0.25, 1.0};
  const std::size_t saved = thread_count();
  set_thread_count(1);
  const EnsembleSummary a = simulate_ensemble(C, cfg);
  set_thread_count(4);
  const EnsembleSummary b = simulate_ensemble(C, cfg);
  set_thread_count(saved);
  std::ostringstream oa, ob;
  write_marginals_csv(oa, a);
  write_marginals_csv(ob, b);
  EXPECT_EQ(oa.str(), ob.str());
  cfg.n_paths = 1;
  const EnsembleSummary one = simulate_ensemble(C, cfg);
  const PathSample p = simulate_path(C, cfg, 0);
  EXPECT_EQ(one.jump_counts[0], p.jumps());
  const auto st = p.state_at(1.0);
  if (st >= 0) {
    EXPECT_EQ(one.marginals[1][0], lat->point(static_cast<std::size_t>(st))[0]);
  }
}

TEST(Chain, MarginalAtZeroIsInitial) {
  const ConductanceMatrix C = ring(1.0, 1.0, 1.0);
  SimulationConfig cfg;
  cfg.n_paths = 2000;
  cfg.marginal_times = {0.0};
  cfg.x0 = {1.2};
  const EnsembleSummary s = simulate_ensemble(C, cfg);
  for (double x : s.component(0)) EXPECT_EQ(x, 1.0);

  cfg.initial_density = [](std::span<const double> x) { return std::abs(x[0]) < 1.5 ? 1.0 : 0.0; };
  const EnsembleSummary u = simulate_ensemble(C, cfg);
  std::vector<int> hits(3, 0);
  for (double x : u.component(0)) {
    ASSERT_TRUE(x == -1.0 || x == 0.0 || x == 1.0) << x;
    ++hits[static_cast<std::size_t>(x + 1.0)];
  }
  for (int h : hits) EXPECT_NEAR(h, 2000 / 3.0, 120);
}

TEST(Chain, AbsorptionIsFlagged) {
  auto lat = make_lattice(1, 1, 1.0);
  const ConductanceMatrix C = ConductanceMatrix::from_triplets(lat, Scheme::DirichletAverage, 1.0, {}, {0.0, 5.0, 0.0});
  SimulationConfig cfg;
  cfg.n_paths = 100;
  const EnsembleSummary s = simulate_ensemble(C, cfg);
  EXPECT_GT(s.absorbed_fraction, 0.95);
  EXPECT_EQ(s.unknown_exits, static_cast<std::size_t>(s.absorbed_fraction * 100 + 0.5));
  for (double x : s.component(0)) EXPECT_TRUE(std::isnan(x) || x == 0.0);
}

TEST(Chain, StencilExitsAreKnown) {
  auto lat = make_lattice(2, 1, 1.0);
  const ConductanceMatrix C = build_dirichlet_conductances(cauchy_kernel(), lat, 1.0, QuadratureSpec{});
  SimulationConfig cfg;
  cfg.n_paths = 200;
  cfg.T = 5.0;
  const EnsembleSummary s = simulate_ensemble(C, cfg);
  EXPECT_GT(s.absorbed_fraction, 0.5);
  EXPECT_LT(s.unknown_exits, s.n_paths());
  for (double x : s.component(0))
    if (!std::isnan(x) && std::abs(x) > 1.0) {
      EXPECT_EQ(x * 2.0, std::round(x * 2.0));
    }
}

TEST(Chain, TraceWithoutJumps) {
  auto lat = make_lattice(4, 1, 4.0);
  const ConductanceMatrix C = build_dirichlet_conductances(levy_mix_kernel(0.5, 1.5, Region{}, 1, 0.25), lat, 1.0, QuadratureSpec{});
  PathSample p;
  p.horizon = 2.0;
  p.initial = static_cast<std::size_t>(lat->locate(std::vector<double>{0.0}));
  p.states = {p.initial};
  const TruncationFunction h{1.0};
  const RowFunctional rf = row_functional(C, p.initial, h);
  const CharacteristicsTrace tr = characteristics_along_path(p, C, h);
  EXPECT_EQ(tr.times.size(), 64u);
  EXPECT_NEAR(tr.b(63, 0), 2.0 * rf.b[0], 1e-12 * std::abs(rf.b[0]));
  EXPECT_NEAR(tr.a(63, 0, 0), 2.0 * rf.a[0], 1e-12 * rf.a[0]);
  EXPECT_GT(std::abs(rf.b[0]), 1e-3);
}

TEST(Chain, SymmetricRowHasNoDrift) {
  auto lat = make_lattice(4, 1, 8.0);
  const ConductanceMatrix C = build_dirichlet_conductances(cauchy_kernel(), lat, 1.0, QuadratureSpec{});
  const RowFunctional rf = row_functional(C, static_cast<std::size_t>(lat->locate(std::vector<double>{0.0})), TruncationFunction{1.0});
  EXPECT_NEAR(rf.b[0], 0.0, 1e-12);
  EXPECT_GT(rf.a[0], 0.0);
}

TEST(Chain, SingleJumpTraceMatchesRiemannSum) {
  auto lat = make_lattice(4, 1, 4.0);
  const ConductanceMatrix C = build_dirichlet_conductances(levy_mix_kernel(0.5, 1.5, Region{}, 1, 0.25), lat, 1.0, QuadratureSpec{});
  const std::size_t a = static_cast<std::size_t>(lat->locate(std::vector<double>{0.0}));
  const std::size_t b = static_cast<std::size_t>(lat->locate(std::vector<double>{1.5}));
  PathSample p;
  p.horizon = 1.0;
  p.initial = a;
  p.states = {a, b};
  p.times = {0.3};
  const TruncationFunction h{1.0};
  const CharacteristicsTrace tr = characteristics_along_path(p, C, h, {0.0, 0.3, 1.0}, {0.5, 2.0});
  const RowFunctional fa = row_functional(C, a, h), fb = row_functional(C, b, h);
  EXPECT_NEAR(tr.b(2, 0), 0.3 * fa.b[0] + 0.7 * fb.b[0], 1e-12);
  EXPECT_NEAR(tr.a(2, 0, 0), 0.3 * fa.a[0] + 0.7 * fb.a[0], 1e-12);
  EXPECT_EQ(tr.count(0, 0), 0u);
  EXPECT_EQ(tr.count(2, 0), 1u);
  EXPECT_EQ(tr.count(2, 1), 0u);
  // Riemann oracle with midpoints.
  double riem = 0.0;
  const int steps = 100000;
  for (int i = 0; i < steps; ++i) {
    const double t = (i + 0.5) / steps;
    riem += (t < 0.3 ? fa.b[0] : fb.b[0]) / steps;
  }
  EXPECT_NEAR(tr.b(2, 0), riem, 1e-6);
}

TEST(Chain, TraceIsAdditive) {
  auto lat = make_lattice(4, 1, 6.0);
  const ConductanceMatrix C = build_dirichlet_conductances(levy_mix_kernel(0.5, 1.5, Region{}, 1, 0.25), lat, 1.0, QuadratureSpec{});
  SimulationConfig cfg;
  cfg.T = 2.0;
  cfg.seed = 5;
  PathSample p = simulate_path(C, cfg, 3);
  for (std::uint64_t i = 4; p.times.size() < 2 || p.absorbed; ++i) p = simulate_path(C, cfg, i);
  const double s = 0.5 * (p.times[0] + p.times[1]);
  const TruncationFunction h{1.0};
  const CharacteristicsTrace whole = characteristics_along_path(p, C, h, {s, cfg.T});
  // Path restarted at s.
  PathSample q;
  q.horizon = cfg.T - s;
  q.initial = p.states[1];
  q.states.assign(p.states.begin() + 1, p.states.end());
  for (std::size_t j = 1; j < p.times.size(); ++j) q.times.push_back(p.times[j] - s);
  const CharacteristicsTrace rest = characteristics_along_path(q, C, h, {q.horizon});
  EXPECT_NEAR(whole.b(1, 0), whole.b(0, 0) + rest.b(0, 0), 1e-10);
  EXPECT_NEAR(whole.a(1, 0, 0), whole.a(0, 0, 0) + rest.a(0, 0, 0), 1e-10);
}

TEST(Chain, PathCsv) {
  auto lat = make_lattice(2, 1, 1.0);
  PathSample p;
  p.states = {2, 3};
  p.times = {0.5};
  p.horizon = 1.0;
  std::ostringstream os;
  write_path_csv(os, p, *lat);
  EXPECT_EQ(os.str(), "time,x1,absorbed\n0,0,0\n0.5,0.5,0\n");
}
