#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "jumpchain/conditions.hpp"
#include "jumpchain/diagnostics.hpp"

using namespace jumpchain;

namespace {
constexpr double kPi = std::numbers::pi;
const double kBump05 = 0.218360554791188497;  // (2/pi) * int g_l(r) / r^2 dr at l = 0.5
}  // namespace

TEST(Conditions, ZeroMatrixGivesZero) {
  auto lat = make_lattice(2, 1, 4.0);
  const ConductanceMatrix C = ConductanceMatrix::from_triplets(lat, Scheme::DirichletAverage, 1.0, {});
  const auto r = check_T3toT6(C, 1.0, {1.0, 2.0});
  ASSERT_EQ(r.size(), 4u);
  for (const auto& rep : r)
    for (const auto& e : rep.entries) EXPECT_EQ(e.value, 0.0) << rep.id;
}

TEST(Conditions, SymmetricFirstMomentVanishes) {
  auto lat = make_lattice(4, 1, 8.0);
  const ConductanceMatrix C = build_dirichlet_conductances(cauchy_kernel(), lat, 1.0, QuadratureSpec{});
  const auto r = check_T3toT6(C, 1.0, {1.0, 2.0, 4.0});
  EXPECT_NEAR(r[2].value("sup_abs_first_moment_lt_rho"), 0.0, 1e-12);
  EXPECT_GT(r[3].value("sup_abs_second_moment_lt_rho"), 0.0);
  EXPECT_EQ(r[1].verdict, "trend-ok");
}

TEST(Conditions, CauchyRowTailAtUnitSpacing) {
  // n = 1: jumps beyond rho = 2 start at offset 3, whose cell pairs begin at
  // distance 2; the cell-averaged mass is (2/pi) ln(3/2) per side pair.
  auto lat = make_lattice(1, 1, 8.0);
  const ConductanceMatrix C = build_dirichlet_conductances(cauchy_kernel(), lat, 1.0, QuadratureSpec{});
  const auto r = check_T3toT6(C, 2.0, {});
  EXPECT_NEAR(r[0].value("sup_row_sum_jumps_gt_rho"), 2.0 / kPi * std::log(1.5), 1e-8);
}

TEST(Conditions, DirichletRouteCauchy) {
  RouteOptions opt;
  opt.rho_grid = {1.0, 2.0};
  const auto r = check_dirichlet_route(cauchy_kernel(), {}, QuadratureSpec{}, opt);
  ASSERT_EQ(r.size(), 4u);
  for (const auto& e : r[0].select("sup_tail_rho")) EXPECT_NEAR(e.value, 2.0 / (kPi * e.rho), 1e-10);
  EXPECT_EQ(r[0].verdict, "pass");
  EXPECT_EQ(r[1].verdict, "trend-ok");
  // Symmetric kernel: the first-moment annulus integral vanishes.
  for (const auto& e : r[2].select("sup_abs_first_moment_annulus")) EXPECT_NEAR(e.value, 0.0, 1e-9);
  EXPECT_EQ(r[2].verdict, "trend-ok");
  // Second moment over eps < |z| < rho is (2/pi)(rho - eps).
  for (const auto& e : r[3].select("sup_abs_second_moment_annulus"))
    EXPECT_NEAR(e.value, 2.0 / kPi * (e.rho - e.eps), 1e-8);
}

TEST(Conditions, C3AndC4ForCauchy) {
  auto lat = make_lattice(8, 1, 16.0);
  const ConductanceMatrix C = build_dirichlet_conductances(cauchy_kernel(), lat, 1.0, QuadratureSpec{});
  const auto r = check_C2_C3_C4(cauchy_kernel(), C, {1.0}, {}, QuadratureSpec{});
  EXPECT_EQ(r[0].verdict, "fail");
  EXPECT_NE(r[0].note.find("symmetric"), std::string::npos);
  // Radial quadrature skips |z| < eps_q, worth (2/pi) eps_q here.
  EXPECT_NEAR(r[1].value("sup_int_min1_sq_ks"), 4.0 / kPi, QuadratureSpec{}.eps_q);
  EXPECT_EQ(r[2].verdict, "pass");
  EXPECT_LE(r[2].value("sup_sum_min1_sq_Cs"), r[2].value("c3_bound"));
}

TEST(Conditions, C4BoundInfiniteOnCoarseLattice) {
  auto lat = make_lattice(1, 1, 8.0);
  const ConductanceMatrix C = build_dirichlet_conductances(cauchy_kernel(), lat, 1.0, QuadratureSpec{});
  const auto r = check_C2_C3_C4(cauchy_kernel(), C, {1.0}, {}, QuadratureSpec{});
  EXPECT_TRUE(std::isinf(r[2].value("c3_bound")));
}

TEST(Conditions, NonsymmetricAlpha0Stabilizes) {
  // Stabilizes once the cutoff 2/n is below the asymmetric jump scale 0.25.
  const JumpKernel k = levy_mix_kernel(0.5, 1.5, Region{}, 1, 0.25);
  std::vector<double> a;
  for (int n : {8, 16, 32}) {
    const ConductanceMatrix C = build_dirichlet_conductances(k, make_lattice(n, 1, 4.0), 1.0, QuadratureSpec{});
    const auto r = check_C2_C3_C4(k, C, {1.0}, {}, QuadratureSpec{});
    EXPECT_EQ(r[0].verdict, "pass");
    a.push_back(r[0].value("alpha0_n"));
  }
  EXPECT_LT(std::abs(a[2] - a[1]), 0.2 * a[1]);
}

TEST(Conditions, SemimartingaleCauchyBumps) {
  const LevyMeasureField f = cauchy_field();
  const QuadratureSpec quad;
  std::vector<double> err;
  for (int n : {4, 8, 16}) {
    const ConductanceMatrix C = build_measure_conductances(f, make_lattice(n, 1, 32.0), 1.0, quad);
    const auto r = check_semimartingale_route(f, C, TruncationFunction{1.0}, 1.0, {}, quad);
    ASSERT_EQ(r.size(), 3u);
    EXPECT_EQ(r[0].id, "C4.S");
    EXPECT_NEAR(r[0].value("sup_drift_discrepancy"), 0.0, 1e-12);
    for (const auto& e : r[2].select("sup_bump_discrepancy"))
      if (e.r == 0.5) {
        EXPECT_NEAR(e.target, kBump05, 1e-8);
      }
    err.push_back(r[1].value("sup_truncated_second_moment_discrepancy"));
  }
  EXPECT_TRUE(strictly_decreasing(err)) << err[0] << ' ' << err[1] << ' ' << err[2];
}

TEST(Conditions, SdeFieldBumpTargetScales) {
  auto phi = [](std::span<const double> x) { return 1.0 + 0.5 * std::sin(x[0]); };
  const LevyMeasureField f = sde_field(phi, cauchy_field());
  const QuadratureSpec quad;
  const ConductanceMatrix C = build_measure_conductances(f, make_lattice(4, 1, 16.0), 1.0, quad);
  SemimartingaleOptions opt;
  opt.bump_scales = {0.5};
  const auto r = check_semimartingale_route(f, C, TruncationFunction{1.0}, 1.0, {}, quad, opt);
  const std::vector<Point> probes = {{-1.0}, {-0.5}, {0.0}, {0.5}, {1.0}};
  for (const auto& e : r[2].entries)
    if (e.probe >= 0) {
      EXPECT_NEAR(e.target, phi(probes[static_cast<std::size_t>(e.probe)]) * kBump05, 1e-8);
    }
}

TEST(Conditions, TSFamilyCauchy) {
  RouteOptions opt;
  opt.rho_grid = {1.0};
  const auto r = check_TS_family(cauchy_field(), {}, QuadratureSpec{}, opt);
  ASSERT_EQ(r.size(), 4u);
  EXPECT_NEAR(r[0].value("sup_tail_rho"), 2.0 / kPi, 1e-10);
  for (const auto& e : r[1].select("sup_tail_r")) EXPECT_NEAR(e.value, 2.0 / (kPi * e.r), 1e-10);
  EXPECT_EQ(r[1].verdict, "trend-ok");
  EXPECT_EQ(r[2].verdict, "pass");
  EXPECT_EQ(r[3].verdict, "trend-ok");
  std::ostringstream os;
  write_reports_csv(os, r);
  EXPECT_EQ(os.str().rfind("condition,quantity,", 0), 0u);
  EXPECT_NE(summarize_reports(r).find("T2.S: trend-ok"), std::string::npos);
}

TEST(Conditions, TrendHelpers) {
  EXPECT_TRUE(trend_vanishing({1.0, 0.5, 0.2}));
  EXPECT_FALSE(trend_vanishing({1.0, 0.95}));
  EXPECT_TRUE(trend_bounded({1.0, 0.8, 1.0}));
  EXPECT_FALSE(trend_bounded({1.0, 1.5}));
  EXPECT_TRUE(trend_bounded({1.0, 1.5}, 2.0));
}
