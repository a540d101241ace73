#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "jumpchain/discretize.hpp"

using namespace jumpchain;

namespace {
const double kPi = std::numbers::pi;

std::size_t idx(const Lattice& l, double x) { return static_cast<std::size_t>(l.locate(std::vector<double>{x})); }
}  // namespace

TEST(Discretize, CutoffRadii) {
  EXPECT_DOUBLE_EQ(cutoff_radius(Scheme::DirichletAverage, 1, 1, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(cutoff_radius(Scheme::SemimartingaleMeasure, 4, 4, 0.5), 1.0);
}

TEST(Discretize, ConstantKernelEntries) {
  auto lat = make_lattice(2, 1, 2.0);
  QuadratureSpec q;
  const ConductanceMatrix C = build_dirichlet_conductances(constant_kernel(3.0, 1, 100.0), lat, 1.0, q, {false});
  const double cut = cutoff_radius(Scheme::DirichletAverage, 1, 2, 1.0);
  for (std::size_t a = 0; a < C.size(); ++a) {
    std::size_t count = 0;
    C.for_each_entry(a, [&](std::size_t b, double r) {
      EXPECT_NEAR(r, 3.0 / 2.0, 1e-12);
      EXPECT_GT(std::abs(lat->point(a)[0] - lat->point(b)[0]), cut);
      ++count;
    });
    std::size_t admissible = 0;
    for (std::size_t b = 0; b < C.size(); ++b) admissible += std::abs(lat->point(a)[0] - lat->point(b)[0]) > cut + 1e-12;
    EXPECT_EQ(count, admissible);
    EXPECT_NEAR(C.kept(a), 1.5 * admissible, 1e-10);
  }
}

TEST(Discretize, CauchyEntryOracle) {
  auto lat = make_lattice(1, 1, 6.0);
  QuadratureSpec q;
  const ConductanceMatrix st = build_dirichlet_conductances(cauchy_kernel(), lat, 1.0, q);
  const ConductanceMatrix ex = build_dirichlet_conductances(cauchy_kernel(), lat, 1.0, q, {false});
  ASSERT_TRUE(st.is_stencil());
  ASSERT_FALSE(ex.is_stencil());
  const double oracle = 0.020543249317770448;  // ln(16/15)/pi
  EXPECT_NEAR(st.rate(idx(*lat, 0), idx(*lat, 4)), oracle, 1e-6 * oracle);
  EXPECT_NEAR(ex.rate(idx(*lat, 0), idx(*lat, 4)), oracle, 1e-6 * oracle);
  EXPECT_EQ(st.rate(idx(*lat, 0), idx(*lat, 2)), 0.0);  // cutoff
  for (std::size_t a = 0; a < lat->size(); ++a) {
    for (std::size_t b = 0; b < lat->size(); ++b) {
      EXPECT_NEAR(st.rate(a, b), ex.rate(a, b), 1e-9 * std::max(1e-3, ex.rate(a, b)));
      EXPECT_NEAR(ex.rate(a, b), ex.rate(b, a), 1e-9 * std::max(1e-3, ex.rate(a, b)));
    }
    // Full rate (2/pi) ln(3/2) from the closed-form tail integral.
    const RateSplit r = st.total_rate(a), re = ex.total_rate(a);
    EXPECT_NEAR(r.kept + r.lost, 0.258127104826816369, 1e-6);
    EXPECT_NEAR(re.kept + re.lost, 0.258127104826816369, 1e-8);
    EXPECT_NEAR(r.kept, re.kept, 1e-9);
  }
}

TEST(Discretize, BoundednessAgainstTailClosure) {
  // max kept rate <= sup_x int_{|y-x| > sqrt(d)/(2 n^p)} k = (2/pi) (2 n^p).
  for (int n : {2, 4, 8}) {
    auto lat = make_lattice(n, 1, 4.0);
    const ConductanceMatrix C = build_dirichlet_conductances(cauchy_kernel(), lat, 0.8, QuadratureSpec{});
    double mx = 0.0;
    for (std::size_t a = 0; a < C.size(); ++a) mx = std::max(mx, C.kept(a));
    EXPECT_LE(mx, (2.0 / kPi) * 2.0 * std::pow(n, 0.8));
  }
}

TEST(Discretize, MeasureEntries) {
  auto lat = make_lattice(1, 1, 5.0);
  QuadratureSpec q;
  LevyMeasureField f = sde_field([](std::span<const double>) { return 1.0; }, cauchy_field());
  const ConductanceMatrix C = build_measure_conductances(f, lat, 1.0, q);
  EXPECT_FALSE(C.is_stencil());
  EXPECT_NEAR(C.rate(idx(*lat, 0), idx(*lat, 2)), 4.0 / (15.0 * kPi), 1e-10);
  EXPECT_EQ(C.rate(idx(*lat, 0), idx(*lat, 1)), 0.0);
  const ConductanceMatrix S = build_measure_conductances(cauchy_field(), lat, 1.0, q);
  EXPECT_TRUE(S.is_stencil());
  // Translation invariance: C(a, a + o) independent of a.
  for (std::size_t a = 0; a < lat->size(); ++a)
    for (std::size_t b = 0; b < lat->size(); ++b) EXPECT_NEAR(S.rate(a, b), C.rate(a, b), 1e-12);
  for (std::size_t a = 0; a < lat->size(); ++a) {
    EXPECT_NEAR(C.kept(a) + C.lost(a), 2.0 / (1.5 * kPi), 1e-9);
    EXPECT_NEAR(S.kept(a) + S.lost(a), 2.0 / (1.5 * kPi), 1e-9);
  }
  LevyMeasureField zero = expression_field("0", 1, true);
  const ConductanceMatrix Z = build_measure_conductances(zero, lat, 1.0, q);
  EXPECT_EQ(Z.nnz(), 0u);
}

TEST(Discretize, StencilMatchesExplicitInTwoDimensions) {
  auto lat = make_lattice(2, 2, 1.5);
  QuadratureSpec q;
  JumpKernel k = stable_kernel(1.2, 2);
  const ConductanceMatrix st = build_dirichlet_conductances(k, lat, 1.0, q);
  const ConductanceMatrix ex = build_dirichlet_conductances(k, lat, 1.0, q, {false});
  for (std::size_t a = 0; a < lat->size(); ++a)
    for (std::size_t b = 0; b < lat->size(); ++b) EXPECT_NEAR(st.rate(a, b), ex.rate(a, b), 1e-6 * std::max(1e-4, ex.rate(a, b)));
  const double cut = cutoff_radius(Scheme::DirichletAverage, 2, 2, 1.0);
  for (std::size_t a = 0; a < lat->size(); ++a)
    st.for_each_entry(a, [&](std::size_t b, double) {
      const auto pa = lat->point(a), pb = lat->point(b);
      EXPECT_GT(std::hypot(pa[0] - pb[0], pa[1] - pb[1]), cut);
    });
}

TEST(Discretize, SplitSymmetric) {
  auto lat = make_lattice(1, 1, 1.0);
  const ConductanceMatrix C = ConductanceMatrix::from_triplets(lat, Scheme::DirichletAverage, 1.0, {{0, 1, 2.0}, {1, 2, 1.0}, {2, 1, 1.0}});
  const SplitMatrix S = split_symmetric(C);
  ASSERT_EQ(S.size(), 3u);
  // Row 0: (0,1) sym 1 anti 1; row 1: (1,0) sym 1 anti -1, (1,2) sym 1 anti 0.
  EXPECT_EQ(S.cols[S.row_ptr[0]], 1u);
  EXPECT_DOUBLE_EQ(S.sym[S.row_ptr[0]], 1.0);
  EXPECT_DOUBLE_EQ(S.anti[S.row_ptr[0]], 1.0);
  EXPECT_DOUBLE_EQ(S.anti[S.row_ptr[1]], -1.0);
  EXPECT_DOUBLE_EQ(S.anti[S.row_ptr[1] + 1], 0.0);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t e = S.row_ptr[a]; e < S.row_ptr[a + 1]; ++e)
      EXPECT_DOUBLE_EQ(S.sym[e] + S.anti[e], C.rate(a, S.cols[e]));
}

TEST(Discretize, LevyMixSplitMatchesHalfDifference) {
  auto lat = make_lattice(4, 1, 4.0);
  JumpKernel k = levy_mix_kernel(0.5, 1.5, Region::positive_half_line(), 1);
  const ConductanceMatrix C = build_dirichlet_conductances(k, lat, 1.0, QuadratureSpec{});
  const SplitMatrix S = split_symmetric(C);
  const std::size_t a = idx(*lat, 0.0);
  for (std::size_t e = S.row_ptr[a]; e < S.row_ptr[a + 1]; ++e) {
    const std::size_t b = S.cols[e];
    const double o = lat->point(b)[0];
    // Recompute both entries by direct 2-D quadrature of the kernel.
    auto cell = [&](double ca, double cb) {
      std::vector<double> lo{ca - 0.125, cb - 0.125}, hi{ca + 0.125, cb + 0.125};
      auto f = [&](std::span<const double> xy) { return k(xy.subspan(0, 1), xy.subspan(1)); };
      return 4.0 * adaptive_box(f, lo, hi, 6, 1e-12, 1e-15, 14).value;
    };
    const double cab = cell(0.0, o), cba = cell(o, 0.0);
    EXPECT_NEAR(S.anti[e], 0.5 * (cab - cba), 1e-7 * std::max(cab, 1e-3));
    if (std::abs(o) + 0.25 <= 1.0) {
      EXPECT_EQ(S.anti[e], 0.0);
    }
  }
}

TEST(Discretize, TextRoundTrip) {
  for (bool stencil : {true, false}) {
    auto lat = make_lattice(2, 1, 3.0);
    const ConductanceMatrix C = build_dirichlet_conductances(cauchy_kernel(), lat, 0.9, QuadratureSpec{}, {stencil});
    std::stringstream ss;
    write_matrix(C, ss);
    const ConductanceMatrix D = read_matrix(ss);
    EXPECT_EQ(D.is_stencil(), stencil);
    EXPECT_EQ(D.p(), 0.9);
    for (std::size_t a = 0; a < C.size(); ++a) {
      EXPECT_EQ(C.kept(a), D.kept(a));
      EXPECT_EQ(C.lost(a), D.lost(a));
      for (std::size_t b = 0; b < C.size(); ++b) EXPECT_EQ(C.rate(a, b), D.rate(a, b));
    }
  }
  std::stringstream bad("nonsense");
  EXPECT_THROW(read_matrix(bad), IoError);
}

TEST(Discretize, RejectsBadP) {
  auto lat = make_lattice(2, 1, 3.0);
  EXPECT_THROW(build_dirichlet_conductances(cauchy_kernel(), lat, 1.5, QuadratureSpec{}), ConfigError);
  EXPECT_THROW(build_measure_conductances(cauchy_field(), lat, 0.0, QuadratureSpec{}), ConfigError);
}
