#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "jumpchain/quadrature.hpp"
#include "jumpchain/rng.hpp"
#include "jumpchain/format.hpp"

using namespace jumpchain;

TEST(Quadrature, GaussRuleIntegratesPolynomialsExactly) {
  for (int m = 1; m <= 20; ++m) {
    const GaussRule& r = gauss_rule(m);
    double wsum = 0.0;
    for (double w : r.weights) wsum += w;
    EXPECT_NEAR(wsum, 2.0, 1e-14) << m;
    for (int deg = 0; deg <= 2 * m - 1; ++deg) {
      const double exact = (deg % 2 == 1) ? 0.0 : 2.0 / (deg + 1);
      const double got = integrate_gl([deg](double x) { return std::pow(x, deg); }, -1.0, 1.0, m);
      EXPECT_NEAR(got, exact, 1e-13) << "m=" << m << " deg=" << deg;
    }
  }
}

TEST(Quadrature, TensorBoxExactForLowDegree) {
  std::vector<double> lo{0.0, -1.0}, hi{1.0, 2.0};
  auto f = [](std::span<const double> x) { return x[0] * x[0] * x[1] + x[1] * x[1] * x[1]; };
  // int_0^1 int_-1^2 (x^2 y + y^3) dy dx = (1/3)(3/2) + 15/4
  EXPECT_NEAR(tensor_box(f, lo, hi, 3), 0.5 + 3.75, 1e-13);
}

TEST(Quadrature, AdaptiveBoxHandlesKink) {
  std::vector<double> lo{-1.0}, hi{0.7};
  auto f = [](std::span<const double> x) { return std::abs(x[0] - 0.1234); };
  const double exact = 0.5 * (1.1234 * 1.1234 + 0.5766 * 0.5766);
  const BoxResult r = adaptive_box(f, lo, hi, 4, 1e-12, 1e-14, 30);
  EXPECT_NEAR(r.value, exact, 1e-10);
}

TEST(Quadrature, RadialShellsCauchyTail) {
  QuadratureSpec q;
  auto g = [](std::span<const double> z) { return 1.0 / (std::numbers::pi * z[0] * z[0]); };
  const RadialResult r = radial_integral(1, 1.0, std::numeric_limits<double>::infinity(), g, q);
  EXPECT_NEAR(r.value, 2.0 / std::numbers::pi, 1e-10);
  EXPECT_TRUE(r.converged);
}

TEST(Quadrature, RadialShellsTwoAndThreeDimensions) {
  QuadratureSpec q;
  // Gaussian mass in d=2 and d=3.
  auto g2 = [](std::span<const double> z) { return std::exp(-(z[0] * z[0] + z[1] * z[1])); };
  EXPECT_NEAR(radial_integral(2, 1e-9, std::numeric_limits<double>::infinity(), g2, q).value, std::numbers::pi, 1e-8);
  auto g3 = [](std::span<const double> z) { return std::exp(-(z[0] * z[0] + z[1] * z[1] + z[2] * z[2])); };
  EXPECT_NEAR(radial_integral(3, 1e-9, std::numeric_limits<double>::infinity(), g3, q).value,
              std::pow(std::numbers::pi, 1.5), 1e-7);
  EXPECT_NEAR(sphere_area(3), 4.0 * std::numbers::pi, 1e-14);
}

TEST(Quadrature, RadialHeavyTailExtrapolates) {
  QuadratureSpec q;
  // |z|^{-1.1} in d=1: 2 * r^{-0.1} / 0.1 beyond r=1.
  auto g = [](std::span<const double> z) { return std::pow(std::abs(z[0]), -1.1); };
  const RadialResult r = radial_integral(1, 1.0, std::numeric_limits<double>::infinity(), g, q);
  EXPECT_NEAR(r.value, 20.0, 1e-6 * 20.0);
}

TEST(Rng, PhiloxStreamsAreReproducibleAndDistinct) {
  PhiloxStream a(42, 7), b(42, 7), c(42, 8), e(43, 7);
  bool differ_c = false, differ_e = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a(), y = b(), z = c(), w = e();
    EXPECT_EQ(x, y);
    differ_c = differ_c || x != z;
    differ_e = differ_e || x != w;
  }
  EXPECT_TRUE(differ_c);
  EXPECT_TRUE(differ_e);
}

TEST(Rng, PhiloxKnownAnswer) {
  // Random123 known-answer vector: counter = key = 0 gives 6627e8d5 e169c58d bc57ac4c 9b00dbd8.
  PhiloxStream s(0, 0);
  EXPECT_EQ(s(), 0x6627e8d5U);
  EXPECT_EQ(s(), 0xe169c58dU);
  EXPECT_EQ(s(), 0xbc57ac4cU);
  EXPECT_EQ(s(), 0x9b00dbd8U);
}

TEST(Rng, UniformMoments) {
  PhiloxStream s(1, 0);
  double sum = 0.0, sum2 = 0.0;
  const int N = 200000;
  for (int i = 0; i < N; ++i) {
    const double u = s.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sum2 += u * u;
  }
  EXPECT_NEAR(sum / N, 0.5, 4 * std::sqrt(1.0 / 12 / N));
  EXPECT_NEAR(sum2 / N, 1.0 / 3.0, 0.003);
}

TEST(Format, DoubleRoundTrip) {
  for (double v : {0.0, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.1}) {
    EXPECT_EQ(parse_double(fmt_double(v)), v);
  }
  EXPECT_EQ(fmt_double(0.5), "0.5");
}
