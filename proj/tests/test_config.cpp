#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "jumpchain/config.hpp"

using namespace jumpchain;

namespace {

std::string config_error(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const std::string text = default_config_text();
  const RunConfig c = parse_config_text(text);
  EXPECT_EQ(to_json(c).dump(2) + "\n", text);
  EXPECT_EQ(c.schema_version, kSchemaVersion);
  EXPECT_EQ(c.n_list, std::vector<int>{16});
}

TEST(Config, RoundTripOfEditedConfig) {
  const RunConfig c = parse_config_text(R"({"schema_version": 1, "scheme": "measure", "p": 0.75,
    "lattice": {"d": 1, "n": [2, 4], "R_w": 8},
    "field": {"family": "sde", "phi_expr": "1 + 0.5 * x", "base_alpha": 1.5},
    "kernel": {"family": "constant", "c": 2, "support": "inf"},
    "check": {"tolerance": 0.1, "probes": [[0.0], [0.5]]}})");
  EXPECT_EQ(c.scheme, Scheme::SemimartingaleMeasure);
  EXPECT_EQ(c.n_list, (std::vector<int>{2, 4}));
  EXPECT_TRUE(std::isinf(c.kernel.support));
  const RunConfig again = parse_config(to_json(c));
  EXPECT_EQ(to_json(again).dump(), to_json(c).dump());
  EXPECT_EQ(*again.check.tolerance, 0.1);
  EXPECT_EQ(again.probe_points().size(), 2u);
}

TEST(Config, ValidationNamesTheField) {
  EXPECT_NE(config_error(R"({"schema_version": 1, "p": 1.5})").find("p must be in (0, 1]"), std::string::npos);
  EXPECT_NE(config_error(R"({"schema_version": 1, "simulate": {"N_paths": 0}})").find("simulate.N_paths"), std::string::npos);
  EXPECT_NE(config_error(R"({"schema_version": 1, "lattice": {"R_w": "big"}})").find("lattice.R_w"), std::string::npos);
  EXPECT_NE(config_error(R"({"schema_version": 1, "lattice": {"d": "one"}})").find("lattice.d"), std::string::npos);
  EXPECT_NE(config_error(R"({"schema_version": 1, "quadrature": {"q": 0}})").find("quadrature.q"), std::string::npos);
  EXPECT_NE(config_error(R"({"schema_version": 1, "simulate": {"x0": [0, 1]}})").find("simulate.x0"), std::string::npos);
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_NE(config_error(R"({"schema_version": 1, "colour": 1})").find("'colour'"), std::string::npos);
  EXPECT_NE(config_error(R"({"schema_version": 1, "simulate": {"paths": 5}})").find("'simulate.paths'"), std::string::npos);
  // Keys belonging to another family are rejected too.
  EXPECT_NE(config_error(R"({"schema_version": 1, "kernel": {"family": "cauchy", "alpha": 0.5}})").find("kernel.alpha"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"schema_version": 1, "kernel": {"family": "gauss"}})").find("kernel.family"), std::string::npos);
}

TEST(Config, SchemaVersionRequired) {
  EXPECT_NE(config_error("{}").find("schema_version"), std::string::npos);
  EXPECT_NE(config_error(R"({"schema_version": 2})").find("schema_version"), std::string::npos);
  EXPECT_NE(config_error("[1, 2]").find("object"), std::string::npos);
  EXPECT_NE(config_error("{").find("JSON"), std::string::npos);
}

TEST(Config, FamilyDefaultP) {
  RunConfig c;
  EXPECT_DOUBLE_EQ(c.resolved_p(), 0.99);
  c.kernel.family = "levy_mix";
  EXPECT_DOUBLE_EQ(c.resolved_p(), 0.66);
  c.kernel.family = "constant";
  EXPECT_DOUBLE_EQ(c.resolved_p(), 1.0);
  c.kernel.family = "stable_like";
  c.kernel.alpha_expr = "1 + 0.5 * (x > 0)";
  EXPECT_DOUBLE_EQ(c.resolved_p(), 0.66);
  c.scheme = Scheme::SemimartingaleMeasure;
  EXPECT_DOUBLE_EQ(c.resolved_p(), 0.5);
  c.p = 0.3;
  EXPECT_DOUBLE_EQ(c.resolved_p(), 0.3);
}

TEST(Config, FactoriesMatchLibraryKernels) {
  const std::vector<double> x{0.0}, y{2.0};
  KernelConfig k;
  k.family = "levy_mix";
  k.alpha = 0.5;
  k.beta = 1.5;
  const JumpKernel a = make_kernel(k, 1);
  const JumpKernel b = levy_mix_kernel(0.5, 1.5, Region{}, 1);
  EXPECT_EQ(a(x, y), b(x, y));
  EXPECT_EQ(a(y, x), b(y, x));
  k = KernelConfig{};
  k.family = "expression";
  k.expr = "1 / (pi * r^2)";
  EXPECT_NEAR(make_kernel(k, 1)(x, y), cauchy_kernel()(x, y), 1e-15);
  FieldConfig f;
  f.family = "sde";
  f.phi_expr = "2";
  EXPECT_NEAR(make_field(f, 1)(x, y), 2.0 * cauchy_field()(x, y), 1e-15);
}

TEST(Config, ProbeGrid) {
  RunConfig c;
  c.check.probe_count = 5;
  c.check.R = 1.0;
  const auto p = c.probe_points();
  ASSERT_EQ(p.size(), 5u);
  EXPECT_EQ(p.front()[0], -1.0);
  EXPECT_EQ(p[2][0], 0.0);
  EXPECT_EQ(p.back()[0], 1.0);
}
