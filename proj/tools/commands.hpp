#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jumpchain/jumpchain.hpp"

namespace jumpchain::cli {

inline constexpr const char* kToolVersion = "jumpchain 1.0.0";

struct Invocation {
  std::string command;
  std::string config_path;  // empty: defaults
  std::string matrix_path;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
};

/// Output directory plus the manifest of everything written into it.
class Artifacts {
 public:
  Artifacts(std::filesystem::path dir, const Invocation& inv, const RunConfig& cfg) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
    manifest_["tool"] = kToolVersion;
    manifest_["command"] = inv.command;
    manifest_["schema_version"] = kSchemaVersion;
    manifest_["threads"] = thread_count();
    manifest_["inputs"] = nlohmann::ordered_json::array();
    if (!inv.config_path.empty()) add_input("config", inv.config_path);
    if (!inv.matrix_path.empty()) add_input("matrix", inv.matrix_path);
    manifest_["seed"] = inv.seed ? *inv.seed : cfg.simulate.seed;
    manifest_["outputs"] = nlohmann::ordered_json::array();
    write("config.json", to_json(cfg).dump(2) + "\n");
  }

  void write(const std::string& name, const std::string& content) {
    const auto path = dir_ / name;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    os << content;
    if (!os) throw IoError("write failed: " + path.string());
    manifest_["outputs"].push_back({{"file", name}, {"bytes", content.size()}, {"fnv1a64", hex64(fnv1a64(content))}});
  }

  /// Records a file written by another routine (e.g. a streamed table).
  void record(const std::string& name) { write(name, read_file((dir_ / name).string())); }

  std::filesystem::path path(const std::string& name) const { return dir_ / name; }

  void finish() {
    const auto path = dir_ / "manifest.json";
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << manifest_.dump(2) << "\n";
  }

  static std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  }

 private:
  void add_input(const std::string& role, const std::string& path) {
    const std::string bytes = read_file(path);
    manifest_["inputs"].push_back({{"role", role}, {"path", path}, {"fnv1a64", hex64(fnv1a64(bytes))}});
  }

  std::filesystem::path dir_;
  nlohmann::ordered_json manifest_;
};

inline std::string suffixed(const std::string& base, const std::string& ext, int n, bool multi) {
  return multi ? base + "_n" + std::to_string(n) + ext : base + ext;
}

/// Matrices for the run: the --matrix file or one build per configured n.
inline std::vector<ConductanceMatrix> matrices(const RunConfig& cfg, const Invocation& inv) {
  std::vector<ConductanceMatrix> out;
  if (!inv.matrix_path.empty()) {
    ConductanceMatrix C = load_matrix(inv.matrix_path);
    if (C.lattice().dim() != cfg.d) throw ConfigError("matrix dimension does not match lattice.d");
    if (C.scheme() != cfg.scheme) throw ConfigError("matrix scheme does not match the config scheme");
    out.push_back(std::move(C));
    return out;
  }
  for (int n : cfg.n_list) out.push_back(build_from_config(cfg, n));
  return out;
}

inline int cmd_discretize(const RunConfig& cfg, const Invocation& inv, Artifacts& art) {
  const bool multi = cfg.n_list.size() > 1;
  std::ostringstream sum;
  sum << "n,d,p,scheme,R_w,states,storage,max_rate,alpha0_n,max_lost,max_pruned\n";
  for (int n : cfg.n_list) {
    const ConductanceMatrix C = build_from_config(cfg, n);
    std::ostringstream m;
    write_matrix(C, m);
    art.write(suffixed("conductances", ".txt", n, multi), m.str());
    double max_lost = 0.0, max_pruned = 0.0;
    for (std::size_t a = 0; a < C.size(); ++a) {
      max_lost = std::max(max_lost, C.lost(a));
      max_pruned = std::max(max_pruned, C.pruned(a));
    }
    const double a0 = alpha0_n(C);
    sum << n << ',' << cfg.d << ',' << fmt_double(C.p()) << ',' << scheme_name(C.scheme()) << ',' << fmt_double(cfg.R_w) << ','
        << C.size() << ',' << (C.is_stencil() ? "stencil" : "explicit") << ',' << fmt_double(C.max_total_rate()) << ','
        << fmt_double(a0) << ',' << fmt_double(max_lost) << ',' << fmt_double(max_pruned) << "\n";
    std::cout << "n=" << n << " states=" << C.size() << " max_rate=" << fmt_double(C.max_total_rate())
              << " alpha0_n=" << fmt_double(a0) << " max_lost=" << fmt_double(max_lost) << "\n";
  }
  (void)inv;
  art.write("discretize_summary.csv", sum.str());
  return 0;
}

inline int cmd_simulate(const RunConfig& cfg, const Invocation& inv, Artifacts& art) {
  const auto Cs = matrices(cfg, inv);
  const bool multi = Cs.size() > 1;
  const SimulationConfig sc = cfg.simulation(inv.seed.value_or(0), inv.seed.has_value());
  std::ostringstream sum;
  sum << "n,N_paths,seed,absorbed_fraction,unknown_exits,mean_jumps,ks,ks_p,ks_bound,ks_pass,cf_within_ci\n";
  for (const auto& C : Cs) {
    const int n = C.lattice().n();
    SimulationConfig run = sc;
    run.keep_paths = cfg.simulate.keep_paths > 0;
    const EnsembleSummary s = simulate_ensemble(C, run);
    std::ostringstream m, h, j;
    write_marginals_csv(m, s);
    art.write(suffixed("marginals", ".csv", n, multi), m.str());
    write_histogram_csv(h, s, cfg.simulate.histogram_half_width, cfg.simulate.histogram_bins);
    art.write(suffixed("histogram", ".csv", n, multi), h.str());
    j << "path,jumps,absorbed\n";
    for (std::size_t i = 0; i < s.n_paths(); ++i) j << i << ',' << s.jump_counts[i] << ',' << int(s.absorbed[i]) << "\n";
    art.write(suffixed("jump_counts", ".csv", n, multi), j.str());
    const std::size_t keep = std::min(cfg.simulate.keep_paths, s.paths.size());
    for (std::size_t i = 0; i < keep; ++i) {
      std::ostringstream p;
      write_path_csv(p, s.paths[i], C.lattice());
      art.write(suffixed("path" + std::to_string(i), ".csv", n, multi), p.str());
      if (cfg.simulate.traces) {
        std::ostringstream t;
        write_trace_csv(t, characteristics_along_path(s.paths[i], C, TruncationFunction{cfg.truncation_radius}, {},
                                                      cfg.check.r_grid));
        art.write(suffixed("trace" + std::to_string(i), ".csv", n, multi), t.str());
      }
    }
    const MarginalDiagnostics md = marginal_diagnostics(cfg, s);
    std::ostringstream cf;
    write_cf_csv(cf, md.cf);
    art.write(suffixed("cf", ".csv", n, multi), cf.str());
    sum << n << ',' << s.n_paths() << ',' << sc.seed << ',' << fmt_double(s.absorbed_fraction) << ',' << s.unknown_exits << ','
        << fmt_double(s.mean_jumps) << ',';
    if (md.has_reference)
      sum << fmt_double(md.ks.statistic) << ',' << fmt_double(md.ks.p_value) << ',' << fmt_double(cfg.diagnostics.ks_bound) << ','
          << (md.ks.pass ? 1 : 0) << ',' << (md.cf.all_within_ci() ? 1 : 0) << "\n";
    else
      sum << ",,,,\n";
    std::cout << "n=" << n << " paths=" << s.n_paths() << " absorbed=" << fmt_double(s.absorbed_fraction);
    if (md.has_reference) std::cout << " ks=" << fmt_double(md.ks.statistic) << " cf_within_ci=" << md.cf.all_within_ci();
    std::cout << "\n";
  }
  art.write("simulate_summary.csv", sum.str());
  return 0;
}

inline int cmd_check(const RunConfig& cfg, const Invocation& inv, Artifacts& art) {
  std::vector<ConditionReport> reps;
  const auto probes = cfg.probe_points();
  RouteOptions ro;
  ro.rho_grid = cfg.check.rho_grid;
  ro.eps_grid = cfg.check.eps_grid;
  ro.r_grid = cfg.check.r_grid;
  ro.p = cfg.resolved_p();
  ro.growth_budget = cfg.check.growth_budget;
  std::optional<ConductanceMatrix> C;
  if (cfg.check.discrete) C = matrices(cfg, inv).front();
  if (C) ro.p = C->p();
  auto append = [&](std::vector<ConditionReport> v) { reps.insert(reps.end(), v.begin(), v.end()); };
  if (cfg.scheme == Scheme::DirichletAverage) {
    const JumpKernel k = make_kernel(cfg.kernel, cfg.d);
    append(check_dirichlet_route(k, probes, cfg.quadrature, ro));
    if (C) {
      append(check_T3toT6(*C, cfg.check.rho, cfg.check.r_grid));
      append(check_C2_C3_C4(k, *C, cfg.check.rho_grid, probes, cfg.quadrature));
    }
  } else {
    const LevyMeasureField f = make_field(cfg.field, cfg.d);
    append(check_TS_family(f, probes, cfg.quadrature, ro));
    if (C) {
      append(check_T3toT6(*C, cfg.check.rho, cfg.check.r_grid));
      SemimartingaleOptions so;
      so.bump_scales = cfg.check.bump_scales;
      if (cfg.check.tolerance) so.tolerance = *cfg.check.tolerance;
      append(check_semimartingale_route(f, *C, TruncationFunction{cfg.truncation_radius}, cfg.check.R, probes, cfg.quadrature, so));
    }
  }
  if (C) reps.push_back(alpha0_report(*C));
  std::ostringstream csv;
  write_reports_csv(csv, reps);
  art.write("conditions.csv", csv.str());
  const std::string text = summarize_reports(reps);
  art.write("conditions.txt", text);
  std::cout << text;
  return 0;
}

inline int cmd_semigroup(const RunConfig& cfg, const Invocation& inv, Artifacts& art) {
  std::ostringstream csv;
  csv << "n,t,s,error,inside,leakage,leak_flag,terms,substeps\n";
  for (const auto& C : matrices(cfg, inv)) {
    const SemigroupError e = configured_semigroup_error(cfg, C);
    csv << C.lattice().n() << ',' << fmt_double(cfg.semigroup.t) << ',' << fmt_double(cfg.semigroup.s) << ',' << fmt_double(e.error)
        << ',' << fmt_double(e.inside) << ',' << fmt_double(e.leakage) << ',' << (e.leakage_flag ? 1 : 0) << ',' << e.stats.terms
        << ',' << e.stats.substeps << "\n";
    std::cout << "n=" << C.lattice().n() << " error=" << fmt_double(e.error) << " leakage=" << fmt_double(e.leakage)
              << (e.leakage_flag ? " (leakage above threshold)" : "") << "\n";
  }
  art.write("semigroup.csv", csv.str());
  return 0;
}

inline int cmd_sweep(const RunConfig& cfg, const Invocation& inv, Artifacts& art) {
  RunConfig run = cfg;
  if (inv.seed) run.simulate.seed = *inv.seed;
  const std::string table = "sweep.csv";
  std::ofstream os(art.path(table));
  if (!os) throw IoError("cannot write " + art.path(table).string());
  SweepResult r;
  try {
    r = convergence_sweep(run, &os);
  } catch (...) {
    os.close();
    art.record(table);
    throw;
  }
  os.close();
  art.record(table);
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const int n = r.rows[i].n;
    if (i < r.histograms.size()) art.write("sweep_histogram_n" + std::to_string(n) + ".csv", r.histograms[i]);
  }
  std::ostringstream v;
  v << "noise_floor," << fmt_double(r.noise_floor) << "\n";
  if (r.has_reference) v << "ks_decreasing_outside_noise," << (r.ks_decreasing ? 1 : 0) << "\n";
  v << "successive_decreasing_outside_noise," << (r.successive_decreasing ? 1 : 0) << "\n";
  art.write("sweep_verdict.csv", v.str());
  std::cout << v.str();
  return 0;
}

inline int run(const Invocation& inv, const RunConfig& cfg, const std::string& out_override) {
  if (inv.threads > 0) set_thread_count(inv.threads);
  // Usage errors surface before anything is written.
  cfg.validate();
  if (inv.command == "check" && cfg.check.discrete && inv.matrix_path.empty())
    throw ConfigError("check: discrete checks need --matrix (or set check.discrete to false)");
  if (inv.command == "sweep" && !inv.matrix_path.empty()) throw ConfigError("sweep builds its own matrices; drop --matrix");
  Artifacts art(out_override.empty() ? cfg.out : out_override, inv, cfg);
  int code = 0;
  try {
    if (inv.command == "discretize") code = cmd_discretize(cfg, inv, art);
    else if (inv.command == "simulate") code = cmd_simulate(cfg, inv, art);
    else if (inv.command == "check") code = cmd_check(cfg, inv, art);
    else if (inv.command == "semigroup") code = cmd_semigroup(cfg, inv, art);
    else if (inv.command == "sweep") code = cmd_sweep(cfg, inv, art);
    else throw ConfigError("unknown command '" + inv.command + "'");
  } catch (...) {
    art.finish();
    throw;
  }
  art.finish();
  return code;
}

}  // namespace jumpchain::cli
