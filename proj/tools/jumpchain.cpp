#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "commands.hpp"

using namespace jumpchain;

int main(int argc, char** argv) {
  CLI::App app{"Lattice discretization, exact simulation and convergence checks for jump processes"};
  app.require_subcommand(0, 1);
  cli::Invocation inv;
  std::string out;
  bool print_defaults = false;
  std::uint64_t seed = 0;
  app.add_flag("--print-defaults", print_defaults, "Print the default config (all keys) and exit");

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", inv.config_path, "Run config (JSON)");
    sub->add_option("--out", out, "Output directory (overrides config 'out')");
    sub->add_option("--seed", seed, "Simulation seed (overrides simulate.seed)");
    sub->add_option("--threads", inv.threads, "Worker threads (0: all cores)");
  };
  CLI::App* sub[] = {
      app.add_subcommand("discretize", "Build and save the conductance matrix for each n"),
      app.add_subcommand("simulate", "Simulate an ensemble and write marginals, histograms and diagnostics"),
      app.add_subcommand("check", "Evaluate the convergence conditions"),
      app.add_subcommand("semigroup", "Strong semigroup error against the reference"),
      app.add_subcommand("sweep", "Convergence sweep over the configured n list"),
  };
  for (CLI::App* s : sub) add_common(s);
  for (int i : {1, 2, 3}) sub[i]->add_option("--matrix", inv.matrix_path, "Conductance file from 'discretize'");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (print_defaults) {
    std::cout << default_config_text();
    return 0;
  }
  for (CLI::App* s : sub)
    if (s->parsed()) inv.command = s->get_name();
  if (inv.command.empty()) {
    std::cerr << app.help();
    return 2;
  }
  if (sub[0]->count("--seed") + sub[1]->count("--seed") + sub[2]->count("--seed") + sub[3]->count("--seed") +
          sub[4]->count("--seed") > 0)
    inv.seed = seed;
  if (inv.threads == 0) inv.threads = std::max(1u, std::thread::hardware_concurrency());

  try {
    const RunConfig cfg = inv.config_path.empty() ? RunConfig{} : load_config(inv.config_path);
    return cli::run(inv, cfg, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
