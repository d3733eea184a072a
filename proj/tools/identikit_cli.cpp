// Command-line front end over the C interface.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "identikit.h"

namespace {

int report(ik_status s) {
  std::cerr << "error: " << ik_last_error() << "\n";
  return ik_exit_code(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"identikit: identification diagnostics for latent-variable models"};
  app.set_version_flag("--version", std::string(ik_version()));
  app.require_subcommand(1);

  std::string config, out, data;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads, simulate;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "Run configuration (JSON)")->required();
    sub->add_option("--out", out, "Output directory (overrides the config)");
    sub->add_option("--seed", seed, "Random seed (overrides the config)");
    sub->add_option("--threads", threads, "Worker threads (default: IDENTIKIT_THREADS or 1)")
        ->check(CLI::PositiveNumber);
  };
  add_common(app.add_subcommand("diagnose", "Singular systems, verdicts and Fisher values"));
  auto* est = app.add_subcommand("estimate", "Moment estimate from data or simulated data");
  add_common(est);
  est->add_option("--simulate", simulate, "Simulate N observations from the model")->check(CLI::PositiveNumber);
  est->add_option("--data", data, "CSV of observations, one per row");
  add_common(app.add_subcommand("rates", "Monte Carlo rate experiment"));
  add_common(app.add_subcommand("path", "Single-mode impossibility path"));
  add_common(app.add_subcommand("dump-operator", "Write the score operators in the IKOP container"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  ik_config* cfg = nullptr;
  if (ik_status s = ik_config_load(config.c_str(), &cfg); s != IK_OK) return report(s);

  ik_run_options opts;
  ik_run_options_init(&opts);
  if (!out.empty()) opts.out_dir = out.c_str();
  if (seed) {
    opts.has_seed = 1;
    opts.seed = *seed;
  }
  opts.threads = threads.value_or(0);
  opts.simulate = simulate.value_or(0);
  if (!data.empty()) opts.data_path = data.c_str();

  const ik_status s = ik_run(command.c_str(), cfg, &opts);
  ik_config_free(cfg);
  if (s != IK_OK) return report(s);
  std::cout << ik_last_result() << "\n";
  return 0;
}
