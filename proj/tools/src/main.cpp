#include <iostream>

#include "CLI11.hpp"
#include "spiked_cli/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Spiked Wigner matrix-estimation lab"};
  app.require_subcommand(1);
  spiked::cli::Invocation inv;
  std::string config;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out;
  auto* config_opt = app.add_option("--config", config, "JSON experiment config");
  auto* seed_opt = app.add_option("--seed", seed, "Master seed (overrides the config)");
  auto* threads_opt =
      app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  auto* out_opt = app.add_option("--out", out, "Output directory (default: out)");
  for (const auto& name : spiked::cli::subcommands())
    app.add_subcommand(name)->fallthrough();

  CLI11_PARSE(app, argc, argv);
  inv.subcommand = app.get_subcommands().front()->get_name();
  if (*config_opt) inv.config_path = config;
  if (*seed_opt) inv.seed = seed;
  if (*threads_opt) inv.threads = threads;
  if (*out_opt) inv.out_dir = out;
  return spiked::cli::run(inv);
}
