#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dbpi/cli/commands.hpp"

int main(int argc, char** argv)
{
  CLI::App app{"Distributed fixed-point iteration experiments"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  const char* help[][2] = {
      {"validate", "Check the graph, gauge, gains and fixed point"},
      {"spectrum", "Report the linearized spectrum, alpha* and eigencurves"},
      {"run", "Run the configured iteration and write its trajectory"},
      {"rate", "Run and compare the empirical rate with the predicted one"},
      {"sweep", "Run a grid over alpha, eta, beta2 or n"},
  };
  for (const auto& [name, text] : help) {
    CLI::App* sub = app.add_subcommand(name, text);
    sub->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "Output directory (falls back to $DBPI_OUT)");
    sub->add_option("--seed", seed, "Seed for random initial states");
    sub->add_option("--threads", threads, "Worker threads for sweep")->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : dbpi::cli::exit_parse;
  }

  CLI::App* sub = app.get_subcommands().front();
  dbpi::cli::CommandOptions opts;
  if (sub->count("--out")) opts.out = out;
  if (sub->count("--seed")) opts.seed = seed;
  opts.threads = threads;
  return dbpi::cli::run_command(sub->get_name(), config, opts, std::cout, std::cerr);
}
