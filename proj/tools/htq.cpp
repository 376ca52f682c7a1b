#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "htq/cli.hpp"

namespace {

int run(const std::string& cmd, const std::string& config_path, std::optional<std::uint64_t> seed,
        std::optional<int> jobs, const std::string& out, const std::string& format) {
  using namespace htq;
  try {
    auto cfg = cli::load_config(config_path);
    if (seed) {
      cfg.seed = *seed;
      cfg.sim.base_seed = *seed;
      cfg.raw["seed"] = *seed;
    }
    if (jobs) cfg.sim.jobs = *jobs;
    if (!out.empty()) cfg.out_dir = out;
    const auto res = cli::run_command(cmd, cfg);
    if (format == "json") std::cout << res.data.dump(2) << "\n";
    else if (format == "csv") std::cout << res.csv;
    else std::cout << res.table;
    if (!res.message.empty()) std::cerr << "htq " << cmd << ": " << res.message << "\n";
    return res.exit_code;
  } catch (const Error& e) {
    std::cerr << "htq " << cmd << ": " << e.what() << "\n";
    return cli::exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "htq " << cmd << ": " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heavy-traffic queue experiments"};
  app.set_version_flag("--version", htq::cli::kVersion);
  app.require_subcommand(1);

  std::string config, out, format = "table";
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string chosen;

  for (const char* name : {"region", "bounds", "simulate", "sweep", "verify"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config,-c", config, "experiment JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--jobs,-j", jobs, "worker threads (0 = hardware)")->check(CLI::NonNegativeNumber);
    sub->add_option("--out,-o", out, "output directory");
    sub->add_option("--format", format, "stdout format")->check(CLI::IsMember({"table", "json", "csv"}));
    sub->callback([&chosen, name] { chosen = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : htq::cli::config_error;
  }
  return run(chosen, config, seed, jobs, out, format);
}
