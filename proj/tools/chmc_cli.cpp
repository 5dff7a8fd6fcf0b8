// Command-line front end: run / validate / table.
//
// Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime
// failure (I/O, numerical breakdown).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chmc/experiment.hpp"
#include "chmc/simd/kernels.hpp"

namespace {

constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

bool load_spec(const std::string& path, chmc::ValidationResult& out) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot open config " << path << "\n";
    return false;
  }
  std::stringstream buf;
  buf << in.rdbuf();
  const auto base = std::filesystem::absolute(path).parent_path();
  out = chmc::validate_spec(buf.str(), base);
  if (!out.ok()) {
    std::cerr << "invalid config " << path << ":\n";
    for (const auto& e : out.errors) std::cerr << "  " << e << "\n";
    return false;
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conservative and leapfrog Hamiltonian Monte Carlo experiments"};
  app.set_version_flag("--version", chmc::library_version());
  app.require_subcommand(1);

  std::string config;
  std::size_t workers = 0;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "run every method/chain in a config");
  run->add_option("config", config, "JSON run specification")->required();
  run->add_option("-w,--workers", workers, "parallel chains (0 = one per hardware thread)");
  run->add_flag("-q,--quiet", quiet, "suppress per-chain progress lines");

  auto* validate = app.add_subcommand("validate", "check a config and print the resolved form");
  validate->add_option("config", config, "JSON run specification")->required();

  std::vector<std::string> dirs;
  auto* table = app.add_subcommand("table", "print summary.csv of finished runs as one table");
  table->add_option("dirs", dirs, "output directories of one or more runs")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*validate) {
      chmc::ValidationResult v;
      if (!load_spec(config, v)) return kConfigError;
      std::cout << chmc::spec_to_json(*v.spec) << "\n";
      return 0;
    }
    if (*run) {
      chmc::ValidationResult v;
      if (!load_spec(config, v)) return kConfigError;
      chmc::RunOptions opts;
      opts.workers = workers;
      opts.log = quiet ? nullptr : &std::cerr;
      if (!quiet) {
        std::cerr << "simd backend: " << chmc::simd::backend_name(chmc::simd::active_backend())
                  << "\n";
      }
      chmc::run_experiment(*v.spec, opts);
      std::cout << "wrote " << v.spec->output_dir.string() << "\n";
      return 0;
    }
    if (*table) {
      chmc::print_table(std::vector<std::filesystem::path>(dirs.begin(), dirs.end()), std::cout);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kConfigError;
}
