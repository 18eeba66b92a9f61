#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "awkd/runner.hpp"

namespace {

enum Exit : int { kPass = 0, kAssertion = 1, kConfig = 2, kRuntime = 3 };

bool is_config_error(awkd::ErrorCode code) {
  using awkd::ErrorCode;
  return code == ErrorCode::ParseError || code == ErrorCode::UnresolvedReference ||
         code == ErrorCode::InfeasibleBounds || code == ErrorCode::IoError;
}

void print_issues(const awkd::ConfigError& e) {
  for (const auto& issue : e.issues()) std::cerr << "config error: " << issue << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive multi-teacher weighting experiments", "awkd"};
  app.set_version_flag("--version", std::string(awkd::kVersion));
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool quiet = false;
  std::string config_path;

  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", config_path, "Config file (JSON)")->required();
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--out", out, "Output directory (default: config output, $AWKD_OUT, awkd-out)");
  run->add_flag("--quiet", quiet, "Suppress the per-assertion report");

  auto* validate = app.add_subcommand("validate", "Parse and check a config file without running it");
  validate->add_option("config", config_path, "Config file (JSON)")->required();
  validate->add_option("--seed", seed, "Override the config seed");
  validate->add_flag("--quiet", quiet, "Print nothing on success");

  auto* list = app.add_subcommand("list-kinds", "List the experiment kinds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kPass : kConfig;
  }

  if (list->parsed()) {
    for (auto k : awkd::all_kinds()) std::cout << awkd::to_string(k) << '\n';
    return kPass;
  }

  awkd::ExperimentConfig cfg;
  try {
    cfg = awkd::parse_config(config_path, seed);
  } catch (const awkd::ConfigError& e) {
    print_issues(e);
    return kConfig;
  } catch (const awkd::Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return is_config_error(e.code()) ? kConfig : kRuntime;
  }

  if (validate->parsed()) {
    if (!quiet) std::cout << "ok " << awkd::to_string(cfg.kind) << ' ' << cfg.hash << '\n';
    return kPass;
  }

  try {
    const auto record = awkd::run_experiment(cfg);
    awkd::emit_summary(record, awkd::resolve_output_dir(out, cfg), std::cout, quiet);
    return record.all_pass() ? kPass : kAssertion;
  } catch (const awkd::Error& e) {
    std::cerr << "runtime error (" << awkd::to_string(e.code()) << "): " << e.what() << '\n';
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return kRuntime;
  }
}
