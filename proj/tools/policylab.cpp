// policylab: build toy control victims, run budget-metered extraction
// attacks and baselines against them, and run the statistical analyses.
// Exit codes: 0 success, 1 usage/config errors, 2 runtime failures.

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lab/commands.hpp"
#include "lab/config.hpp"
#include "lab/errors.hpp"

namespace {

struct Cli {
  std::string config_path;
  std::string defense;
  std::string baseline;
  std::string experiment;
  std::string seeds;
};

lab::RunOptions make_options(const Cli& cli) {
  lab::RunOptions opt;
  if (!cli.defense.empty()) opt.defense = (cli.defense == "on");
  if (!cli.baseline.empty()) opt.baseline = cli.baseline;
  if (!cli.experiment.empty()) opt.experiment = cli.experiment;
  if (!cli.seeds.empty()) opt.seeds = lab::parse_seed_range(cli.seeds);
  return opt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale laboratory for black-box policy extraction"};
  app.set_version_flag("--version", std::string(lab::kToolVersion));
  app.require_subcommand(1);

  Cli build_cli;
  CLI::App* build = app.add_subcommand(
      "build-victim", "train a victim policy and store its bundle");
  build->add_option("config", build_cli.config_path, "experiment config file")
      ->required();

  Cli attack_cli;
  CLI::App* attack = app.add_subcommand(
      "attack", "run the extraction attack or a baseline against a victim");
  attack->add_option("config", attack_cli.config_path, "experiment config file")
      ->required();
  attack->add_option("--defense", attack_cli.defense,
                     "override defense.enabled (on|off)")
      ->check(CLI::IsMember({"on", "off"}));
  attack
      ->add_option("--baseline", attack_cli.baseline,
                   "override attack.baseline")
      ->check(CLI::IsMember(
          {"none", "random1", "random10", "random100", "reffit"}));
  attack->add_option("--seeds", attack_cli.seeds,
                     "inclusive seed range a..b; fans out into seed-<s>/");

  Cli analyze_cli;
  CLI::App* analyze = app.add_subcommand(
      "analyze", "run a statistical experiment against a victim");
  analyze
      ->add_option("config", analyze_cli.config_path, "experiment config file")
      ->required();
  analyze
      ->add_option("--experiment", analyze_cli.experiment,
                   "override analysis.experiment")
      ->check(CLI::IsMember({"correlation", "sweep"}));
  analyze->add_option("--seeds", analyze_cli.seeds,
                      "inclusive seed range a..b; fans out into seed-<s>/");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (build->parsed()) {
      return lab::cmd_build_victim(build_cli.config_path);
    }
    if (attack->parsed()) {
      return lab::cmd_attack(attack_cli.config_path, make_options(attack_cli));
    }
    return lab::cmd_analyze(analyze_cli.config_path,
                            make_options(analyze_cli));
  } catch (const lab::config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const lab::error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
