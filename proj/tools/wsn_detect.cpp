// wsn-detect: batch front-end for the detection experiments.
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <string>

#include "CLI11.hpp"

#include "wsnd/cli.hpp"

int main(int argc, char** argv) {
  using Command = std::function<wsnd::RunManifest(const std::string&, const std::filesystem::path&,
                                                  const wsnd::CommandOptions&)>;
  const std::map<std::string, std::pair<Command, std::string>> commands{
      {"croc", {wsnd::cmd_croc, "Empirical and asymptotic complementary ROC curves"}},
      {"pmd-vs-snr", {wsnd::cmd_pmd_vs_snr, "Miss-detection probability over an SNR sweep"}},
      {"theory-check", {wsnd::cmd_theory_check, "Asymptotic laws against Gaussian-approximation samples"}},
      {"netsim", {wsnd::cmd_netsim, "Communication resources of each cooperation strategy"}},
      {"deflection", {wsnd::cmd_deflection, "Deflection coefficients over an SNR sweep"}},
  };

  CLI::App app{"Distributed detection of a stochastic source by a wireless sensor network"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int jobs = wsnd::default_jobs();
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, entry] : commands) {
    CLI::App* sub = app.add_subcommand(name, entry.second);
    sub->add_option("--config", config_path, "JSON configuration file")->required();
    sub->add_option("--out", out_dir, "Output directory")->required();
    sub->add_option("--seed", seed, "Override the configured seed");
    sub->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    subs[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return wsnd::kExitConfig;
  }

  for (const auto& [name, sub] : subs) {
    if (!sub->parsed()) continue;
    wsnd::CommandOptions opt;
    opt.jobs = jobs;
    if (sub->count("--seed")) opt.seed = seed;
    try {
      const wsnd::RunManifest m = commands.at(name).first(config_path, out_dir, opt);
      std::fprintf(stderr, "%s: wrote %zu files to %s (excluded trials: %d)\n", name.c_str(),
                   m.outputs.size() + 1, out_dir.c_str(), m.excluded_trials);
      return wsnd::kExitOk;
    } catch (const wsnd::ConfigError& e) {
      std::fprintf(stderr, "configuration error: %s\n", e.what());
      return wsnd::kExitConfig;
    } catch (const wsnd::NumericalError& e) {
      std::fprintf(stderr, "numerical error: %s\n", e.what());
      return wsnd::kExitNumerical;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return 1;
    }
  }
  return wsnd::kExitConfig;
}
